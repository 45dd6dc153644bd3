#pragma once

#include <stdexcept>
#include <string>

namespace nptraj {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not conform to an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Operand shapes that the suffix broadcast rule cannot reconcile.
class BroadcastError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

// Values outside an operation's mathematical domain (e.g. log of a nonpositive number).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nptraj
