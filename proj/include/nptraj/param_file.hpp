#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nptraj/tensor.hpp"

namespace nptraj {

// Flat binary parameter file, all integers and floats little-endian:
//
//   "NPW1"                      magic, 4 bytes
//   u32 kind_tag
//   u32 dim_count, u64 dims[dim_count]
//   repeated until EOF:
//     u32 name_len, name bytes, u32 rank, u64 shape[rank], f64 payload[numel]
struct ParamFile {
  std::uint32_t kind_tag = 0;
  std::vector<std::uint64_t> dims;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
};

std::string encode_param_file(const ParamFile& file);
ParamFile decode_param_file(const std::string& bytes);

void write_param_file(const std::filesystem::path& path, const ParamFile& file);
ParamFile read_param_file(const std::filesystem::path& path);

}  // namespace nptraj
