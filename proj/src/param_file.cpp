#include "nptraj/param_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nptraj {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'W', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError("parameter file truncated while reading " + std::string(what) + " at byte " +
                       std::to_string(pos_));
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& ParamFile::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ContractError("parameter file has no tensor named '" + name + "'");
}

std::string encode_param_file(const ParamFile& file) {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, file.kind_tag);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(file.dims.size()));
  for (auto d : file.dims) put_le<std::uint64_t>(out, d);
  for (const auto& [name, tensor] : file.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
    for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
    for (double v : tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamFile decode_param_file(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a parameter file: bad magic");
  }
  Reader r(bytes);
  r.get_bytes(4, "magic");
  ParamFile file;
  file.kind_tag = r.get<std::uint32_t>("kind tag");
  const auto n_dims = r.get<std::uint32_t>("dim count");
  for (std::uint32_t i = 0; i < n_dims; ++i) file.dims.push_back(r.get<std::uint64_t>("dim table"));
  while (!r.done()) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.get_bytes(name_len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("shape")));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
    file.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return file;
}

void write_param_file(const std::filesystem::path& path, const ParamFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = encode_param_file(file);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_param_file(ss.str());
}

}  // namespace nptraj
