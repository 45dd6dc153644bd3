#include <cstring>
#include <filesystem>

#include "nptraj/param_file.hpp"
#include "test_util.hpp"

using namespace nptraj;

namespace {

ParamFile sample_file() {
  ParamFile f;
  f.kind_tag = 2;
  f.dims = {15, 2, 20};
  f.tensors.emplace_back("enc.w", Tensor::matrix(2, 3, {1, -2, 3.25, 1e-300, -0.0, 6}));
  f.tensors.emplace_back("enc.b", Tensor::vector({0.1}));
  return f;
}

}  // namespace

TEST(ParamFile, RoundTripIsExact) {
  const ParamFile f = sample_file();
  const ParamFile g = decode_param_file(encode_param_file(f));
  EXPECT_EQ(g.kind_tag, 2u);
  EXPECT_EQ(g.dims, f.dims);
  ASSERT_EQ(g.tensors.size(), 2u);
  EXPECT_EQ(g.tensors[0].first, "enc.w");
  EXPECT_EQ(g.get("enc.w").shape(), (Shape{2, 3}));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(std::memcmp(&g.get("enc.w").data()[i], &f.tensors[0].second.data()[i], sizeof(double)), 0);
  }
  EXPECT_EQ(encode_param_file(g), encode_param_file(f));
}

TEST(ParamFile, Layout) {
  const std::string bytes = encode_param_file(sample_file());
  EXPECT_EQ(bytes.substr(0, 4), "NPW1");
  std::uint32_t tag = 0;
  std::memcpy(&tag, bytes.data() + 4, 4);
  EXPECT_EQ(tag, 2u);
  // header 4+4+4+3*8, then per tensor 4+name+4+8*rank+8*numel
  EXPECT_EQ(bytes.size(), 36u + (4 + 5 + 4 + 16 + 48) + (4 + 5 + 4 + 8 + 8));
}

TEST(ParamFile, TruncationIsParseError) {
  const std::string bytes = encode_param_file(sample_file());
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() - 3}) {
    EXPECT_THROW(decode_param_file(bytes.substr(0, cut)), ParseError) << cut;
  }
}

TEST(ParamFile, BadMagicIsParseError) {
  std::string bytes = encode_param_file(sample_file());
  bytes[0] = 'X';
  EXPECT_THROW(decode_param_file(bytes), ParseError);
}

TEST(ParamFile, MissingTensorName) {
  EXPECT_THROW(sample_file().get("nope"), ContractError);
}

TEST(ParamFile, DiskRoundTripAndMissingFile) {
  const auto path = std::filesystem::temp_directory_path() / "nptraj_param_file_test.npw";
  write_param_file(path, sample_file());
  EXPECT_EQ(encode_param_file(read_param_file(path)), encode_param_file(sample_file()));
  std::filesystem::remove(path);
  EXPECT_THROW(read_param_file(path), IoError);
}
