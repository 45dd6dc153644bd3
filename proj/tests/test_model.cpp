#include <algorithm>
#include <filesystem>

#include "nptraj/model.hpp"
#include "nptraj/ops.hpp"
#include "nptraj/param_file.hpp"
#include "test_util.hpp"

using namespace nptraj;

namespace {

ModelDims small_dims(std::size_t window = 5) {
  ModelDims d;
  d.window = window;
  d.hidden = 8;
  d.latent = 4;
  d.representation = 8;
  d.attention = 8;
  d.decoder_hidden = 8;
  return d;
}

Episode lane_episode(std::uint64_t seed) { return synth_lane_change(1, seed, {}, 5)[0]; }

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(i);
  return v;
}

Tensor eps_for(const NpFamilyModel& m, std::uint64_t seed) {
  Rng rng(seed);
  return Tensor::vector(rng.normal_vector(m.dims().latent));
}

}  // namespace

TEST(Model, KindNames) {
  EXPECT_EQ(parse_kind("ARNP"), ModelKind::kArnp);
  EXPECT_EQ(parse_kind("lstm"), ModelKind::kLstmPoint);
  EXPECT_STREQ(kind_name(ModelKind::kAnp), "anp");
  EXPECT_THROW(parse_kind("gp"), ContractError);
}

TEST(Model, ComponentsFollowKind) {
  const auto np = NpFamilyModel::init(ModelKind::kNp, small_dims(), 0);
  const auto anp = NpFamilyModel::init(ModelKind::kAnp, small_dims(), 0);
  const auto arnp = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 0);
  const auto lstm = NpFamilyModel::init(ModelKind::kLstmPoint, small_dims(), 0);
  EXPECT_FALSE(np.recurrent() || np.attentive());
  EXPECT_TRUE(anp.attentive() && !anp.recurrent());
  EXPECT_TRUE(arnp.attentive() && arnp.recurrent());
  EXPECT_TRUE(lstm.recurrent() && !lstm.probabilistic());
  EXPECT_LT(np.param_count(), anp.param_count());
  EXPECT_LT(anp.param_count(), arnp.param_count());
  EXPECT_THROW(np.rnn_encode_windows(lane_episode(1).windows), ContractError);
}

TEST(Model, InitIsDeterministic) {
  const auto a = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 5).param_values();
  const auto b = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 5).param_values();
  const auto c = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 6).param_values();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(test::max_abs_diff(a[i], b[i]), 0.0);
  EXPECT_GT(test::max_abs_diff(a[0], c[0]), 0.0);
}

TEST(Elbo, KlVanishesWhenContextsEqualTargets) {
  for (auto kind : {ModelKind::kNp, ModelKind::kAnp, ModelKind::kArnp}) {
    const auto model = NpFamilyModel::init(kind, small_dims(), 3);
    const Episode e = lane_episode(4);
    const CtSplit split{range(0, e.length()), range(0, e.length())};
    EXPECT_EQ(model.elbo(e, split, eps_for(model, 1)).kl.item(), 0.0) << kind_name(kind);
  }
}

TEST(Elbo, KlPositiveForShortPrefix) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 3);
  const Episode e = lane_episode(5);
  const ElboTerms t = model.elbo(e, prefix_split(e.length(), 2), eps_for(model, 2));
  EXPECT_GT(t.kl.item(), 0.0);
  EXPECT_NEAR(t.loss.item(), t.recon_nll.item() + t.kl.item(), 1e-12);
}

TEST(Elbo, ContractErrors) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 3);
  const Episode e = lane_episode(6);
  EXPECT_THROW(model.elbo(e, CtSplit{{0, 9}, {0, 1, 2}}, eps_for(model, 1)), ContractError);
  EXPECT_THROW(model.elbo(e, CtSplit{{0}, {}}, eps_for(model, 1)), ContractError);
  EXPECT_THROW(model.elbo(e, prefix_split(e.length(), 2), Tensor::vector({0.0})), DimensionError);
  const auto lstm = NpFamilyModel::init(ModelKind::kLstmPoint, small_dims(), 3);
  EXPECT_THROW(lstm.elbo(e, prefix_split(e.length(), 2), eps_for(model, 1)), ContractError);
}

TEST(Predict, ContextOrderDoesNotMatter) {
  const Episode e = lane_episode(7);
  const std::vector<std::size_t> context{0, 3, 5, 9, 12};
  std::vector<std::size_t> shuffled{9, 0, 12, 5, 3};
  const auto targets = range(0, e.length());
  for (auto kind : {ModelKind::kNp, ModelKind::kAnp}) {
    const auto model = NpFamilyModel::init(kind, small_dims(), 8);
    const std::vector<Tensor> eps{eps_for(model, 1), eps_for(model, 2)};
    const Prediction a = model.predict_with_eps(e, context, targets, eps);
    const Prediction b = model.predict_with_eps(e, shuffled, targets, eps);
    EXPECT_LT(test::max_abs_diff(a.mean, b.mean), 1e-9) << kind_name(kind);
    EXPECT_LT(test::max_abs_diff(a.std, b.std), 1e-9) << kind_name(kind);
  }
}

TEST(Predict, ArnpDependsOnlyOnObservedWindows) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 9);
  Episode e = lane_episode(8);
  const std::vector<std::size_t> context{0, 1, 2}, targets{10, 11};
  const std::vector<Tensor> eps{eps_for(model, 3)};
  const Prediction before = model.predict_with_eps(e, context, targets, eps);
  // Perturb windows at steps that are neither contexts nor targets.
  auto w = e.windows.mutable_data();
  const std::size_t stride = e.window_length() * e.input_dim();
  for (std::size_t t = 20; t < e.length(); ++t) {
    for (std::size_t k = 0; k < stride; ++k) w[t * stride + k] += 5.0;
  }
  const Prediction after = model.predict_with_eps(e, context, targets, eps);
  EXPECT_EQ(test::max_abs_diff(before.mean, after.mean), 0.0);
  // A target window change does show up.
  for (std::size_t k = 0; k < stride; ++k) w[10 * stride + k] += 5.0;
  EXPECT_GT(test::max_abs_diff(before.mean, model.predict_with_eps(e, context, targets, eps).mean), 0.0);
}

TEST(Predict, SingleSampleIsTheDecoderOutput) {
  const auto model = NpFamilyModel::init(ModelKind::kAnp, small_dims(), 10);
  const Episode e = lane_episode(9);
  const std::vector<std::size_t> context{0, 1}, targets{2, 3};
  const Tensor eps = eps_for(model, 4);
  const Prediction p = model.predict_with_eps(e, context, targets, std::vector<Tensor>{eps});
  const Tensor h_c = model.encode_inputs(e.windows_at(context));
  const Tensor h_t = model.encode_inputs(e.windows_at(targets));
  const Tensor pairs = model.encode_pairs(h_c, e.targets_at(context));
  const DiagonalGaussian q = model.latent_from_summary(pairs);
  const DiagonalGaussian g =
      model.decode(sample(q, eps), model.cross_attention_summary(h_c, pairs, h_t), h_t);
  EXPECT_EQ(test::max_abs_diff(p.mean, g.mean), 0.0);
  EXPECT_EQ(test::max_abs_diff(p.std, g.std), 0.0);
}

TEST(Predict, IdenticalSamplesCollapseMixture) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 11);
  const Episode e = lane_episode(10);
  const std::vector<std::size_t> context{0, 1, 2}, targets = range(0, 8);
  const Tensor eps = eps_for(model, 5);
  const Prediction one = model.predict_with_eps(e, context, targets, std::vector<Tensor>{eps});
  const Prediction three = model.predict_with_eps(e, context, targets, std::vector<Tensor>{eps, eps, eps});
  EXPECT_LT(test::max_abs_diff(one.mean, three.mean), 1e-12);
  EXPECT_LT(test::max_abs_diff(one.std, three.std), 1e-12);
}

TEST(Predict, MixtureStdCoversSpreadOfMeans) {
  const auto model = NpFamilyModel::init(ModelKind::kNp, small_dims(), 12);
  const Episode e = lane_episode(11);
  const std::vector<std::size_t> context{0}, targets{4};
  std::vector<Tensor> eps;
  for (std::uint64_t s = 0; s < 6; ++s) eps.push_back(eps_for(model, s));
  const Prediction mix = model.predict_with_eps(e, context, targets, eps);
  double mean = 0.0, second = 0.0;
  for (const auto& v : eps) {
    const Prediction p = model.predict_with_eps(e, context, targets, std::vector<Tensor>{v});
    mean += p.mean[0] / 6.0;
    second += (p.std[0] * p.std[0] + p.mean[0] * p.mean[0]) / 6.0;
  }
  EXPECT_NEAR(mix.mean[0], mean, 1e-12);
  EXPECT_NEAR(mix.std[0], std::sqrt(second - mean * mean), 1e-9);
}

TEST(Predict, StdFloorAndEmptyContext) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 13);
  const Episode e = lane_episode(12);
  Rng rng(1);
  const Prediction p = model.predict(e, {}, range(0, e.length()), 4, rng);
  for (double s : p.std.data()) EXPECT_GE(s, kMinStd);
  EXPECT_THROW(model.predict(e, {}, range(0, 3), 0, rng), ContractError);
}

TEST(Predict, PointModelReportsUnitStd) {
  const auto model = NpFamilyModel::init(ModelKind::kLstmPoint, small_dims(), 14);
  const Episode e = lane_episode(13);
  Rng rng(1);
  const Prediction p = model.predict(e, range(0, 3), range(0, 10), 16, rng);
  EXPECT_EQ(p.mean.shape(), (Shape{10, 2}));
  for (double s : p.std.data()) EXPECT_EQ(s, 1.0);
  EXPECT_GT(model.point_loss(e, range(0, 10)).item(), 0.0);
}

TEST(ModelFile, RoundTrip) {
  const auto model = NpFamilyModel::init(ModelKind::kArnp, small_dims(), 15);
  const auto episodes = synth_lane_change(3, 14, {}, 5);
  const Normalizer norm = Normalizer::fit(episodes);
  const auto path = std::filesystem::temp_directory_path() / "nptraj_model_roundtrip.npw";
  ModelFile::save(path, model, norm);
  const ModelFile::Loaded loaded = ModelFile::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.model.kind(), ModelKind::kArnp);
  EXPECT_EQ(loaded.model.dims(), model.dims());
  EXPECT_EQ(ModelFile::encode(loaded.model, loaded.normalizer), ModelFile::encode(model, norm));
  const std::vector<Tensor> eps{eps_for(model, 1)};
  const auto targets = range(0, 6);
  const std::vector<std::size_t> context{0, 1};
  EXPECT_EQ(test::max_abs_diff(model.predict_with_eps(episodes[0], context, targets, eps).mean,
                               loaded.model.predict_with_eps(episodes[0], context, targets, eps).mean),
            0.0);
}

TEST(ModelFile, ShapeMismatchIsParseError) {
  auto model = NpFamilyModel::init(ModelKind::kNp, small_dims(), 16);
  const std::string bytes = ModelFile::encode(model, Normalizer::identity(kLaneFeatureDim, kLaneTargetDim));
  ParamFile f = decode_param_file(bytes);
  f.tensors[0].second = Tensor({1}, 0.0);
  const auto path = std::filesystem::temp_directory_path() / "nptraj_model_bad.npw";
  write_param_file(path, f);
  EXPECT_THROW(ModelFile::load(path), ParseError);
  std::filesystem::remove(path);
}
