#include "nptraj/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>

#include "nptraj/ops.hpp"
#include "nptraj/param_file.hpp"

namespace nptraj {

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kNp: return "np";
    case ModelKind::kAnp: return "anp";
    case ModelKind::kArnp: return "arnp";
    case ModelKind::kLstmPoint: return "lstm";
  }
  return "?";
}

ModelKind parse_kind(const std::string& text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (t == "np") return ModelKind::kNp;
  if (t == "anp") return ModelKind::kAnp;
  if (t == "arnp") return ModelKind::kArnp;
  if (t == "lstm" || t == "lstm_point") return ModelKind::kLstmPoint;
  throw ContractError("unknown model kind '" + text + "' (expected np, anp, arnp or lstm)");
}

std::vector<std::uint64_t> ModelDims::to_table() const {
  return {input_dim, output_dim, window, hidden, latent, representation, attention, decoder_hidden};
}

ModelDims ModelDims::from_table(std::span<const std::uint64_t> table) {
  if (table.size() != 8) throw ParseError("model dim table has " + std::to_string(table.size()) + " entries, expected 8");
  for (auto v : table) {
    if (v == 0) throw ParseError("model dim table contains a zero dimension");
  }
  ModelDims d;
  d.input_dim = table[0];
  d.output_dim = table[1];
  d.window = table[2];
  d.hidden = table[3];
  d.latent = table[4];
  d.representation = table[5];
  d.attention = table[6];
  d.decoder_hidden = table[7];
  return d;
}

NpFamilyModel NpFamilyModel::init(ModelKind kind, const ModelDims& dims, std::uint64_t seed) {
  for (auto v : dims.to_table()) {
    if (v == 0) throw ContractError("model dims must be positive");
  }
  Rng rng(seed);
  NpFamilyModel m;
  m.kind_ = kind;
  m.dims_ = dims;
  if (kind == ModelKind::kArnp || kind == ModelKind::kLstmPoint) {
    m.window_encoder_ = nn::LstmCell::init(dims.input_dim, dims.hidden, rng);
  }
  const std::size_t dh = m.encoded_dim();
  if (kind == ModelKind::kLstmPoint) {
    m.decoder_ = nn::Mlp::init({dims.hidden, dims.output_dim}, rng);
    return m;
  }
  m.pair_encoder_ = nn::Mlp::init({dh + dims.output_dim, 32, 64, dims.representation}, rng);
  m.latent_head_ = nn::Mlp::init({dims.representation, dims.representation, 2 * dims.latent}, rng);
  std::size_t summary = dims.representation;
  if (kind != ModelKind::kNp) {
    m.attention_ = nn::AttentionHead::init(dh, dims.representation, dims.attention, rng);
    summary = dims.attention;
  }
  m.decoder_ = nn::Mlp::init({dims.latent + summary + dh, dims.decoder_hidden, dims.decoder_hidden, 2 * dims.output_dim}, rng);
  return m;
}

std::size_t NpFamilyModel::encoded_dim() const { return recurrent() ? dims_.hidden : dims_.input_dim; }

std::vector<nn::ParamRef> NpFamilyModel::params() {
  std::vector<nn::ParamRef> out;
  if (window_encoder_) window_encoder_->collect("window_encoder", out);
  if (pair_encoder_) pair_encoder_->collect("pair_encoder", out);
  if (latent_head_) latent_head_->collect("latent_head", out);
  if (attention_) attention_->collect("attention", out);
  decoder_.collect("decoder", out);
  return out;
}

std::vector<Tensor> NpFamilyModel::param_values() const {
  NpFamilyModel copy = *this;
  std::vector<Tensor> out;
  for (const auto& p : copy.params()) out.push_back(*p.tensor);
  return out;
}

std::size_t NpFamilyModel::param_count() const {
  std::size_t n = 0;
  for (const auto& t : param_values()) n += t.size();
  return n;
}

NpFamilyModel NpFamilyModel::attach(Tape& tape) const {
  NpFamilyModel copy = *this;
  for (auto& p : copy.params()) *p.tensor = tape.watch(*p.tensor);
  return copy;
}

Tensor NpFamilyModel::rnn_encode_windows(const Tensor& windows) const {
  if (!window_encoder_) throw ContractError(std::string("rnn_encode_windows: model kind ") + kind_name(kind_) + " has no window encoder");
  if (windows.rank() != 3 || windows.dim(2) != dims_.input_dim) {
    throw DimensionError("rnn_encode_windows: windows " + shape_str(windows.shape()) + " do not match input dim " +
                         std::to_string(dims_.input_dim));
  }
  const std::size_t n = windows.dim(0), L = windows.dim(1), d = windows.dim(2);
  const auto w = windows.data();
  nn::LstmState state = window_encoder_->zero_state(n);
  std::vector<double> step(n * d);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t t = 0; t < n; ++t) std::copy_n(w.begin() + static_cast<std::ptrdiff_t>((t * L + i) * d), d, step.begin() + static_cast<std::ptrdiff_t>(t * d));
    state = window_encoder_->step(Tensor({n, d}, step), state);
  }
  return state.h;
}

Tensor NpFamilyModel::encode_inputs(const Tensor& windows) const {
  if (recurrent()) return rnn_encode_windows(windows);
  if (windows.rank() != 3 || windows.dim(2) != dims_.input_dim) {
    throw DimensionError("encode_inputs: windows " + shape_str(windows.shape()) + " do not match input dim " +
                         std::to_string(dims_.input_dim));
  }
  const std::size_t n = windows.dim(0), L = windows.dim(1), d = windows.dim(2);
  const auto w = windows.data();
  std::vector<double> out(n * d);
  for (std::size_t t = 0; t < n; ++t) std::copy_n(w.begin() + static_cast<std::ptrdiff_t>((t * L + L - 1) * d), d, out.begin() + static_cast<std::ptrdiff_t>(t * d));
  return Tensor({n, d}, std::move(out));
}

Tensor NpFamilyModel::encode_pairs(const Tensor& inputs, const Tensor& ys) const {
  if (!pair_encoder_) throw ContractError("encode_pairs: model kind lstm has no pair encoder");
  if (inputs.rank() != 2 || ys.rank() != 2 || inputs.dim(0) != ys.dim(0)) {
    throw DimensionError("encode_pairs: inputs " + shape_str(inputs.shape()) + " and outputs " + shape_str(ys.shape()) +
                         " disagree");
  }
  return pair_encoder_->forward(ops::concat_last({inputs, ys}));
}

DiagonalGaussian NpFamilyModel::latent_prior() const { return standard_normal({dims_.latent}); }

DiagonalGaussian NpFamilyModel::latent_from_summary(const Tensor& encoded_pairs) const {
  if (!latent_head_) throw ContractError("latent_from_summary: model kind lstm has no latent path");
  const Tensor summary = ops::repeat_rows(ops::mean(encoded_pairs, 0), 1);
  const Tensor raw = ops::reshape(latent_head_->forward(summary), {2 * dims_.latent});
  return gaussian_from_raw(ops::slice_last(raw, 0, dims_.latent), ops::slice_last(raw, dims_.latent, 2 * dims_.latent));
}

Tensor NpFamilyModel::cross_attention_summary(const Tensor& context_inputs, const Tensor& context_pairs,
                                              const Tensor& target_inputs) const {
  if (!attention_) throw ContractError(std::string("cross_attention_summary: model kind ") + kind_name(kind_) + " has no attention");
  if (context_inputs.rank() != 2 || context_inputs.dim(0) == 0) throw ContractError("cross_attention_summary: empty context");
  return attention_->forward(target_inputs, context_inputs, context_pairs);
}

Tensor NpFamilyModel::deterministic_summary(const Tensor& context_inputs, const Tensor& context_pairs,
                                            const Tensor& target_inputs) const {
  if (attention_) return cross_attention_summary(context_inputs, context_pairs, target_inputs);
  return ops::repeat_rows(ops::mean(context_pairs, 0), target_inputs.dim(0));
}

DiagonalGaussian NpFamilyModel::decode(const Tensor& z, const Tensor& r_star, const Tensor& target_inputs) const {
  if (!probabilistic()) throw ContractError("decode: model kind lstm uses a point head");
  const std::size_t T = target_inputs.dim(0);
  if (z.size() != dims_.latent) throw DimensionError("decode: z has shape " + shape_str(z.shape()));
  if (r_star.rank() != 2 || r_star.dim(0) != T) {
    throw DimensionError("decode: r* " + shape_str(r_star.shape()) + " does not match " + std::to_string(T) + " targets");
  }
  const Tensor zz = ops::repeat_rows(ops::reshape(z, {dims_.latent}), T);
  const Tensor out = decoder_.forward(ops::concat_last({zz, r_star, target_inputs}));
  const std::size_t dy = dims_.output_dim;
  return gaussian_from_raw(ops::slice_last(out, 0, dy), ops::slice_last(out, dy, 2 * dy));
}

namespace {

// Position of each context index within the target list.
std::vector<std::size_t> context_positions(std::span<const std::size_t> context, std::span<const std::size_t> targets) {
  std::map<std::size_t, std::size_t> where;
  for (std::size_t i = 0; i < targets.size(); ++i) where.emplace(targets[i], i);
  std::vector<std::size_t> pos;
  for (auto c : context) {
    auto it = where.find(c);
    if (it == where.end()) throw ContractError("context index " + std::to_string(c) + " is not among the targets");
    pos.push_back(it->second);
  }
  return pos;
}

}  // namespace

ElboTerms NpFamilyModel::elbo(const Episode& episode, const CtSplit& split, const Tensor& eps) const {
  if (!probabilistic()) throw ContractError("elbo: model kind lstm is trained by squared error");
  if (split.target.empty()) throw ContractError("elbo: empty target set");
  if (eps.size() != dims_.latent) throw DimensionError("elbo: eps has shape " + shape_str(eps.shape()));
  const auto pos = context_positions(split.context, split.target);
  const std::size_t T = split.target.size();

  const Tensor h_t = encode_inputs(episode.windows_at(split.target));
  const Tensor y_t = episode.targets_at(split.target);
  const Tensor pairs_t = encode_pairs(h_t, y_t);
  const DiagonalGaussian q_t = latent_from_summary(pairs_t);

  DiagonalGaussian q_c = latent_prior();
  Tensor r_star({T, attentive() ? dims_.attention : dims_.representation}, 0.0);
  if (!pos.empty()) {
    const Tensor h_c = ops::gather_rows(h_t, pos);
    const Tensor pairs_c = ops::gather_rows(pairs_t, pos);
    q_c = latent_from_summary(pairs_c);
    r_star = deterministic_summary(h_c, pairs_c, h_t);
  }

  const Tensor z = sample(q_t, ops::reshape(eps, {dims_.latent}));
  const DiagonalGaussian likelihood = decode(z, r_star, h_t);
  const Tensor recon = ops::scale_shift(log_prob(likelihood, y_t), -1.0 / static_cast<double>(T));
  const Tensor kl = kl_divergence(q_t, q_c);
  return {ops::add(recon, kl), recon, kl};
}

Tensor NpFamilyModel::point_loss(const Episode& episode, std::span<const std::size_t> targets) const {
  if (kind_ != ModelKind::kLstmPoint) throw ContractError("point_loss: only the lstm point predictor uses squared error");
  if (targets.empty()) throw ContractError("point_loss: empty target set");
  const Tensor pred = decoder_.forward(encode_inputs(episode.windows_at(targets)));
  const Tensor err = ops::sub(pred, episode.targets_at(targets));
  return ops::scale_shift(ops::sum_all(ops::square(err)), 1.0 / static_cast<double>(targets.size()));
}

Prediction NpFamilyModel::predict(const Episode& episode, std::span<const std::size_t> context,
                                  std::span<const std::size_t> targets, std::size_t n_samples, Rng& rng) const {
  if (n_samples == 0) throw ContractError("predict: n_samples must be >= 1");
  std::vector<Tensor> eps;
  if (probabilistic()) {
    for (std::size_t s = 0; s < n_samples; ++s) eps.push_back(Tensor::vector(rng.normal_vector(dims_.latent)));
  } else {
    eps.emplace_back(Shape{dims_.latent}, 0.0);
  }
  return predict_with_eps(episode, context, targets, eps);
}

Prediction NpFamilyModel::predict_with_eps(const Episode& episode, std::span<const std::size_t> context,
                                           std::span<const std::size_t> targets, std::span<const Tensor> eps) const {
  if (targets.empty()) throw ContractError("predict: empty target set");
  if (eps.empty()) throw ContractError("predict: no latent samples");
  const std::size_t T = targets.size(), dy = dims_.output_dim;
  const Tensor h_t = encode_inputs(episode.windows_at(targets)).detach();

  if (!probabilistic()) {
    return {decoder_.forward(h_t).detach(), Tensor({T, dy}, 1.0)};
  }

  DiagonalGaussian q = latent_prior();
  Tensor r_star({T, attentive() ? dims_.attention : dims_.representation}, 0.0);
  if (!context.empty()) {
    const Tensor h_c = encode_inputs(episode.windows_at(context));
    const Tensor pairs_c = encode_pairs(h_c, episode.targets_at(context));
    q = latent_from_summary(pairs_c);
    r_star = deterministic_summary(h_c, pairs_c, h_t);
  }

  if (eps.size() == 1) {
    const DiagonalGaussian g = decode(sample(q, ops::reshape(eps[0], {dims_.latent})), r_star, h_t);
    return {g.mean.detach(), g.std.detach()};
  }

  std::vector<Tensor> means, stds;
  for (const auto& e : eps) {
    const DiagonalGaussian g = decode(sample(q, ops::reshape(e, {dims_.latent})), r_star, h_t);
    means.push_back(g.mean);
    stds.push_back(g.std);
  }
  // Mixture moments: mean of means; variance = mean of variances + spread of means.
  const double k = static_cast<double>(eps.size());
  std::vector<double> mean(T * dy, 0.0), var(T * dy, 0.0);
  for (const auto& m : means)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += m[i] / k;
  for (std::size_t s = 0; s < means.size(); ++s) {
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double dev = means[s][i] - mean[i];
      var[i] += (stds[s][i] * stds[s][i] + dev * dev) / k;
    }
  }
  for (auto& v : var) v = std::sqrt(v);
  return {Tensor({T, dy}, std::move(mean)), Tensor({T, dy}, std::move(var))};
}

// --- Model files -------------------------------------------------------

std::string ModelFile::encode(NpFamilyModel model, const Normalizer& normalizer) {
  ParamFile file;
  file.kind_tag = static_cast<std::uint32_t>(model.kind());
  file.dims = model.dims().to_table();
  for (const auto& p : model.params()) file.tensors.emplace_back(p.name, p.tensor->detach());
  file.tensors.emplace_back("normalizer.input_shift", Tensor::vector(normalizer.input_shift));
  file.tensors.emplace_back("normalizer.input_scale", Tensor::vector(normalizer.input_scale));
  file.tensors.emplace_back("normalizer.target_shift", Tensor::vector(normalizer.target_shift));
  file.tensors.emplace_back("normalizer.target_scale", Tensor::vector(normalizer.target_scale));
  return encode_param_file(file);
}

void ModelFile::save(const std::filesystem::path& path, NpFamilyModel model, const Normalizer& normalizer) {
  const std::string bytes = encode(std::move(model), normalizer);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

ModelFile::Loaded ModelFile::load(const std::filesystem::path& path) {
  const ParamFile file = read_param_file(path);
  if (file.kind_tag < 1 || file.kind_tag > 4) {
    throw ParseError("model file '" + path.string() + "' has unknown kind tag " + std::to_string(file.kind_tag));
  }
  const auto kind = static_cast<ModelKind>(file.kind_tag);
  const ModelDims dims = ModelDims::from_table(file.dims);
  NpFamilyModel model = NpFamilyModel::init(kind, dims, 0);
  for (auto& p : model.params()) {
    const Tensor& stored = file.get(p.name);
    if (stored.shape() != p.tensor->shape()) {
      throw ParseError("model file parameter '" + p.name + "' has shape " + shape_str(stored.shape()) + ", expected " +
                       shape_str(p.tensor->shape()));
    }
    *p.tensor = stored;
  }
  Normalizer n;
  auto vec = [&](const char* name, std::size_t expected) {
    const Tensor& t = file.get(name);
    if (t.size() != expected) throw ParseError(std::string("model file normalizer entry '") + name + "' has wrong size");
    return std::vector<double>(t.data().begin(), t.data().end());
  };
  n.input_shift = vec("normalizer.input_shift", dims.input_dim);
  n.input_scale = vec("normalizer.input_scale", dims.input_dim);
  n.target_shift = vec("normalizer.target_shift", dims.output_dim);
  n.target_scale = vec("normalizer.target_scale", dims.output_dim);
  return {std::move(model), std::move(n)};
}

}  // namespace nptraj
