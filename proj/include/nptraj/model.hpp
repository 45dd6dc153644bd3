#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nptraj/episodes.hpp"
#include "nptraj/gaussian.hpp"
#include "nptraj/nn.hpp"
#include "nptraj/rng.hpp"

namespace nptraj {

enum class ModelKind : std::uint32_t { kNp = 1, kAnp = 2, kArnp = 3, kLstmPoint = 4 };

const char* kind_name(ModelKind kind);
// Accepts "np", "anp", "arnp", "lstm" (case-insensitive).
ModelKind parse_kind(const std::string& text);

struct ModelDims {
  std::size_t input_dim = kLaneFeatureDim;   // d_x
  std::size_t output_dim = kLaneTargetDim;   // d_y
  std::size_t window = kDefaultWindow;       // L, recorded for data assembly
  std::size_t hidden = 64;                   // recurrent state H
  std::size_t latent = 64;                   // z
  std::size_t representation = 128;          // r, s
  std::size_t attention = 128;               // d_att
  std::size_t decoder_hidden = 128;

  std::vector<std::uint64_t> to_table() const;
  static ModelDims from_table(std::span<const std::uint64_t> table);
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

struct ElboTerms {
  Tensor loss;       // recon_nll + kl
  Tensor recon_nll;  // per target point
  Tensor kl;
};

// Per-target predictive moments, [T x d_y] each.
struct Prediction {
  Tensor mean;
  Tensor std;
};

// NP, ANP, ARNP, or the recurrent point predictor. Which optional parts are
// present is fixed by the kind:
//   NP:         pair_encoder, latent_head, decoder
//   ANP:        + attention
//   ARNP:       + attention, window_encoder
//   LSTM_POINT: window_encoder and an affine decoder only
class NpFamilyModel {
 public:
  static NpFamilyModel init(ModelKind kind, const ModelDims& dims, std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  const ModelDims& dims() const { return dims_; }
  bool recurrent() const { return window_encoder_.has_value(); }
  bool attentive() const { return attention_.has_value(); }
  bool probabilistic() const { return kind_ != ModelKind::kLstmPoint; }
  // Width of the encoded per-step input (H for recurrent kinds, d_x otherwise).
  std::size_t encoded_dim() const;

  // Parameters in declaration order.
  std::vector<nn::ParamRef> params();
  std::vector<Tensor> param_values() const;
  std::size_t param_count() const;
  // Copy whose parameters are leaves on `tape`.
  NpFamilyModel attach(Tape& tape) const;

  // Final LSTM hidden state per window, from zero initial state. [n x L x d_x] -> [n x H]
  Tensor rnn_encode_windows(const Tensor& windows) const;
  // Recurrent encoding for recurrent kinds, the current step's features otherwise.
  Tensor encode_inputs(const Tensor& windows) const;
  // Pair encoder on concat(inputs, ys), row-wise. -> [m x representation]
  Tensor encode_pairs(const Tensor& inputs, const Tensor& ys) const;
  // Mean-aggregate, latent head, Gaussian over z.
  DiagonalGaussian latent_from_summary(const Tensor& encoded_pairs) const;
  // The prior N(0, I), used for an empty context set.
  DiagonalGaussian latent_prior() const;
  // Target-specific deterministic summary via cross-attention. -> [T x representation]
  Tensor cross_attention_summary(const Tensor& context_inputs, const Tensor& context_pairs,
                                 const Tensor& target_inputs) const;
  // Decoder on concat(z, r*, input) for every target row. z: [latent], r_star: [T x repr].
  DiagonalGaussian decode(const Tensor& z, const Tensor& r_star, const Tensor& target_inputs) const;

  // Negated one-sample ELBO. Requires context indices within the targets.
  ElboTerms elbo(const Episode& episode, const CtSplit& split, const Tensor& eps) const;
  // Mean squared error summed over output dims, averaged over targets (LSTM_POINT).
  Tensor point_loss(const Episode& episode, std::span<const std::size_t> targets) const;

  // Moments of the equal-weight mixture over n_samples draws of z ~ q(z | contexts).
  // LSTM_POINT returns its point prediction with std 1.
  Prediction predict(const Episode& episode, std::span<const std::size_t> context, std::span<const std::size_t> targets,
                     std::size_t n_samples, Rng& rng) const;
  // Same, with caller-supplied latent noise rows (one per sample, each [latent]).
  Prediction predict_with_eps(const Episode& episode, std::span<const std::size_t> context,
                              std::span<const std::size_t> targets, std::span<const Tensor> eps) const;

 private:
  NpFamilyModel() = default;

  Tensor deterministic_summary(const Tensor& context_inputs, const Tensor& context_pairs, const Tensor& target_inputs) const;

  ModelKind kind_ = ModelKind::kArnp;
  ModelDims dims_;
  std::optional<nn::LstmCell> window_encoder_;
  std::optional<nn::Mlp> pair_encoder_;
  std::optional<nn::Mlp> latent_head_;
  std::optional<nn::AttentionHead> attention_;
  nn::Mlp decoder_;

  friend struct ModelFile;
};

// Model parameters plus the normalizer fitted on its training data.
struct ModelFile {
  static void save(const std::filesystem::path& path, NpFamilyModel model, const Normalizer& normalizer);
  static std::string encode(NpFamilyModel model, const Normalizer& normalizer);

  struct Loaded {
    NpFamilyModel model;
    Normalizer normalizer;
  };
  static Loaded load(const std::filesystem::path& path);
};

}  // namespace nptraj
