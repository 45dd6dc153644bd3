#include <cmath>
#include <sstream>

#include "nptraj/ops.hpp"
#include "nptraj/train_eval.hpp"

namespace nptraj {

NonFiniteLoss::NonFiniteLoss(std::size_t step, double value)
    : Error("non-finite training loss " + std::to_string(value) + " at step " + std::to_string(step)), step_(step) {}

ModelDims dims_for(const TrainConfig& config, const Episode& sample) {
  ModelDims d = config.dims;
  d.input_dim = sample.input_dim();
  d.output_dim = sample.output_dim();
  d.window = sample.window_length();
  return d;
}

TrainResult train(const TrainConfig& config, std::span<const Episode> episodes, const ProgressFn& progress) {
  if (episodes.empty()) throw ContractError("train: no training episodes");
  return train_from(NpFamilyModel::init(config.kind, dims_for(config, episodes[0]), config.seed), config, episodes,
                    progress);
}

TrainResult train_from(NpFamilyModel model, const TrainConfig& config, std::span<const Episode> episodes,
                       const ProgressFn& progress) {
  if (config.steps == 0) throw ContractError("train: steps must be >= 1");
  if (config.batch == 0) throw ContractError("train: batch must be >= 1");
  if (episodes.empty()) throw ContractError("train: no training episodes");
  for (const auto& e : episodes) {
    if (e.input_dim() != model.dims().input_dim || e.output_dim() != model.dims().output_dim) {
      throw DimensionError("train: episode dims do not match the model");
    }
  }

  // Data order and latent noise come from a stream separate from initialization.
  Rng rng(config.seed ^ 0x5DEECE66DULL);
  nn::AdamState adam;
  adam.config.lr = config.lr;

  std::vector<Tensor*> param_ptrs;
  for (auto& p : model.params()) param_ptrs.push_back(p.tensor);

  TrainResult result{model, {}};
  result.trace.reserve(config.steps);
  const double inv_batch = 1.0 / static_cast<double>(config.batch);

  for (std::size_t step = 0; step < config.steps; ++step) {
    std::vector<std::vector<double>> grad_sum(param_ptrs.size());
    for (std::size_t i = 0; i < param_ptrs.size(); ++i) grad_sum[i].assign(param_ptrs[i]->size(), 0.0);
    TraceRow row;
    row.step = step;

    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto& episode =
          episodes[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(episodes.size()) - 1))];
      const CtSplit split = sample_ct_split(episode.length(), rng, config.split);
      Tape tape;
      const NpFamilyModel tracked = model.attach(tape);
      Tensor loss;
      if (model.probabilistic()) {
        const Tensor eps = Tensor::vector(rng.normal_vector(model.dims().latent));
        const ElboTerms terms = tracked.elbo(episode, split, eps);
        loss = terms.loss;
        row.recon_nll += terms.recon_nll.item() * inv_batch;
        row.kl += terms.kl.item() * inv_batch;
      } else {
        loss = tracked.point_loss(episode, split.target);
        row.recon_nll += loss.item() * inv_batch;
      }
      row.loss += loss.item() * inv_batch;
      if (!std::isfinite(loss.item())) throw NonFiniteLoss(step, loss.item());

      const Gradients grads = tape.backward(loss);
      std::size_t i = 0;
      for (const auto& t : tracked.param_values()) {
        const Tensor g = grads.of(t);
        const auto gd = g.data();
        for (std::size_t j = 0; j < gd.size(); ++j) grad_sum[i][j] += gd[j] * inv_batch;
        ++i;
      }
    }

    std::vector<Tensor> grads;
    grads.reserve(grad_sum.size());
    for (std::size_t i = 0; i < grad_sum.size(); ++i) grads.emplace_back(param_ptrs[i]->shape(), std::move(grad_sum[i]));
    nn::adam_step(adam, param_ptrs, grads);
    result.trace.push_back(row);
    if (progress && config.eval_interval > 0 && (step + 1) % config.eval_interval == 0) progress(row, model);
  }
  result.model = model;
  return result;
}

std::string format_trace_csv(std::span<const TraceRow> trace) {
  std::string out = "step,loss,recon_nll,kl\n";
  for (const auto& r : trace) {
    out += std::to_string(r.step) + ',' + format_double(r.loss) + ',' + format_double(r.recon_nll) + ',' +
           format_double(r.kl) + '\n';
  }
  return out;
}

}  // namespace nptraj
