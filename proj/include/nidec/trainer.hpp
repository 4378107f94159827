#ifndef NIDEC_TRAINER_HPP
#define NIDEC_TRAINER_HPP

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "nidec/bptt.hpp"
#include "nidec/decoder.hpp"
#include "nidec/gradcheck.hpp"
#include "nidec/loss.hpp"
#include "nidec/model.hpp"
#include "nidec/optim.hpp"
#include "nidec/rng.hpp"
#include "nidec/rtrl.hpp"
#include "nidec/sab.hpp"
#include "nidec/uoro.hpp"

namespace nidec {

enum class Algorithm { kBptt, kRtrl, kUoro, kSab };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::kBptt, Algorithm::kRtrl, Algorithm::kUoro, Algorithm::kSab};

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kBptt: return "bptt";
    case Algorithm::kRtrl: return "rtrl";
    case Algorithm::kUoro: return "uoro";
    case Algorithm::kSab: return "sab";
  }
  return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
  for (Algorithm a : kAllAlgorithms)
    if (to_string(a) == s) return a;
  throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

struct TrainSettings {
  Algorithm algorithm = Algorithm::kBptt;
  LossConfig loss;
  SabConfig sab;
  double clip = kClipNorm;
};

/// Batch loss and gradient under one learning algorithm. Per-block
/// gradients are summed in batch order. `rng` supplies UORO's sign vectors.
inline double batch_gradient(const DecoderParams& p, std::span<const PatchBlock> batch, const TrainSettings& s,
                             SeededRng& rng, GradientSet& grad) {
  if (batch.empty()) throw Error("batch must contain at least one block");
  const std::size_t B = batch.size(), K = p.config().steps;
  grad.assign(p.values().size(), 0.0);
  double loss = 0.0;
  for (const PatchBlock& b : batch) {
    switch (s.algorithm) {
      case Algorithm::kBptt: {
        const ForwardTrace tr = run_episode(p, b.inputs, K);
        loss += block_loss(b.target, tr.recon, B, s.loss).total;
        bptt_accumulate(p, tr, b.inputs, b.target, B, s.loss, grad);
        break;
      }
      case Algorithm::kRtrl: {
        RtrlState st = rtrl_begin(p, b.inputs);
        for (std::size_t k = 0; k < K; ++k) {
          axpy(1.0, rtrl_step(p, st, b.inputs, b.target, K, B, s.loss), grad);
          loss += step_loss(b.target, reconstruct(p, ConstSpan(st.z).subspan(0, p.config().hidden)), K, B, s.loss).total;
        }
        break;
      }
      case Algorithm::kUoro: {
        UoroState st = uoro_begin(p, b.inputs);
        for (std::size_t k = 0; k < K; ++k) {
          axpy(1.0, uoro_step(p, st, rng, b.inputs, b.target, K, B, s.loss), grad);
          loss += step_loss(b.target, reconstruct(p, ConstSpan(st.z).subspan(0, p.config().hidden)), K, B, s.loss).total;
        }
        break;
      }
      case Algorithm::kSab: {
        const SabResult res = sab_forward(p, b.inputs, K, s.sab);
        loss += block_loss(b.target, res.trace.recon, B, s.loss).total;
        sab_accumulate(p, res, b.inputs, b.target, B, s.loss, s.sab, grad);
        break;
      }
    }
  }
  check_finite_gradient(grad);
  return loss;
}

/// Owns the parameters, optimizer and noise stream of one training run.
class Trainer {
 public:
  Trainer(DecoderParams params, OptimizerState opt, TrainSettings settings, std::uint64_t noise_seed)
      : params_(std::move(params)), opt_(std::move(opt)), settings_(settings), rng_(noise_seed) {
    opt_.validate();
    settings_.loss.validate();
    settings_.sab.validate();
  }

  /// One episode over the batch: gradient, global-norm clip, SGD step.
  /// Returns the batch loss before the update.
  double train_episode(std::span<const PatchBlock> batch) {
    const double loss = batch_gradient(params_, batch, settings_, rng_, grad_);
    const MutSpan g(grad_);
    last_grad_norm_ = clip_global_norm(std::span<const MutSpan>(&g, 1), settings_.clip);
    sgd_update(params_.flat_mut(), grad_, opt_);
    return loss;
  }

  const DecoderParams& params() const { return params_; }
  DecoderParams& params() { return params_; }
  const OptimizerState& optimizer() const { return opt_; }
  const TrainSettings& settings() const { return settings_; }
  double last_grad_norm() const { return last_grad_norm_; }

 private:
  DecoderParams params_;
  OptimizerState opt_;
  TrainSettings settings_;
  SeededRng rng_;
  GradientSet grad_;
  double last_grad_norm_ = 0.0;
};

}  // namespace nidec

#endif  // NIDEC_TRAINER_HPP
