#ifndef NIDEC_LOSS_HPP
#define NIDEC_LOSS_HPP

// Distortion over K-step episodes for a batch of B blocks:
//   D_MAE = 1/(2K)  sum_k sum_b sum_i |p~ - p|     (1/(2BK) if batch-normalized)
//   D_MSE = 1/(2BK) sum_k sum_b sum_i (p~ - p)^2
//   D     = (1 - alpha) D_MAE + alpha D_MSE
// The batch loss is a plain sum of per-block, per-step terms, so each term
// can be differentiated independently.

#include <cmath>
#include <cstddef>
#include <vector>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

struct LossConfig {
  double alpha = 0.235;
  bool mae_batch_normalized = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss alpha must lie in [0, 1]");
  }
  double mae_weight(std::size_t K, std::size_t B) const {
    return 1.0 / (2.0 * static_cast<double>(K) * (mae_batch_normalized ? static_cast<double>(B) : 1.0));
  }
  double mse_weight(std::size_t K, std::size_t B) const {
    return 1.0 / (2.0 * static_cast<double>(B) * static_cast<double>(K));
  }
};

struct LossTerms {
  double mae = 0.0;
  double mse = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o) {
    mae += o.mae;
    mse += o.mse;
    total += o.total;
    return *this;
  }
};

/// Contribution of one (block, step) pair to the batch loss.
inline LossTerms step_loss(ConstSpan target, ConstSpan recon, std::size_t K, std::size_t B, const LossConfig& cfg) {
  require_shape(target.size() == recon.size(), "step_loss");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double diff = recon[i] - target[i];
    abs_sum += std::abs(diff);
    sq_sum += diff * diff;
  }
  LossTerms t;
  t.mae = cfg.mae_weight(K, B) * abs_sum;
  t.mse = cfg.mse_weight(K, B) * sq_sum;
  t.total = (1.0 - cfg.alpha) * t.mae + cfg.alpha * t.mse;
  return t;
}

/// d(step_loss)/d(recon), written into `out`. sign(0) = 0.
inline void step_loss_grad(ConstSpan target, ConstSpan recon, std::size_t K, std::size_t B, const LossConfig& cfg,
                           MutSpan out) {
  require_shape(target.size() == recon.size() && out.size() == recon.size(), "step_loss_grad");
  const double wa = (1.0 - cfg.alpha) * cfg.mae_weight(K, B);
  const double ws = cfg.alpha * cfg.mse_weight(K, B) * 2.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    const double diff = recon[i] - target[i];
    const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    out[i] = wa * sgn + ws * diff;
  }
}

/// Full batch loss. `targets` is B x d^2, `recons` is K x B x d^2 (all flat).
inline LossTerms loss_episode(ConstSpan targets, ConstSpan recons, std::size_t K, std::size_t B,
                              const LossConfig& cfg) {
  cfg.validate();
  if (K == 0 || B == 0) throw ShapeError("loss_episode: K and B must be positive");
  require_shape(targets.size() % B == 0, "loss_episode targets");
  const std::size_t pd = targets.size() / B;
  require_shape(recons.size() == K * B * pd, "loss_episode reconstructions");
  LossTerms acc;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t b = 0; b < B; ++b)
      acc += step_loss(targets.subspan(b * pd, pd), recons.subspan((k * B + b) * pd, pd), K, B, cfg);
  return acc;
}

/// Loss of one block's episode as part of a batch of size B.
inline LossTerms block_loss(ConstSpan target, const std::vector<Vec>& recon, std::size_t B, const LossConfig& cfg) {
  LossTerms acc;
  for (const Vec& r : recon) acc += step_loss(target, r, recon.size(), B, cfg);
  return acc;
}

}  // namespace nidec

#endif  // NIDEC_LOSS_HPP
