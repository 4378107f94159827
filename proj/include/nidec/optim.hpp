#ifndef NIDEC_OPTIM_HPP
#define NIDEC_OPTIM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// Plain SGD with polynomial learning-rate decay and optional classical
/// momentum:
///   lr(t) = (lr0 - lr_end) (1 - min(t, T)/T)^power + lr_end
///   v <- mu v + g,  theta <- theta - lr(t) v
struct OptimizerState {
  std::size_t step = 0;
  double lr0 = 2e-4;
  double lr_end = 2e-6;
  std::size_t decay_steps = 1;  // T
  double power = 2.0;
  double momentum = 0.0;
  Vec velocity;

  void validate() const {
    if (!(lr0 > 0.0) || !(lr_end >= 0.0) || lr_end > lr0) throw ConfigError("need 0 <= lr_end <= lr0, lr0 > 0");
    if (decay_steps < 1) throw ConfigError("decay steps must be >= 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  }

  double lr_at(std::size_t t) const {
    const double frac = static_cast<double>(std::min(t, decay_steps)) / static_cast<double>(decay_steps);
    return (lr0 - lr_end) * std::pow(1.0 - frac, power) + lr_end;
  }
  double lr() const { return lr_at(step); }
};

inline OptimizerState make_optimizer(double lr0, std::size_t total_updates, double momentum = 0.0) {
  OptimizerState o;
  o.lr0 = lr0;
  o.lr_end = lr0 / 100.0;
  o.decay_steps = std::max<std::size_t>(total_updates, 1);
  o.momentum = momentum;
  o.validate();
  return o;
}

/// Applies one update in place. `grads` are expected to be clipped already.
/// If the update would produce a non-finite value, nothing is modified and
/// DivergedError is thrown.
inline void sgd_update(MutSpan params, ConstSpan grads, OptimizerState& opt) {
  require_shape(params.size() == grads.size(), "sgd_update");
  const double lr = opt.lr();
  const bool use_velocity = opt.momentum > 0.0;
  Vec velocity;
  if (use_velocity) {
    velocity = opt.velocity.size() == params.size() ? opt.velocity : Vec(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) velocity[i] = opt.momentum * velocity[i] + grads[i];
  }
  const ConstSpan step = use_velocity ? ConstSpan(velocity) : grads;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!std::isfinite(params[i] - lr * step[i])) throw DivergedError("non-finite parameters after update");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * step[i];
  if (use_velocity) opt.velocity = std::move(velocity);
  ++opt.step;
}

}  // namespace nidec

#endif  // NIDEC_OPTIM_HPP
