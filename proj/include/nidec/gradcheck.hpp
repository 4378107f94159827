#ifndef NIDEC_GRADCHECK_HPP
#define NIDEC_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// Default threshold for global-norm clipping.
inline constexpr double kClipNorm = 13.0;

/// Global L2 norm over a list of tensors.
inline double global_norm(std::span<const MutSpan> tensors) {
  double ss = 0.0;
  for (const auto& t : tensors) ss += sum_squares(t);
  return std::sqrt(ss);
}

/// Rescales every tensor by max_norm/g when the global norm g exceeds
/// max_norm. Returns the norm before clipping. A zero norm is left alone.
inline double clip_global_norm(std::span<const MutSpan> tensors, double max_norm = kClipNorm) {
  if (!(max_norm > 0.0)) throw Error("clip_global_norm: max_norm must be positive");
  for (const auto& t : tensors)
    if (!all_finite(t)) throw DivergedError("non-finite gradient encountered before clipping");
  const double g = global_norm(tensors);
  if (g > max_norm) {
    const double scale = max_norm / g;
    for (const auto& t : tensors)
      for (double& v : t) v *= scale;
  }
  return g;
}

inline double clip_global_norm(std::initializer_list<MutSpan> tensors, double max_norm = kClipNorm) {
  return clip_global_norm(std::span<const MutSpan>(tensors.begin(), tensors.size()), max_norm);
}

/// Central-difference gradient of `f` at `params`. Each coordinate is
/// perturbed in place and restored bit-exactly before the next one.
inline Vec finite_diff_grad(const std::function<double()>& f, MutSpan params, double epsilon = 1e-5) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4))
    throw ConfigError("finite_diff_grad: epsilon must lie in [1e-7, 1e-4]");
  Vec grad(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + epsilon;
    const double fp = f();
    params[i] = saved - epsilon;
    const double fm = f();
    params[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("finite_diff_grad: objective returned a non-finite value");
    grad[i] = (fp - fm) / (2.0 * epsilon);
  }
  return grad;
}

/// Central differences at eps = 1e-5 on an O(1) loss resolve a gradient
/// only to about 1e-10 absolute, so components below this floor are
/// compared on an absolute scale.
inline constexpr double kRelativeErrorFloor = 1e-4;

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor).
inline double max_relative_error(ConstSpan a, ConstSpan b, double floor = kRelativeErrorFloor) {
  require_shape(a.size() == b.size(), "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline double max_abs_diff(ConstSpan a, ConstSpan b) {
  require_shape(a.size() == b.size(), "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace nidec

#endif  // NIDEC_GRADCHECK_HPP
