#ifndef NIDEC_UORO_HPP
#define NIDEC_UORO_HPP

// Unbiased online recurrent optimization: the RTRL sensitivity is replaced
// by a random rank-one estimate z~ (x) theta~ with E[z~ theta~^T] = dz/dTheta.
//
//   nu      ~ independent +-1 signs
//   rho0    = sqrt(|theta~| / (|A z~| + eps))       (1 when theta~ = 0)
//   rho1    = sqrt(|nu^T D| / (|nu| + eps))
//   z~     <- rho0 A z~ + rho1 nu
//   theta~ <- theta~ / rho0 + nu^T D / rho1
//
// with A = dF/dz_prev applied as a Jacobian-vector product and nu^T D a
// single vector-Jacobian product. theta~ lives in the (e, Theta_s)
// coordinates of rtrl.hpp; every norm is the norm of the expanded vector.

#include <cmath>
#include <cstddef>

#include "nidec/bptt.hpp"
#include "nidec/cells.hpp"
#include "nidec/decoder.hpp"
#include "nidec/loss.hpp"
#include "nidec/rng.hpp"
#include "nidec/rtrl.hpp"

namespace nidec {

inline constexpr double kUoroEpsilon = 1e-7;

struct UoroState {
  Vec e;
  Vec z;
  Vec z_tilde;      // |z|, starts at 0
  Vec theta_tilde;  // n + |Theta_s|, starts at 0
  double q_norm = 0.0;  // |q| over all context patches
  std::size_t t = 0;
};

inline UoroState uoro_begin(const DecoderParams& p, ConstSpan inputs) {
  UoroState s;
  s.e = embed(p, inputs);
  s.z.assign(p.config().state_size(), 0.0);
  s.z_tilde.assign(p.config().state_size(), 0.0);
  s.theta_tilde.assign(sensitivity_size(p.layout()), 0.0);
  s.q_norm = norm2(inputs);
  return s;
}

/// Norm of a sensitivity-coordinate vector once its e part is expanded
/// into W gradients through q.
inline double expanded_norm(ConstSpan coords, std::size_t n, double q_norm) {
  const double e_part = sum_squares(coords.subspan(0, n)) * q_norm * q_norm;
  return std::sqrt(e_part + sum_squares(coords.subspan(n)));
}

/// One online step; returns the unbiased estimate of this step's gradient.
inline GradientSet uoro_step(const DecoderParams& p, UoroState& s, SeededRng& rng, ConstSpan inputs, ConstSpan target,
                             std::size_t K, std::size_t B, const LossConfig& lcfg, double epsilon = kUoroEpsilon) {
  const ParamLayout& lay = p.layout();
  const std::size_t n = p.config().hidden, nz = p.config().state_size();
  StepCache st;
  cell_forward(p, s.e, s.z, st);

  Vec nu(nz);
  for (double& v : nu) v = rng.sign();

  Vec a_ztilde(nz);
  cell_jvp(p, st, s.z_tilde, {}, a_ztilde);

  Vec dx(n), dz_prev(nz), scratch(lay.recurrent_size(), 0.0);
  cell_vjp(p, st, nu, dx, dz_prev, scratch);
  Vec nu_d(s.theta_tilde.size());
  std::copy(dx.begin(), dx.end(), nu_d.begin());
  const ConstSpan state_part = ConstSpan(scratch).subspan(lay.state_begin(), lay.state_param_size());
  std::copy(state_part.begin(), state_part.end(), nu_d.begin() + static_cast<std::ptrdiff_t>(n));

  const double theta_norm = expanded_norm(s.theta_tilde, n, s.q_norm);
  const double rho0 = theta_norm == 0.0 ? 1.0 : std::sqrt(theta_norm / (norm2(a_ztilde) + epsilon));
  double rho1 = std::sqrt(expanded_norm(nu_d, n, s.q_norm) / (norm2(nu) + epsilon));
  if (rho1 == 0.0) rho1 = 1.0;  // nu^T D = 0, the term vanishes anyway

  for (std::size_t k = 0; k < nz; ++k) s.z_tilde[k] = rho0 * a_ztilde[k] + rho1 * nu[k];
  for (std::size_t k = 0; k < s.theta_tilde.size(); ++k)
    s.theta_tilde[k] = s.theta_tilde[k] / rho0 + nu_d[k] / rho1;
  s.z = st.z;
  ++s.t;

  GradientSet g = p.zeros_like();
  const ConstSpan hidden = ConstSpan(s.z).subspan(0, n);
  const Vec recon = reconstruct(p, hidden);
  Vec dp(recon.size());
  step_loss_grad(target, recon, K, B, lcfg, dp);
  const Vec ds = backprop_output(p, hidden, dp, g);
  const double coeff = dot(ds, ConstSpan(s.z_tilde).subspan(0, n));
  if (coeff != 0.0) scatter_sensitivity(p, inputs, s.theta_tilde, coeff, g);
  check_finite_gradient(g);
  if (!all_finite(s.z_tilde) || !all_finite(s.theta_tilde)) throw DivergedError("non-finite UORO factors");
  return g;
}

inline GradientSet uoro_episode_grads(const DecoderParams& p, const PatchBlock& block, const LossConfig& lcfg,
                                      SeededRng& rng, std::size_t K, std::size_t B = 1) {
  UoroState s = uoro_begin(p, block.inputs);
  GradientSet total = p.zeros_like();
  for (std::size_t k = 0; k < K; ++k) axpy(1.0, uoro_step(p, s, rng, block.inputs, block.target, K, B, lcfg), total);
  return total;
}

}  // namespace nidec

#endif  // NIDEC_UORO_HPP
