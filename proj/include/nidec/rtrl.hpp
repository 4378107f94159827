#ifndef NIDEC_RTRL_HPP
#define NIDEC_RTRL_HPP

// Real-time recurrent learning for the iterative decoder.
//
// The sensitivity J_t = dz_t/dTheta is carried forward step by step:
//   J_{t+1} = dF/dTheta + (dF/dz_t) J_t
// and each step's gradient is (dL/dp~) U J_{t+1} plus the exact direct term
// for Theta_d = {U, c}, which never enters the state.
//
// Theta_t = {W_i} reaches the state only through e = sum_i W_i q_i, which is
// fixed over an episode, so dz/dW_i[u,v] = (dz/de)[:,u] q_i[v] exactly.
// The Jacobian is therefore stored over the coordinates (e, Theta_s); use
// expand_jacobian() for the explicit |z| x |Theta_t u Theta_s| matrix.

#include <cstddef>

#include "nidec/bptt.hpp"
#include "nidec/cells.hpp"
#include "nidec/decoder.hpp"
#include "nidec/loss.hpp"
#include "nidec/model.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// Width of the sensitivity coordinates: hidden size + |Theta_s|.
inline std::size_t sensitivity_size(const ParamLayout& lay) {
  return lay.config().hidden + lay.state_param_size();
}

/// Maps a vector over (e, Theta_s) coordinates onto a full-layout gradient:
/// the e part becomes W gradients through q, the rest lands on Theta_s.
inline void scatter_sensitivity(const DecoderParams& p, ConstSpan inputs, ConstSpan coords, double scale,
                                MutSpan grad) {
  const ParamLayout& lay = p.layout();
  const std::size_t n = p.config().hidden, pd = p.config().patch_dim();
  for (std::size_t i = 0; i < p.config().n_context; ++i)
    ger_acc(lay.mat(grad, lay.w_spec(i)), coords.subspan(0, n), inputs.subspan(i * pd, pd), scale);
  axpy(scale, coords.subspan(n), grad.subspan(lay.state_begin(), lay.state_param_size()));
}

/// Rows of the local Jacobians of one cached step, via one VJP per state
/// coordinate: A = dF/dz_prev (|z| x |z|) and D = dF/d(e, Theta_s).
struct LocalJacobians {
  Mat A;
  Mat D;
};

inline LocalJacobians local_jacobians(const DecoderParams& p, const StepCache& st) {
  const ParamLayout& lay = p.layout();
  const std::size_t nz = p.config().state_size(), n = p.config().hidden;
  LocalJacobians out{Mat(nz, nz), Mat(nz, sensitivity_size(lay))};
  Vec unit(nz, 0.0), dx(n), dz_prev(nz), scratch(lay.recurrent_size(), 0.0);
  MutSpan state_part = MutSpan(scratch).subspan(lay.state_begin(), lay.state_param_size());
  for (std::size_t r = 0; r < nz; ++r) {
    unit[r] = 1.0;
    fill_zero(state_part);
    cell_vjp(p, st, unit, dx, dz_prev, scratch);
    unit[r] = 0.0;
    std::copy(dz_prev.begin(), dz_prev.end(), out.A.mut().row(r).begin());
    MutSpan drow = out.D.mut().row(r);
    std::copy(dx.begin(), dx.end(), drow.begin());
    std::copy(state_part.begin(), state_part.end(), drow.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return out;
}

/// Per-episode RTRL state.
struct RtrlState {
  Vec e;
  Vec z;
  Mat J;  // |z| x (n + |Theta_s|), J_0 = 0
  std::size_t t = 0;
};

inline RtrlState rtrl_begin(const DecoderParams& p, ConstSpan inputs) {
  RtrlState s;
  s.e = embed(p, inputs);
  s.z.assign(p.config().state_size(), 0.0);
  s.J = Mat(p.config().state_size(), sensitivity_size(p.layout()));
  return s;
}

/// One online step: advances the state, propagates J, and returns the exact
/// gradient of this step's loss term. K and B fix the loss normalization.
inline GradientSet rtrl_step(const DecoderParams& p, RtrlState& s, ConstSpan inputs, ConstSpan target, std::size_t K,
                             std::size_t B, const LossConfig& lcfg) {
  const std::size_t n = p.config().hidden, nz = p.config().state_size();
  StepCache st;
  cell_forward(p, s.e, s.z, st);
  const LocalJacobians loc = local_jacobians(p, st);

  Mat next(nz, s.J.cols());
  gemm(loc.A, s.J, next.mut());
  axpy(1.0, loc.D.values(), next.values());
  s.J = std::move(next);
  s.z = st.z;
  ++s.t;

  GradientSet g = p.zeros_like();
  const Vec recon = reconstruct(p, ConstSpan(s.z).subspan(0, n));
  Vec dp(recon.size());
  step_loss_grad(target, recon, K, B, lcfg, dp);
  const Vec ds = backprop_output(p, ConstSpan(s.z).subspan(0, n), dp, g);
  // dL/d(e, Theta_s) = ds^T J[hidden rows]
  Vec coords(s.J.cols(), 0.0);
  gemv_t_acc(MatView(s.J.values().data(), n, s.J.cols()), ds, coords);
  scatter_sensitivity(p, inputs, coords, 1.0, g);
  check_finite_gradient(g);
  return g;
}

/// Explicit dz/d(Theta_t u Theta_s) in layout order (tests and inspection).
inline Mat expand_jacobian(const DecoderParams& p, const RtrlState& s, ConstSpan inputs) {
  const ParamLayout& lay = p.layout();
  Mat full(s.J.rows(), lay.recurrent_size());
  for (std::size_t r = 0; r < s.J.rows(); ++r)
    scatter_sensitivity(p, inputs, s.J.view().row(r), 1.0, full.mut().row(r));
  return full;
}

/// Runs a whole episode online and returns the summed per-step gradients.
inline GradientSet rtrl_episode_grads(const DecoderParams& p, const PatchBlock& block, const LossConfig& lcfg,
                                      std::size_t K, std::size_t B = 1, double* loss_out = nullptr) {
  RtrlState s = rtrl_begin(p, block.inputs);
  GradientSet total = p.zeros_like();
  double loss = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const GradientSet g = rtrl_step(p, s, block.inputs, block.target, K, B, lcfg);
    axpy(1.0, g, total);
    if (loss_out) loss += step_loss(block.target, reconstruct(p, ConstSpan(s.z).subspan(0, p.config().hidden)), K, B, lcfg).total;
  }
  if (loss_out) *loss_out = loss;
  return total;
}

}  // namespace nidec

#endif  // NIDEC_RTRL_HPP
