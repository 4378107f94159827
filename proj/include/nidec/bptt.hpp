#ifndef NIDEC_BPTT_HPP
#define NIDEC_BPTT_HPP

#include <cstddef>

#include "nidec/cells.hpp"
#include "nidec/decoder.hpp"
#include "nidec/error.hpp"
#include "nidec/loss.hpp"
#include "nidec/model.hpp"

namespace nidec {

/// Gradients share the parameter layout: one flat vector per Theta.
using GradientSet = Vec;

/// Accumulates dU += dp s^T, dc += dp and returns ds = U^T dp.
inline Vec backprop_output(const DecoderParams& p, ConstSpan s, ConstSpan dp, MutSpan grad) {
  const ParamLayout& lay = p.layout();
  ger_acc(lay.mat(grad, lay.u_spec()), dp, s);
  axpy(1.0, dp, lay.vec(grad, lay.c_spec()));
  Vec ds(p.config().hidden, 0.0);
  gemv_t_acc(p.U(), dp, ds);
  return ds;
}

/// dW_i += de q_i^T for every context patch.
inline void backprop_embedding(const DecoderParams& p, ConstSpan inputs, ConstSpan de, MutSpan grad) {
  const ParamLayout& lay = p.layout();
  const std::size_t pd = p.config().patch_dim();
  for (std::size_t i = 0; i < p.config().n_context; ++i)
    ger_acc(lay.mat(grad, lay.w_spec(i)), de, inputs.subspan(i * pd, pd));
}

inline void check_finite_gradient(ConstSpan g) {
  if (!all_finite(g)) throw DivergedError("non-finite gradient");
}

/// Exact reverse-mode gradient of one block's episode loss (as a member of
/// a batch of size B), accumulated into `grad`. The embedding is consumed at
/// every step, so it collects the sum of all K input gradients.
inline void bptt_accumulate(const DecoderParams& p, const ForwardTrace& tr, ConstSpan inputs, ConstSpan target,
                            std::size_t B, const LossConfig& lcfg, MutSpan grad) {
  const DecoderConfig& cfg = p.config();
  const std::size_t n = cfg.hidden, K = tr.K();
  Vec dz(cfg.state_size(), 0.0), dz_prev(cfg.state_size()), dx(n), de(n, 0.0), dp(cfg.patch_dim());
  for (std::size_t k = K; k-- > 0;) {
    step_loss_grad(target, tr.recon[k], K, B, lcfg, dp);
    const Vec ds = backprop_output(p, tr.state(k + 1, n), dp, grad);
    axpy(1.0, ds, MutSpan(dz).subspan(0, n));
    cell_vjp(p, tr.steps[k], dz, dx, dz_prev, grad);
    axpy(1.0, dx, de);
    dz.swap(dz_prev);
  }
  backprop_embedding(p, inputs, de, grad);
}

inline GradientSet bptt_grads(const DecoderParams& p, const ForwardTrace& tr, const PatchBlock& block,
                              const LossConfig& lcfg, std::size_t B = 1) {
  GradientSet g = p.zeros_like();
  bptt_accumulate(p, tr, block.inputs, block.target, B, lcfg, g);
  check_finite_gradient(g);
  return g;
}

}  // namespace nidec

#endif  // NIDEC_BPTT_HPP
