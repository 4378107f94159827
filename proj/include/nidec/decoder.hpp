#ifndef NIDEC_DECODER_HPP
#define NIDEC_DECODER_HPP

#include <cstddef>
#include <vector>

#include "nidec/cells.hpp"
#include "nidec/dataset.hpp"
#include "nidec/model.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// e = W_1 q_1 + ... + W_N q_N (identity output activation).
inline Vec embed(const DecoderParams& p, ConstSpan inputs) {
  const DecoderConfig& cfg = p.config();
  const std::size_t pd = cfg.patch_dim();
  require_shape(inputs.size() == cfg.n_context * pd, "embed expects N*d^2 inputs");
  Vec e(cfg.hidden, 0.0);
  for (std::size_t i = 0; i < cfg.n_context; ++i) gemv_acc(p.W(i), inputs.subspan(i * pd, pd), e);
  return e;
}

/// p~ = U s + c (identity output activation, no clamping).
inline Vec reconstruct(const DecoderParams& p, ConstSpan s) {
  require_shape(s.size() == p.config().hidden, "reconstruct expects hidden state");
  const ConstSpan c = p.c();
  Vec out(c.begin(), c.end());
  gemv_acc(p.U(), s, out);
  return out;
}

/// Everything a reverse pass needs to replay one K-step episode.
struct ForwardTrace {
  Vec e;
  std::vector<StepCache> steps;  // steps[k-1] produced z_k
  std::vector<Vec> recon;        // recon[k-1] = p~_k

  std::size_t K() const { return steps.size(); }
  ConstSpan state(std::size_t k, std::size_t n) const {  // hidden s_k, k >= 1
    return ConstSpan(steps[k - 1].z).subspan(0, n);
  }
  bool operator==(const ForwardTrace&) const = default;
};

/// Iterative refinement: e is computed once, the state is updated K times
/// from z_0 = 0, and every step emits a reconstruction.
inline ForwardTrace run_episode(const DecoderParams& p, ConstSpan inputs, std::size_t K) {
  if (K < 1) throw ConfigError("K must be >= 1");
  const DecoderConfig& cfg = p.config();
  ForwardTrace tr;
  tr.e = embed(p, inputs);
  tr.steps.resize(K);
  tr.recon.reserve(K);
  Vec z(cfg.state_size(), 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    cell_forward(p, tr.e, z, tr.steps[k]);
    z = tr.steps[k].z;
    tr.recon.push_back(reconstruct(p, ConstSpan(z).subspan(0, cfg.hidden)));
  }
  return tr;
}

inline ForwardTrace run_episode(const DecoderParams& p, const PatchBlock& block) {
  return run_episode(p, block.inputs, p.config().steps);
}

/// Decodes every block of an image and returns the final-step
/// reconstruction of each patch, clamped to [0,1].
inline std::vector<Vec> decode_patches(const DecoderParams& p, const std::vector<PatchBlock>& blocks, std::size_t K) {
  std::vector<Vec> out;
  out.reserve(blocks.size());
  for (const PatchBlock& b : blocks) {
    ForwardTrace tr = run_episode(p, b.inputs, K);
    Vec r = std::move(tr.recon.back());
    for (double& v : r) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace nidec

#endif  // NIDEC_DECODER_HPP
