#ifndef NIDEC_SAB_HPP
#define NIDEC_SAB_HPP

// Sparse attentive backtracking over the K refinement steps.
//
// Forward (sparse retrieval). Every k_attn-th state s_j is written to
// memory. Before step t the previous state s_{t-1} queries the memory:
//   a_i = s_{t-1} . m_i
// the k_top largest scores survive (ties go to the older memory), the
// (k_top+1)-th largest is subtracted from them, the rest are zeroed, and
// the summary sum_i a^_i m_i is added to the cell input, i.e. to every
// pre-activation that e feeds. When no (k_top+1)-th score exists the
// threshold sits one unit below the smallest score, so every memory is
// selected with a positive weight.
//
// Backward (sparse replay). Gradient enters each state from its own loss
// term and from the attention edges that read it. A gradient arriving at a
// state may traverse at most `trunc` cell steps backwards; attention edges
// only carry gradient into the selected memories, and each such arrival
// starts a fresh local window of `trunc` steps. The selection and the
// threshold are constants of the backward pass.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "nidec/bptt.hpp"
#include "nidec/cells.hpp"
#include "nidec/decoder.hpp"
#include "nidec/loss.hpp"

namespace nidec {

struct SabConfig {
  std::size_t k_top = 2;
  std::size_t k_attn = 1;
  std::size_t trunc = 1;

  void validate() const {
    if (k_attn < 1) throw ConfigError("SAB k_attn must be >= 1");
    if (trunc < 1) throw ConfigError("SAB trunc must be >= 1");
  }
};

/// Attention read performed before one step.
struct SabRead {
  std::vector<double> scores;     // raw a_i over the memories present at this step
  std::vector<std::size_t> selected;  // memory indices, best first
  std::vector<double> weights;    // sparsified a^_i, zero when unselected
  double threshold = 0.0;
  Vec summary;
};

struct SabMemory {
  std::vector<std::size_t> steps;  // step index (1-based) of each stored state
  std::vector<SabRead> reads;      // reads[t-1] happened before step t

  std::size_t size() const { return steps.size(); }
};

struct SabResult {
  ForwardTrace trace;
  SabMemory memory;
};

/// Indices of the k_top largest scores; ties resolved by lower index.
inline std::vector<std::size_t> top_k_indices(const std::vector<double>& scores, std::size_t k_top) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  idx.resize(std::min(k_top, idx.size()));
  return idx;
}

/// Runs the episode with sparse retrieval. With `frozen`, the selection and
/// thresholds recorded in an earlier run are reused instead of recomputed.
inline SabResult sab_forward(const DecoderParams& p, ConstSpan inputs, std::size_t K, const SabConfig& cfg,
                             const SabMemory* frozen = nullptr) {
  cfg.validate();
  if (K < 1) throw ConfigError("K must be >= 1");
  const DecoderConfig& dc = p.config();
  const std::size_t n = dc.hidden;
  SabResult res;
  ForwardTrace& tr = res.trace;
  tr.e = embed(p, inputs);
  tr.steps.resize(K);
  Vec z(dc.state_size(), 0.0);

  for (std::size_t t = 1; t <= K; ++t) {
    const ConstSpan query = ConstSpan(z).subspan(0, n);
    SabRead read;
    const std::size_t m = res.memory.size();
    read.scores.resize(m);
    for (std::size_t i = 0; i < m; ++i) read.scores[i] = dot(query, tr.state(res.memory.steps[i], n));

    if (frozen) {
      const SabRead& fr = frozen->reads.at(t - 1);
      require_shape(fr.scores.size() == m, "frozen SAB memory does not match this episode");
      read.selected = fr.selected;
      read.threshold = fr.threshold;
    } else {
      read.selected = top_k_indices(read.scores, cfg.k_top);
      if (m > cfg.k_top) {
        read.threshold = read.scores[top_k_indices(read.scores, cfg.k_top + 1).back()];
      } else if (m > 0) {
        read.threshold = *std::min_element(read.scores.begin(), read.scores.end()) - 1.0;
      }
    }
    read.weights.assign(m, 0.0);
    read.summary.assign(n, 0.0);
    for (std::size_t i : read.selected) {
      read.weights[i] = read.scores[i] - read.threshold;
      axpy(read.weights[i], tr.state(res.memory.steps[i], n), read.summary);
    }

    Vec x = tr.e;
    axpy(1.0, read.summary, x);
    cell_forward(p, x, z, tr.steps[t - 1]);
    z = tr.steps[t - 1].z;
    tr.recon.push_back(reconstruct(p, ConstSpan(z).subspan(0, n)));
    res.memory.reads.push_back(std::move(read));
    if (t % cfg.k_attn == 0) res.memory.steps.push_back(t);
  }
  return res;
}

/// Sparse-replay gradient of one block's episode loss (batch size B),
/// accumulated into `grad`. If `arrivals` is given, (*arrivals)[t] receives
/// the gradient delivered to s_t through attention edges.
inline void sab_accumulate(const DecoderParams& p, const SabResult& res, ConstSpan inputs, ConstSpan target,
                           std::size_t B, const LossConfig& lcfg, const SabConfig& cfg, MutSpan grad,
                           std::vector<Vec>* arrivals = nullptr) {
  const DecoderConfig& dc = p.config();
  const ForwardTrace& tr = res.trace;
  const std::size_t n = dc.hidden, nz = dc.state_size(), K = tr.K();
  const std::size_t window = std::min(cfg.trunc, K);

  // pending[t][r]: gradient on z_t allowed to cross r more cell steps
  std::vector<std::vector<Vec>> pending(K + 1, std::vector<Vec>(window + 1));
  auto slot = [&](std::size_t t, std::size_t r) -> Vec& {
    Vec& v = pending[t][r];
    if (v.empty()) v.assign(nz, 0.0);
    return v;
  };

  Vec dp(dc.patch_dim());
  for (std::size_t t = 1; t <= K; ++t) {
    step_loss_grad(target, tr.recon[t - 1], K, B, lcfg, dp);
    const Vec ds = backprop_output(p, tr.state(t, n), dp, grad);
    axpy(1.0, ds, MutSpan(slot(t, window)).subspan(0, n));
  }

  if (arrivals) arrivals->assign(K + 1, Vec(n, 0.0));
  Vec de(n, 0.0), dx(n), dz_prev(nz), dquery(n), dmem_step(n);
  for (std::size_t t = K; t >= 1; --t) {
    const SabRead& read = res.memory.reads[t - 1];
    const ConstSpan query = t >= 2 ? tr.state(t - 1, n) : ConstSpan();
    for (std::size_t r = window; r >= 1; --r) {
      const Vec& g = pending[t][r];
      if (g.empty() || std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; })) continue;
      cell_vjp(p, tr.steps[t - 1], g, dx, dz_prev, grad);
      axpy(1.0, dx, de);

      // summary = sum_sel (q.m_i - threshold) m_i, and dsummary = dx
      fill_zero(dquery);
      for (std::size_t i : read.selected) {
        const std::size_t j = res.memory.steps[i];
        const ConstSpan mem = tr.state(j, n);
        const double dw = dot(dx, mem);
        fill_zero(dmem_step);
        axpy(read.weights[i], dx, dmem_step);
        if (!query.empty()) {
          axpy(dw, query, dmem_step);
          axpy(dw, mem, dquery);
        }
        axpy(1.0, dmem_step, MutSpan(slot(j, window)).subspan(0, n));
        if (arrivals) axpy(1.0, dmem_step, (*arrivals)[j]);
      }
      if (r >= 2 && t >= 2) {
        Vec& next = slot(t - 1, r - 1);
        axpy(1.0, dz_prev, next);
        axpy(1.0, dquery, MutSpan(next).subspan(0, n));
      }
    }
  }
  backprop_embedding(p, inputs, de, grad);
}

inline GradientSet sab_backward(const DecoderParams& p, const SabResult& res, const PatchBlock& block,
                                const LossConfig& lcfg, const SabConfig& cfg, std::size_t B = 1,
                                std::vector<Vec>* arrivals = nullptr) {
  GradientSet g = p.zeros_like();
  sab_accumulate(p, res, block.inputs, block.target, B, lcfg, cfg, g, arrivals);
  check_finite_gradient(g);
  return g;
}

}  // namespace nidec

#endif  // NIDEC_SAB_HPP
