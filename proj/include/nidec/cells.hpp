#ifndef NIDEC_CELLS_HPP
#define NIDEC_CELLS_HPP

// State functions z_k = F(x, z_{k-1}; Theta_s) for the five cell kinds.
//
// Every cell exposes three operations on a cached step:
//   cell_forward  - evaluate and cache intermediates
//   cell_vjp      - reverse mode: (dz) -> (dx, dz_prev), accumulates dTheta_s
//   cell_jvp      - forward mode: (tz_prev, tx) -> tz
// x is the cell input (the embedding e, plus the attention summary under
// SAB). For LSTM z = (s, c); for the others z = s.

#include <cstddef>

#include "nidec/model.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// Intermediates of one state update. Fields not used by a cell stay empty.
struct StepCache {
  Vec x;       // cell input
  Vec z_prev;  // state before the step
  Vec z;       // state after the step

  // Elman / MLP: a = pre-activation.
  // LSTM: a_f, a_i, a_g, a_o pre-activations; f, i, g, o gate values; act_c = phi_s(c).
  // GRU: a_f = a_z, a_i = a_r, a_g = a_h; f = z, i = r, g = s~; rs = r*s_prev.
  // Delta: vs = V s_prev, a_g = candidate pre-activation, g = s~, a_i = r pre-act,
  //        i = r, a = mixture m before the outer squashing.
  Vec a;
  Vec a_f, a_i, a_g, a_o;
  Vec f, i, g, o;
  Vec act_c;
  Vec rs;
  Vec vs;

  bool operator==(const StepCache&) const = default;
};

namespace detail {

inline ConstSpan hidden_part(ConstSpan z, std::size_t n) { return z.subspan(0, n); }

inline Vec affine(ConstSpan x, MatView v, ConstSpan s_prev, ConstSpan b) {
  Vec out(x.begin(), x.end());
  gemv_acc(v, s_prev, out);
  axpy(1.0, b, out);
  return out;
}

inline Vec map(ConstSpan v, double (*fn)(double)) {
  Vec out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = fn(v[k]);
  return out;
}

inline double tanh_fn(double v) { return std::tanh(v); }

}  // namespace detail

inline void cell_forward(const DecoderParams& p, ConstSpan x, ConstSpan z_prev, StepCache& st) {
  const DecoderConfig& cfg = p.config();
  const std::size_t n = cfg.hidden;
  require_shape(x.size() == n, "cell input");
  require_shape(z_prev.size() == cfg.state_size(), "cell state");
  st = StepCache{};
  st.x.assign(x.begin(), x.end());
  st.z_prev.assign(z_prev.begin(), z_prev.end());
  const ConstSpan s_prev = detail::hidden_part(z_prev, n);
  const Activation act = cfg.state_act;

  switch (cfg.cell) {
    case CellKind::kElman:
      st.a = detail::affine(x, p.mat(Slot::kV), s_prev, p.vec(Slot::kB));
      st.z = activate(act, st.a);
      break;

    case CellKind::kMlp:
      st.a.assign(x.begin(), x.end());
      axpy(1.0, p.vec(Slot::kB), st.a);
      st.z = activate(act, st.a);
      break;

    case CellKind::kLstm: {
      const ConstSpan c_prev = z_prev.subspan(n, n);
      st.a_f = detail::affine(x, p.mat(Slot::kVf), s_prev, p.vec(Slot::kBf));
      st.a_i = detail::affine(x, p.mat(Slot::kVi), s_prev, p.vec(Slot::kBi));
      st.a_g = detail::affine(x, p.mat(Slot::kVc), s_prev, p.vec(Slot::kBc));
      st.a_o = detail::affine(x, p.mat(Slot::kVo), s_prev, p.vec(Slot::kBo));
      st.f = detail::map(st.a_f, sigmoid);
      st.i = detail::map(st.a_i, sigmoid);
      st.g = detail::map(st.a_g, detail::tanh_fn);
      st.o = detail::map(st.a_o, sigmoid);
      st.z.assign(2 * n, 0.0);
      for (std::size_t k = 0; k < n; ++k) st.z[n + k] = st.f[k] * c_prev[k] + st.i[k] * st.g[k];
      st.act_c = activate(act, ConstSpan(st.z).subspan(n, n));
      for (std::size_t k = 0; k < n; ++k) st.z[k] = st.o[k] * st.act_c[k];
      break;
    }

    case CellKind::kGru: {
      st.a_f = detail::affine(x, p.mat(Slot::kVz), s_prev, p.vec(Slot::kBz));
      st.a_i = detail::affine(x, p.mat(Slot::kVr), s_prev, p.vec(Slot::kBr));
      st.f = detail::map(st.a_f, sigmoid);
      st.i = detail::map(st.a_i, sigmoid);
      st.rs = hadamard(st.i, s_prev);
      st.a_g = detail::affine(x, p.mat(Slot::kVs), st.rs, p.vec(Slot::kBs));
      st.g = activate(act, st.a_g);
      st.z.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) st.z[k] = st.f[k] * st.g[k] + (1.0 - st.f[k]) * s_prev[k];
      break;
    }

    case CellKind::kDelta: {
      const ConstSpan alpha = p.vec(Slot::kAlpha), beta1 = p.vec(Slot::kBeta1), beta2 = p.vec(Slot::kBeta2);
      const ConstSpan b = p.vec(Slot::kB), br = p.vec(Slot::kBr);
      st.vs = matvec(p.mat(Slot::kV), s_prev);
      st.a_g.assign(n, 0.0);
      st.a_i.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const double d1 = alpha[k] * st.vs[k] * x[k];
        const double d2 = beta1[k] * st.vs[k] + beta2[k] * x[k];
        st.a_g[k] = d1 + d2 + b[k];
        st.a_i[k] = x[k] + br[k];
      }
      st.g = activate(act, st.a_g);
      st.i = detail::map(st.a_i, sigmoid);
      st.a.assign(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) st.a[k] = (1.0 - st.i[k]) * st.g[k] + st.i[k] * s_prev[k];
      st.z = activate(act, st.a);
      break;
    }
  }
}

/// Reverse-mode step. dx and dz_prev are overwritten; state-parameter
/// gradients are accumulated into `grad` (full flat layout or at least the
/// recurrent prefix).
inline void cell_vjp(const DecoderParams& p, const StepCache& st, ConstSpan dz, MutSpan dx, MutSpan dz_prev,
                     MutSpan grad) {
  const DecoderConfig& cfg = p.config();
  const ParamLayout& lay = p.layout();
  const std::size_t n = cfg.hidden;
  require_shape(dz.size() == cfg.state_size() && dz_prev.size() == cfg.state_size() && dx.size() == n, "cell_vjp");
  require_shape(grad.size() >= lay.recurrent_size(), "cell_vjp gradient");
  const ConstSpan s_prev = detail::hidden_part(st.z_prev, n);
  const Activation act = cfg.state_act;
  auto gmat = [&](Slot s) { return lay.mat(grad, lay.spec(s)); };
  auto gvec = [&](Slot s) { return lay.vec(grad, lay.spec(s)); };
  fill_zero(dx);
  fill_zero(dz_prev);
  MutSpan ds_prev = dz_prev.subspan(0, n);

  switch (cfg.cell) {
    case CellKind::kElman: {
      Vec da(n);
      for (std::size_t k = 0; k < n; ++k) da[k] = dz[k] * activate_deriv(act, st.a[k]);
      axpy(1.0, da, dx);
      gemv_t_acc(p.mat(Slot::kV), da, ds_prev);
      ger_acc(gmat(Slot::kV), da, s_prev);
      axpy(1.0, da, gvec(Slot::kB));
      break;
    }

    case CellKind::kMlp: {
      Vec da(n);
      for (std::size_t k = 0; k < n; ++k) da[k] = dz[k] * activate_deriv(act, st.a[k]);
      axpy(1.0, da, dx);
      axpy(1.0, da, gvec(Slot::kB));
      break;
    }

    case CellKind::kLstm: {
      const ConstSpan c_prev = ConstSpan(st.z_prev).subspan(n, n);
      const ConstSpan c = ConstSpan(st.z).subspan(n, n);
      Vec daf(n), dai(n), dag(n), dao(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double ds = dz[k];
        const double dc = dz[n + k] + ds * st.o[k] * activate_deriv(act, c[k]);
        const double d_o = ds * st.act_c[k];
        daf[k] = dc * c_prev[k] * st.f[k] * (1.0 - st.f[k]);
        dai[k] = dc * st.g[k] * st.i[k] * (1.0 - st.i[k]);
        dag[k] = dc * st.i[k] * (1.0 - st.g[k] * st.g[k]);
        dao[k] = d_o * st.o[k] * (1.0 - st.o[k]);
        dz_prev[n + k] = dc * st.f[k];
        dx[k] = daf[k] + dai[k] + dag[k] + dao[k];
      }
      gemv_t_acc(p.mat(Slot::kVf), daf, ds_prev);
      gemv_t_acc(p.mat(Slot::kVi), dai, ds_prev);
      gemv_t_acc(p.mat(Slot::kVc), dag, ds_prev);
      gemv_t_acc(p.mat(Slot::kVo), dao, ds_prev);
      ger_acc(gmat(Slot::kVf), daf, s_prev);
      ger_acc(gmat(Slot::kVi), dai, s_prev);
      ger_acc(gmat(Slot::kVc), dag, s_prev);
      ger_acc(gmat(Slot::kVo), dao, s_prev);
      axpy(1.0, daf, gvec(Slot::kBf));
      axpy(1.0, dai, gvec(Slot::kBi));
      axpy(1.0, dag, gvec(Slot::kBc));
      axpy(1.0, dao, gvec(Slot::kBo));
      break;
    }

    case CellKind::kGru: {
      Vec daz(n), dar(n), dah(n), drs(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        const double ds = dz[k];
        const double dzg = ds * (st.g[k] - s_prev[k]);
        const double dh = ds * st.f[k];
        ds_prev[k] += ds * (1.0 - st.f[k]);
        dah[k] = dh * activate_deriv(act, st.a_g[k]);
        daz[k] = dzg * st.f[k] * (1.0 - st.f[k]);
      }
      gemv_t_acc(p.mat(Slot::kVs), dah, drs);
      for (std::size_t k = 0; k < n; ++k) {
        const double dr = drs[k] * s_prev[k];
        ds_prev[k] += drs[k] * st.i[k];
        dar[k] = dr * st.i[k] * (1.0 - st.i[k]);
        dx[k] = daz[k] + dar[k] + dah[k];
      }
      gemv_t_acc(p.mat(Slot::kVz), daz, ds_prev);
      gemv_t_acc(p.mat(Slot::kVr), dar, ds_prev);
      ger_acc(gmat(Slot::kVz), daz, s_prev);
      ger_acc(gmat(Slot::kVr), dar, s_prev);
      ger_acc(gmat(Slot::kVs), dah, st.rs);
      axpy(1.0, daz, gvec(Slot::kBz));
      axpy(1.0, dar, gvec(Slot::kBr));
      axpy(1.0, dah, gvec(Slot::kBs));
      break;
    }

    case CellKind::kDelta: {
      const ConstSpan alpha = p.vec(Slot::kAlpha), beta1 = p.vec(Slot::kBeta1), beta2 = p.vec(Slot::kBeta2);
      MutSpan g_alpha = gvec(Slot::kAlpha), g_beta1 = gvec(Slot::kBeta1), g_beta2 = gvec(Slot::kBeta2);
      MutSpan g_b = gvec(Slot::kB), g_br = gvec(Slot::kBr);
      Vec dvs(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double dm = dz[k] * activate_deriv(act, st.a[k]);
        const double r = st.i[k];
        const double dh = dm * (1.0 - r);
        const double dr = dm * (s_prev[k] - st.g[k]);
        ds_prev[k] += dm * r;
        const double dah = dh * activate_deriv(act, st.a_g[k]);
        const double x = st.x[k], vs = st.vs[k];
        g_alpha[k] += dah * vs * x;
        g_beta1[k] += dah * vs;
        g_beta2[k] += dah * x;
        g_b[k] += dah;
        dvs[k] = dah * (alpha[k] * x + beta1[k]);
        const double dar = dr * r * (1.0 - r);
        g_br[k] += dar;
        dx[k] = dah * (alpha[k] * vs + beta2[k]) + dar;
      }
      gemv_t_acc(p.mat(Slot::kV), dvs, ds_prev);
      ger_acc(gmat(Slot::kV), dvs, s_prev);
      break;
    }
  }
}

/// Forward-mode step: tz = (dF/dz_prev) tz_prev + (dF/dx) tx. Pass an empty
/// `tx` for a zero input tangent.
inline void cell_jvp(const DecoderParams& p, const StepCache& st, ConstSpan tz_prev, ConstSpan tx, MutSpan tz) {
  const DecoderConfig& cfg = p.config();
  const std::size_t n = cfg.hidden;
  require_shape(tz_prev.size() == cfg.state_size() && tz.size() == cfg.state_size(), "cell_jvp");
  require_shape(tx.empty() || tx.size() == n, "cell_jvp input tangent");
  const ConstSpan s_prev = detail::hidden_part(st.z_prev, n);
  const ConstSpan ts_prev = tz_prev.subspan(0, n);
  const Activation act = cfg.state_act;
  auto in = [&](std::size_t k) { return tx.empty() ? 0.0 : tx[k]; };
  // t = x_tangent + M ts_prev
  auto lin = [&](Slot m, ConstSpan v) {
    Vec t(n, 0.0);
    gemv_acc(p.mat(m), v, t);
    for (std::size_t k = 0; k < n; ++k) t[k] += in(k);
    return t;
  };

  switch (cfg.cell) {
    case CellKind::kElman: {
      const Vec ta = lin(Slot::kV, ts_prev);
      for (std::size_t k = 0; k < n; ++k) tz[k] = activate_deriv(act, st.a[k]) * ta[k];
      break;
    }
    case CellKind::kMlp:
      for (std::size_t k = 0; k < n; ++k) tz[k] = activate_deriv(act, st.a[k]) * in(k);
      break;

    case CellKind::kLstm: {
      const ConstSpan c_prev = ConstSpan(st.z_prev).subspan(n, n);
      const ConstSpan tc_prev = tz_prev.subspan(n, n);
      const ConstSpan c = ConstSpan(st.z).subspan(n, n);
      const Vec taf = lin(Slot::kVf, ts_prev), tai = lin(Slot::kVi, ts_prev);
      const Vec tag = lin(Slot::kVc, ts_prev), tao = lin(Slot::kVo, ts_prev);
      for (std::size_t k = 0; k < n; ++k) {
        const double tf = st.f[k] * (1.0 - st.f[k]) * taf[k];
        const double ti = st.i[k] * (1.0 - st.i[k]) * tai[k];
        const double tg = (1.0 - st.g[k] * st.g[k]) * tag[k];
        const double to = st.o[k] * (1.0 - st.o[k]) * tao[k];
        const double tc = tf * c_prev[k] + st.f[k] * tc_prev[k] + ti * st.g[k] + st.i[k] * tg;
        tz[n + k] = tc;
        tz[k] = to * st.act_c[k] + st.o[k] * activate_deriv(act, c[k]) * tc;
      }
      break;
    }

    case CellKind::kGru: {
      const Vec taz = lin(Slot::kVz, ts_prev), tar = lin(Slot::kVr, ts_prev);
      Vec trs(n);
      for (std::size_t k = 0; k < n; ++k) {
        const double tr = st.i[k] * (1.0 - st.i[k]) * tar[k];
        trs[k] = tr * s_prev[k] + st.i[k] * ts_prev[k];
      }
      const Vec tah = lin(Slot::kVs, trs);
      for (std::size_t k = 0; k < n; ++k) {
        const double tzg = st.f[k] * (1.0 - st.f[k]) * taz[k];
        const double th = activate_deriv(act, st.a_g[k]) * tah[k];
        tz[k] = tzg * (st.g[k] - s_prev[k]) + st.f[k] * th + (1.0 - st.f[k]) * ts_prev[k];
      }
      break;
    }

    case CellKind::kDelta: {
      const ConstSpan alpha = p.vec(Slot::kAlpha), beta1 = p.vec(Slot::kBeta1), beta2 = p.vec(Slot::kBeta2);
      Vec tvs(n, 0.0);
      gemv_acc(p.mat(Slot::kV), ts_prev, tvs);
      for (std::size_t k = 0; k < n; ++k) {
        const double x = st.x[k], vs = st.vs[k], tx_k = in(k);
        const double tah = alpha[k] * (tvs[k] * x + vs * tx_k) + beta1[k] * tvs[k] + beta2[k] * tx_k;
        const double th = activate_deriv(act, st.a_g[k]) * tah;
        const double r = st.i[k];
        const double tr = r * (1.0 - r) * tx_k;
        const double tm = tr * (s_prev[k] - st.g[k]) + (1.0 - r) * th + r * ts_prev[k];
        tz[k] = activate_deriv(act, st.a[k]) * tm;
      }
      break;
    }
  }
}

// Per-cell convenience wrappers -------------------------------------------

inline Vec step_state(const DecoderParams& p, ConstSpan e, ConstSpan z_prev) {
  StepCache st;
  cell_forward(p, e, z_prev, st);
  return st.z;
}

inline Vec step_elman(const DecoderParams& p, ConstSpan e, ConstSpan s_prev) { return step_state(p, e, s_prev); }
inline Vec step_gru(const DecoderParams& p, ConstSpan e, ConstSpan s_prev) { return step_state(p, e, s_prev); }
inline Vec step_delta(const DecoderParams& p, ConstSpan e, ConstSpan s_prev) { return step_state(p, e, s_prev); }

/// The MLP cell ignores any previous state.
inline Vec step_mlp(const DecoderParams& p, ConstSpan e) {
  return step_state(p, e, Vec(p.config().hidden, 0.0));
}

struct LstmState {
  Vec s;
  Vec c;
};

inline LstmState step_lstm(const DecoderParams& p, ConstSpan e, ConstSpan s_prev, ConstSpan c_prev) {
  Vec z(s_prev.begin(), s_prev.end());
  z.insert(z.end(), c_prev.begin(), c_prev.end());
  const Vec out = step_state(p, e, z);
  const std::size_t n = p.config().hidden;
  return {Vec(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n)),
          Vec(out.begin() + static_cast<std::ptrdiff_t>(n), out.end())};
}

}  // namespace nidec

#endif  // NIDEC_CELLS_HPP
