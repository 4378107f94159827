#include <cmath>

#include <gtest/gtest.h>

#include "nidec/cells.hpp"
#include "nidec/decoder.hpp"
#include "nidec/model.hpp"
#include "test_util.hpp"

namespace nidec {
namespace {

using testing::random_block;
using testing::random_params;
using testing::small_config;

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// M v + V s + b with plain loops.
double pre(const DecoderParams& p, Slot m, std::size_t k, const Vec& s, double x_k, Slot b) {
  double acc = x_k + p.vec(b)[k];
  for (std::size_t j = 0; j < s.size(); ++j) acc += p.mat(m)(k, j) * s[j];
  return acc;
}

// Reference state functions, written out directly from the cell definitions.
Vec reference_step(const DecoderParams& p, const Vec& e, const Vec& z_prev) {
  const std::size_t n = p.config().hidden;
  const Vec s(z_prev.begin(), z_prev.begin() + static_cast<std::ptrdiff_t>(n));
  Vec out(p.config().state_size());
  switch (p.config().cell) {
    case CellKind::kElman:
      for (std::size_t k = 0; k < n; ++k) out[k] = std::tanh(pre(p, Slot::kV, k, s, e[k], Slot::kB));
      break;
    case CellKind::kMlp:
      for (std::size_t k = 0; k < n; ++k) out[k] = std::tanh(e[k] + p.vec(Slot::kB)[k]);
      break;
    case CellKind::kLstm:
      for (std::size_t k = 0; k < n; ++k) {
        const double f = sig(pre(p, Slot::kVf, k, s, e[k], Slot::kBf));
        const double i = sig(pre(p, Slot::kVi, k, s, e[k], Slot::kBi));
        const double g = std::tanh(pre(p, Slot::kVc, k, s, e[k], Slot::kBc));
        const double o = sig(pre(p, Slot::kVo, k, s, e[k], Slot::kBo));
        const double c = f * z_prev[n + k] + i * g;
        out[n + k] = c;
        out[k] = o * std::tanh(c);
      }
      break;
    case CellKind::kGru: {
      Vec rs(n);
      for (std::size_t k = 0; k < n; ++k) rs[k] = sig(pre(p, Slot::kVr, k, s, e[k], Slot::kBr)) * s[k];
      for (std::size_t k = 0; k < n; ++k) {
        const double zg = sig(pre(p, Slot::kVz, k, s, e[k], Slot::kBz));
        const double cand = std::tanh(pre(p, Slot::kVs, k, rs, e[k], Slot::kBs));
        out[k] = zg * cand + (1 - zg) * s[k];
      }
      break;
    }
    case CellKind::kDelta:
      for (std::size_t k = 0; k < n; ++k) {
        double vs = 0.0;
        for (std::size_t j = 0; j < n; ++j) vs += p.mat(Slot::kV)(k, j) * s[j];
        const double d1 = p.vec(Slot::kAlpha)[k] * vs * e[k];
        const double d2 = p.vec(Slot::kBeta1)[k] * vs + p.vec(Slot::kBeta2)[k] * e[k];
        const double cand = std::tanh(d1 + d2 + p.vec(Slot::kB)[k]);
        const double r = sig(e[k] + p.vec(Slot::kBr)[k]);
        out[k] = std::tanh((1 - r) * cand + r * s[k]);
      }
      break;
  }
  return out;
}

std::size_t expected_param_count(CellKind cell, std::size_t n, std::size_t pd, std::size_t N) {
  const std::size_t io = N * n * pd + pd * n + pd;
  switch (cell) {
    case CellKind::kElman: return io + n * n + n;
    case CellKind::kLstm: return io + 4 * (n * n + n);
    case CellKind::kGru: return io + 3 * (n * n + n);
    case CellKind::kDelta: return io + n * n + 5 * n;
    case CellKind::kMlp: return io + n;
  }
  return 0;
}

TEST(Layout, ParameterCountsPerCell) {
  for (CellKind cell : kAllCells) {
    const DecoderConfig cfg = small_config(cell, 6, 4, 3);
    EXPECT_EQ(DecoderParams(cfg).values().size(), expected_param_count(cell, 6, 16, 9)) << to_string(cell);
  }
}

TEST(Layout, SegmentsAreContiguousInOrder) {
  const DecoderConfig cfg = small_config(CellKind::kGru, 5, 2, 2);
  const ParamLayout lay(cfg);
  std::size_t offset = 0;
  for (const TensorSpec& t : lay.tensors()) {
    EXPECT_EQ(t.offset, offset) << t.name;
    offset += t.size();
  }
  EXPECT_EQ(offset, lay.total_size());
  EXPECT_EQ(lay.w_spec(0).offset, 0u);
  EXPECT_EQ(lay.recurrent_size(), lay.u_spec().offset);
  EXPECT_EQ(lay.c_spec().offset + lay.c_spec().size(), lay.total_size());
}

TEST(Init, MatricesBoundedBiasesZeroDeltaGates) {
  for (CellKind cell : kAllCells) {
    DecoderConfig cfg = small_config(cell, 16, 4, 2);
    SeededRng rng(1);
    const DecoderParams p = init_params(cfg, rng);
    for (const TensorSpec& t : p.layout().tensors()) {
      const ConstSpan v = ConstSpan(p.values()).subspan(t.offset, t.size());
      if (t.matrix) {
        double maxabs = 0.0;
        for (double x : v) {
          EXPECT_LE(std::abs(x), kInitBound);
          maxabs = std::max(maxabs, std::abs(x));
        }
        EXPECT_GT(maxabs, 0.03) << t.name;
      } else if (t.name == "beta1" || t.name == "beta2") {
        for (double x : v) EXPECT_EQ(x, 1.0);
      } else {
        for (double x : v) EXPECT_EQ(x, 0.0) << t.name;
      }
    }
  }
}

TEST(Init, SeedDeterminesParameters) {
  const DecoderConfig cfg = small_config(CellKind::kLstm);
  SeededRng a(5), b(5), c(6);
  EXPECT_EQ(init_params(cfg, a), init_params(cfg, b));
  EXPECT_FALSE(init_params(cfg, a) == init_params(cfg, c));
}

TEST(Cells, ForwardMatchesReferenceEquations) {
  for (CellKind cell : kAllCells) {
    const DecoderConfig cfg = small_config(cell, 5, 2, 1);
    const DecoderParams p = random_params(cfg, 2, 0.8);
    SeededRng rng(3);
    Vec e(5), z(cfg.state_size());
    for (double& v : e) v = rng.uniform(-1, 1);
    for (double& v : z) v = cell == CellKind::kMlp ? 0.0 : rng.uniform(-0.9, 0.9);
    const Vec got = step_state(p, e, z);
    const Vec want = reference_step(p, e, z);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14) << to_string(cell);
  }
}

TEST(Cells, LstmTupleApi) {
  const DecoderConfig cfg = small_config(CellKind::kLstm, 3, 2, 1);
  const DecoderParams p = random_params(cfg, 4);
  const Vec e = {0.1, -0.2, 0.3}, s = {0.4, 0.0, -0.5}, c = {1.0, -1.0, 0.2};
  const LstmState out = step_lstm(p, e, s, c);
  Vec z = s;
  z.insert(z.end(), c.begin(), c.end());
  const Vec ref = reference_step(p, e, z);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(out.s[k], ref[k], 1e-15);
    EXPECT_NEAR(out.c[k], ref[3 + k], 1e-15);
  }
}

TEST(Cells, MlpIgnoresHistory) {
  const DecoderConfig cfg = small_config(CellKind::kMlp, 4, 2, 5);
  const DecoderParams p = random_params(cfg, 5);
  const PatchBlock b = random_block(cfg, 6);
  const ForwardTrace tr = run_episode(p, b.inputs, 5);
  for (std::size_t k = 1; k < 5; ++k) EXPECT_EQ(tr.recon[k], tr.recon[0]);
}

TEST(Cells, StateShapeChecked) {
  const DecoderConfig cfg = small_config(CellKind::kLstm, 3, 2, 1);
  const DecoderParams p = random_params(cfg, 7);
  EXPECT_THROW(step_state(p, Vec(3), Vec(3)), ShapeError);
}

TEST(Decoder, EmbeddingIsSumOfPatchProjections) {
  const DecoderConfig cfg = small_config(CellKind::kElman, 3, 2, 1);
  const DecoderParams p = random_params(cfg, 8);
  const PatchBlock b = random_block(cfg, 9);
  const Vec e = embed(p, b.inputs);
  for (std::size_t u = 0; u < 3; ++u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < 9; ++i)
      for (std::size_t v = 0; v < 4; ++v) acc += p.W(i)(u, v) * b.inputs[i * 4 + v];
    EXPECT_NEAR(e[u], acc, 1e-14);
  }
}

TEST(Decoder, EpisodeUnrollsFromZeroState) {
  for (CellKind cell : kAllCells) {
    const DecoderConfig cfg = small_config(cell, 4, 2, 3);
    const DecoderParams p = random_params(cfg, 10);
    const PatchBlock b = random_block(cfg, 11);
    const ForwardTrace tr = run_episode(p, b);
    ASSERT_EQ(tr.K(), 3u);
    const Vec e = embed(p, b.inputs);
    Vec z(cfg.state_size(), 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      z = reference_step(p, e, z);
      for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(tr.steps[k].z[i], z[i], 1e-13);
      for (std::size_t i = 0; i < 4; ++i) {
        double r = p.c()[i];
        for (std::size_t u = 0; u < 4; ++u) r += p.U()(i, u) * z[u];
        EXPECT_NEAR(tr.recon[k][i], r, 1e-13);
      }
    }
  }
}

TEST(Decoder, ReconstructionIsUnclamped) {
  const DecoderConfig cfg = small_config(CellKind::kElman, 2, 1, 1);
  DecoderParams p(cfg);
  p.c_mut()[0] = 1.7;
  const ForwardTrace tr = run_episode(p, Vec(9, 0.0), 1);
  EXPECT_EQ(tr.recon[0][0], 1.7);
}

TEST(Decoder, ZeroStepsRejected) {
  const DecoderConfig cfg = small_config(CellKind::kElman);
  const DecoderParams p(cfg);
  EXPECT_THROW(run_episode(p, Vec(9 * 16, 0.0), 0), ConfigError);
}

}  // namespace
}  // namespace nidec
