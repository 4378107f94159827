#ifndef NIDEC_CODEC_HPP
#define NIDEC_CODEC_HPP

// JPEG-like transform codec used to produce quantized patch symbols:
// 8x8 orthonormal DCT-II, quality-scaled luminance table, round to nearest.
// No entropy coding; the symbols themselves are the decoder's input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

inline constexpr std::size_t kCodecBlock = 8;

/// Quantized symbols are divided by this after rounding.
inline constexpr double kSymbolScale = 128.0;

/// Standard JPEG luminance quantization table (ITU T.81, Annex K).
inline constexpr std::array<int, 64> kJpegLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct QuantizerConfig {
  double quality_scale = 2.0;
  std::array<int, 64> table = kJpegLumaTable;

  void validate() const {
    if (!(quality_scale > 0.0) || !std::isfinite(quality_scale))
      throw ConfigError("quality scale must be a positive finite number");
    for (int t : table)
      if (t < 1) throw ConfigError("quantization table entries must be >= 1");
  }

  /// Quantization step for coefficient (u, v), in 0..255 intensity units.
  double step(std::size_t u, std::size_t v) const { return table[u * kCodecBlock + v] * quality_scale; }
};

/// Orthonormal DCT-II basis for size d: C[k][n] = a_k cos(pi (2n+1) k / 2d).
inline const Mat& dct_basis(std::size_t d = kCodecBlock) {
  static const Mat basis8 = [] {
    const std::size_t n = kCodecBlock;
    Mat c(n, n);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      for (std::size_t i = 0; i < n; ++i)
        c(k, i) = a * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * n));
    }
    return c;
  }();
  if (d != kCodecBlock) throw Error("built-in transform supports 8x8 patches only; use import for other sizes");
  return basis8;
}

/// 2-D DCT of a row-major d x d block: C X C^T.
inline Vec dct2(ConstSpan block) {
  const std::size_t d = kCodecBlock;
  require_shape(block.size() == d * d, "dct2 block");
  const Mat& c = dct_basis();
  Vec tmp(d * d, 0.0), out(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t x = 0; x < d; ++x) {
      double acc = 0.0;
      for (std::size_t y = 0; y < d; ++y) acc += c(k, y) * block[y * d + x];
      tmp[k * d + x] = acc;
    }
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l) {
      double acc = 0.0;
      for (std::size_t x = 0; x < d; ++x) acc += tmp[k * d + x] * c(l, x);
      out[k * d + l] = acc;
    }
  return out;
}

/// Inverse 2-D DCT: C^T Y C.
inline Vec idct2(ConstSpan coeffs) {
  const std::size_t d = kCodecBlock;
  require_shape(coeffs.size() == d * d, "idct2 block");
  const Mat& c = dct_basis();
  Vec tmp(d * d, 0.0), out(d * d, 0.0);
  for (std::size_t y = 0; y < d; ++y)
    for (std::size_t l = 0; l < d; ++l) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += c(k, y) * coeffs[k * d + l];
      tmp[y * d + l] = acc;
    }
  for (std::size_t y = 0; y < d; ++y)
    for (std::size_t x = 0; x < d; ++x) {
      double acc = 0.0;
      for (std::size_t l = 0; l < d; ++l) acc += tmp[y * d + l] * c(l, x);
      out[y * d + x] = acc;
    }
  return out;
}

/// Pixels in 0..255 units -> normalized quantized symbols (integer / 128).
inline Vec dct_quantize(ConstSpan patch, const QuantizerConfig& cfg) {
  const std::size_t d = kCodecBlock;
  require_shape(patch.size() == d * d, "dct_quantize expects an 8x8 patch");
  Vec centered(patch.begin(), patch.end());
  for (double& v : centered) v -= 128.0;
  Vec coeffs = dct2(centered);
  for (std::size_t u = 0; u < d; ++u)
    for (std::size_t v = 0; v < d; ++v) {
      double& x = coeffs[u * d + v];
      x = std::nearbyint(x / cfg.step(u, v)) / kSymbolScale;
      if (x == 0.0) x = 0.0;  // no negative zeros in stored symbols
    }
  return coeffs;
}

/// Dequantized DCT coefficients (0..255 units), before the inverse transform.
inline Vec dequantize_coefficients(ConstSpan q, const QuantizerConfig& cfg) {
  const std::size_t d = kCodecBlock;
  require_shape(q.size() == d * d, "dequantize expects 64 symbols");
  Vec coeffs(q.begin(), q.end());
  for (std::size_t u = 0; u < d; ++u)
    for (std::size_t v = 0; v < d; ++v) coeffs[u * d + v] *= kSymbolScale * cfg.step(u, v);
  return coeffs;
}

/// Non-neural reconstruction: inverse scaling, inverse DCT, re-center,
/// then map to [0,1] and clamp.
inline Vec dequantize_baseline(ConstSpan q, const QuantizerConfig& cfg) {
  Vec pixels = idct2(dequantize_coefficients(q, cfg));
  for (double& v : pixels) v = std::clamp((v + 128.0) / 255.0, 0.0, 1.0);
  return pixels;
}

// ---------------------------------------------------------------------------
// 9-patch context window

struct PatchCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  bool operator==(const PatchCoord&) const = default;
};

inline constexpr std::size_t kContextPatches = 9;

/// The 3x3 neighborhood used as context for `target`. The window is
/// centered on the target clamped into [1, rows-2] x [1, cols-2], so border
/// targets reuse the nearest full interior window.
inline std::array<PatchCoord, kContextPatches> block_window(PatchCoord target, std::size_t grid_rows,
                                                            std::size_t grid_cols) {
  if (grid_rows < 3 || grid_cols < 3)
    throw Error("block_window: patch grid must be at least 3x3, got " + std::to_string(grid_rows) + "x" +
                std::to_string(grid_cols));
  if (target.row >= grid_rows || target.col >= grid_cols) throw Error("block_window: target outside grid");
  const std::size_t cr = std::clamp<std::size_t>(target.row, 1, grid_rows - 2);
  const std::size_t cc = std::clamp<std::size_t>(target.col, 1, grid_cols - 2);
  std::array<PatchCoord, kContextPatches> w;
  std::size_t k = 0;
  for (std::size_t r = cr - 1; r <= cr + 1; ++r)
    for (std::size_t c = cc - 1; c <= cc + 1; ++c) w[k++] = {r, c};
  return w;
}

}  // namespace nidec

#endif  // NIDEC_CODEC_HPP
