#ifndef NIDEC_PIPELINE_HPP
#define NIDEC_PIPELINE_HPP

// Whole-image encode/decode paths and the synthetic image generator.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "nidec/codec.hpp"
#include "nidec/dataset.hpp"
#include "nidec/decoder.hpp"
#include "nidec/image.hpp"
#include "nidec/rng.hpp"

namespace nidec {

/// Extends an image to multiples of d by repeating its last row/column.
inline GrayImage pad_to_multiple(const GrayImage& img, std::size_t d) {
  if (img.width == 0 || img.height == 0) throw Error("empty image");
  const std::size_t w = (img.width + d - 1) / d * d, h = (img.height + d - 1) / d * d;
  if (w == img.width && h == img.height) return img;
  GrayImage out(w, h);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = img.at(std::min(r, img.height - 1), std::min(c, img.width - 1));
  return out;
}

inline UnitImage crop_top_left(const UnitImage& img, std::size_t width, std::size_t height) {
  if (img.width == width && img.height == height) return img;
  UnitImage out(width, height);
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t c = 0; c < width; ++c) out.at(r, c) = img.at(r, c);
  return out;
}

/// Quantize -> dequantize every 8x8 patch and stitch the result. Images
/// whose sides are not multiples of 8 are edge-padded, then cropped back.
inline UnitImage baseline_image(const GrayImage& img, const QuantizerConfig& cfg) {
  const PatchGrid grid = partition(pad_to_multiple(img, kCodecBlock), kCodecBlock);
  std::vector<Vec> out;
  out.reserve(grid.patches.size());
  for (const Vec& p : grid.patches) out.push_back(dequantize_baseline(dct_quantize(p, cfg), cfg));
  return crop_top_left(stitch(out, grid.rows, grid.cols, kCodecBlock), img.width, img.height);
}

/// Reconstructions after each refinement step: result[k-1] is the image
/// assembled from p~_k of every block, clamped to [0,1]. Same padding rule
/// as baseline_image.
inline std::vector<UnitImage> neural_trajectory(const GrayImage& img, const DecoderParams& p,
                                                const QuantizerConfig& cfg, std::size_t K) {
  const std::size_t d = p.config().d;
  if (d != kCodecBlock) throw Error("whole-image decoding uses the built-in 8x8 codec");
  const GrayImage padded = pad_to_multiple(img, d);
  const std::size_t rows = padded.height / d, cols = padded.width / d;
  const std::vector<PatchBlock> blocks = image_blocks(padded, cfg, d);
  std::vector<std::vector<Vec>> per_step(K);
  for (auto& v : per_step) v.reserve(blocks.size());
  for (const PatchBlock& b : blocks) {
    const ForwardTrace tr = run_episode(p, b.inputs, K);
    for (std::size_t k = 0; k < K; ++k) {
      Vec r = tr.recon[k];
      for (double& v : r) v = std::clamp(v, 0.0, 1.0);
      per_step[k].push_back(std::move(r));
    }
  }
  std::vector<UnitImage> out;
  out.reserve(K);
  for (const auto& patches : per_step)
    out.push_back(crop_top_left(stitch(patches, rows, cols, d), img.width, img.height));
  return out;
}

inline UnitImage neural_image(const GrayImage& img, const DecoderParams& p, const QuantizerConfig& cfg, std::size_t K) {
  return neural_trajectory(img, p, cfg, K).back();
}

/// Smooth synthetic scene: a tilted illumination gradient, a few low
/// frequency ripples, soft-edged disks and bars, and mild sensor noise.
inline GrayImage synthetic_image(SeededRng& rng, std::size_t width, std::size_t height) {
  const double pi = std::numbers::pi;
  UnitImage f(width, height);
  const double base = rng.uniform(0.3, 0.7);
  const double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
  struct Ripple { double amp, fx, fy, phase; };
  std::vector<Ripple> ripples(3);
  for (auto& r : ripples)
    r = {rng.uniform(0.03, 0.1), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.0, 2.0 * pi)};
  struct Disk { double cx, cy, rad, val, soft; };
  std::vector<Disk> disks(2 + rng.below(3));
  for (auto& d : disks)
    d = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.08, 0.3), rng.uniform(-0.3, 0.3),
         rng.uniform(0.01, 0.05)};
  const double bar_angle = rng.uniform(0.0, pi), bar_off = rng.uniform(-0.3, 0.3), bar_val = rng.uniform(-0.2, 0.2);

  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (x + 0.5) / static_cast<double>(width), v = (y + 0.5) / static_cast<double>(height);
      double val = base + gx * (u - 0.5) + gy * (v - 0.5);
      for (const auto& r : ripples) val += r.amp * std::sin(2.0 * pi * (r.fx * u + r.fy * v) + r.phase);
      for (const auto& d : disks) {
        const double dist = std::hypot(u - d.cx, v - d.cy);
        val += d.val / (1.0 + std::exp((dist - d.rad) / d.soft));
      }
      const double proj = (u - 0.5) * std::cos(bar_angle) + (v - 0.5) * std::sin(bar_angle) - bar_off;
      val += bar_val / (1.0 + std::exp(-proj / 0.02));
      f.at(y, x) = val + 0.01 * rng.normal();
    }
  return to_gray(f);
}

}  // namespace nidec

#endif  // NIDEC_PIPELINE_HPP
