#ifndef NIDEC_METRICS_HPP
#define NIDEC_METRICS_HPP

// PSNR, SSIM and MS-SSIM on unit-range grayscale images.
// SSIM uses an 11x11 Gaussian window (sigma 1.5) evaluated over valid
// positions, K1 = 0.01, K2 = 0.03, dynamic range 1. MS-SSIM uses the
// standard five-scale exponents with 2x2 mean pooling between scales.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>

#include "nidec/error.hpp"
#include "nidec/image.hpp"

namespace nidec {

struct MetricReport {
  double psnr = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  std::optional<double> bpp;
};

inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr std::array<double, 5> kMsSsimWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

namespace detail {

inline void require_same_dims(const UnitImage& a, const UnitImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                     std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline UnitImage clamped(const UnitImage& img) {
  UnitImage out = img;
  for (double& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

inline const std::array<double, kSsimWindow>& gaussian_taps() {
  static const std::array<double, kSsimWindow> taps = [] {
    std::array<double, kSsimWindow> t{};
    double sum = 0.0;
    const double c = (kSsimWindow - 1) / 2.0;
    for (std::size_t i = 0; i < kSsimWindow; ++i) {
      const double x = static_cast<double>(i) - c;
      t[i] = std::exp(-(x * x) / (2.0 * kSsimSigma * kSsimSigma));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps;
}

/// Separable Gaussian filter over valid positions.
inline UnitImage filter_valid(const UnitImage& img) {
  const auto& g = gaussian_taps();
  const std::size_t ow = img.width - kSsimWindow + 1, oh = img.height - kSsimWindow + 1;
  UnitImage horiz(ow, img.height);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * img.at(y, x + k);
      horiz.at(y, x) = acc;
    }
  UnitImage out(ow, oh);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * horiz.at(y + k, x);
      out.at(y, x) = acc;
    }
  return out;
}

struct SsimMeans {
  double ssim = 0.0;  // mean of l * cs
  double cs = 0.0;    // mean of contrast-structure term
};

inline SsimMeans ssim_means(const UnitImage& a, const UnitImage& b) {
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw ShapeError("SSIM needs images of at least 11x11");
  const double c1 = kSsimK1 * kSsimK1, c2 = kSsimK2 * kSsimK2;
  UnitImage aa = a, bb = b, ab = a;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    aa.pixels[i] = a.pixels[i] * a.pixels[i];
    bb.pixels[i] = b.pixels[i] * b.pixels[i];
    ab.pixels[i] = a.pixels[i] * b.pixels[i];
  }
  const UnitImage mu_a = filter_valid(a), mu_b = filter_valid(b);
  const UnitImage s_aa = filter_valid(aa), s_bb = filter_valid(bb), s_ab = filter_valid(ab);
  SsimMeans m;
  const std::size_t count = mu_a.pixels.size();
  for (std::size_t i = 0; i < count; ++i) {
    const double ma = mu_a.pixels[i], mb = mu_b.pixels[i];
    const double va = s_aa.pixels[i] - ma * ma, vb = s_bb.pixels[i] - mb * mb, cov = s_ab.pixels[i] - ma * mb;
    const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    m.ssim += l * cs;
    m.cs += cs;
  }
  m.ssim /= static_cast<double>(count);
  m.cs /= static_cast<double>(count);
  return m;
}

inline UnitImage downsample2(const UnitImage& img) {
  UnitImage out(img.width / 2, img.height / 2);
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x)
      out.at(y, x) = 0.25 * (img.at(2 * y, 2 * x) + img.at(2 * y, 2 * x + 1) + img.at(2 * y + 1, 2 * x) +
                             img.at(2 * y + 1, 2 * x + 1));
  return out;
}

}  // namespace detail

inline double mse(const UnitImage& ref, const UnitImage& test) {
  detail::require_same_dims(ref, test);
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = std::clamp(ref.pixels[i], 0.0, 1.0) - std::clamp(test.pixels[i], 0.0, 1.0);
    acc += d * d;
  }
  return acc / static_cast<double>(ref.pixels.size());
}

/// 10 log10(1 / MSE) with peak 1. Identical images give +infinity.
inline double psnr(const UnitImage& ref, const UnitImage& test) {
  const double m = mse(ref, test);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

inline double ssim(const UnitImage& ref, const UnitImage& test) {
  detail::require_same_dims(ref, test);
  return detail::ssim_means(detail::clamped(ref), detail::clamped(test)).ssim;
}

/// Number of MS-SSIM scales usable for the given size (1..5).
inline std::size_t ms_ssim_scales(std::size_t width, std::size_t height) {
  std::size_t scales = 1;
  std::size_t m = std::min(width, height);
  while (scales < kMsSsimWeights.size() && m / 2 >= kSsimWindow) {
    m /= 2;
    ++scales;
  }
  return scales;
}

/// prod_{j<M} cs_j^{w_j} * ssim_M^{w_M}, weights renormalized when fewer
/// than five scales fit. Negative terms are clamped to 0.
inline double ms_ssim(const UnitImage& ref, const UnitImage& test) {
  detail::require_same_dims(ref, test);
  const std::size_t scales = ms_ssim_scales(ref.width, ref.height);
  double wsum = 0.0;
  for (std::size_t j = 0; j < scales; ++j) wsum += kMsSsimWeights[j];
  UnitImage a = detail::clamped(ref), b = detail::clamped(test);
  double result = 1.0;
  for (std::size_t j = 0; j < scales; ++j) {
    const detail::SsimMeans m = detail::ssim_means(a, b);
    const double w = kMsSsimWeights[j] / wsum;
    const double term = j + 1 == scales ? m.ssim : m.cs;
    result *= std::pow(std::max(term, 0.0), w);
    if (j + 1 < scales) {
      a = detail::downsample2(a);
      b = detail::downsample2(b);
    }
  }
  return result;
}

inline MetricReport evaluate_metrics(const UnitImage& ref, const UnitImage& test) {
  return {psnr(ref, test), ssim(ref, test), ms_ssim(ref, test), std::nullopt};
}

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace nidec

#endif  // NIDEC_METRICS_HPP
