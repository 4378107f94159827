#ifndef NIDEC_IMAGE_HPP
#define NIDEC_IMAGE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "nidec/error.hpp"
#include "nidec/numeric.hpp"

namespace nidec {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), samples(w * h, fill) {}

  std::uint8_t& at(std::size_t row, std::size_t col) { return samples[row * width + col]; }
  std::uint8_t at(std::size_t row, std::size_t col) const { return samples[row * width + col]; }
  bool operator==(const GrayImage&) const = default;
};

/// Image with real-valued intensities in [0, 1] (reconstructions, metric inputs).
struct UnitImage {
  std::size_t width = 0;
  std::size_t height = 0;
  Vec pixels;

  UnitImage() = default;
  UnitImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

inline UnitImage to_unit(const GrayImage& img) {
  UnitImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) out.pixels[i] = img.samples[i] / 255.0;
  return out;
}

/// Clamps to [0,1] and rounds to the nearest 8-bit level.
inline GrayImage to_gray(const UnitImage& img) {
  GrayImage out(img.width, img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::clamp(img.pixels[i], 0.0, 1.0);
    out.samples[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255)

namespace detail {

class PgmHeaderParser {
 public:
  explicit PgmHeaderParser(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::uint64_t offset() const { return pos_; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t read_uint(const char* field) {
    skip_space_and_comments();
    const std::uint64_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes_[pos_] - '0');
      if (v > (1u << 30)) throw FormatError(std::string("PGM ") + field + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw FormatError(std::string("PGM: expected ") + field, start);
    return v;
  }

  void expect_single_whitespace() {
    if (pos_ >= bytes_.size()) throw FormatError("PGM: truncated header", pos_);
    const char c = bytes_[pos_];
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n')
      throw FormatError("PGM: expected whitespace after maxval", pos_);
    ++pos_;
  }

 private:
  const std::vector<char>& bytes_;
  std::uint64_t pos_ = 2;
};

}  // namespace detail

inline GrayImage decode_pgm(const std::vector<char>& bytes) {
  if (bytes.size() < 2) throw FormatError("PGM: file too short for magic", bytes.size());
  if (bytes[0] != 'P' || bytes[1] != '5')
    throw FormatError(std::string("PGM: unsupported magic '") + bytes[0] + bytes[1] + "' (need P5)", 0);
  detail::PgmHeaderParser p(bytes);
  const auto width = p.read_uint("width");
  const auto height = p.read_uint("height");
  const auto maxval_offset = p.offset();
  const auto maxval = p.read_uint("maxval");
  if (maxval != 255) throw FormatError("PGM: maxval " + std::to_string(maxval) + " unsupported (need 255)", maxval_offset);
  p.expect_single_whitespace();
  const std::uint64_t data_start = p.offset();
  const std::uint64_t need = width * height;
  if (bytes.size() - data_start < need)
    throw FormatError("PGM: truncated pixel data, expected " + std::to_string(need) + " bytes", bytes.size());
  GrayImage img(width, height);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(data_start), need, reinterpret_cast<char*>(img.samples.data()));
  return img;
}

inline std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline GrayImage load_pgm(const std::string& path) {
  try {
    return decode_pgm(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

inline void save_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.samples.data()), static_cast<std::streamsize>(img.samples.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Center crop so both dimensions are multiples of d.
inline GrayImage center_crop(const GrayImage& img, std::size_t d) {
  const std::size_t w = img.width / d * d;
  const std::size_t h = img.height / d * d;
  if (w == 0 || h == 0) throw Error("image smaller than one patch");
  if (w == img.width && h == img.height) return img;
  const std::size_t x0 = (img.width - w) / 2;
  const std::size_t y0 = (img.height - h) / 2;
  GrayImage out(w, h);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = img.at(r + y0, c + x0);
  return out;
}

// ---------------------------------------------------------------------------
// Patch grid

/// Non-overlapping d x d patches, row-major over the grid. Each patch is
/// stored row-major with raw 0..255 intensities.
struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t d = 0;
  std::vector<Vec> patches;

  const Vec& at(std::size_t r, std::size_t c) const { return patches[r * cols + c]; }
};

inline PatchGrid partition(const GrayImage& img, std::size_t d) {
  if (d == 0) throw Error("partition: patch size must be positive");
  if (img.width % d != 0 || img.height % d != 0)
    throw Error("partition: " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                " image is not divisible by patch size " + std::to_string(d) + "; center_crop it first");
  PatchGrid g;
  g.d = d;
  g.rows = img.height / d;
  g.cols = img.width / d;
  g.patches.reserve(g.rows * g.cols);
  for (std::size_t pr = 0; pr < g.rows; ++pr)
    for (std::size_t pc = 0; pc < g.cols; ++pc) {
      Vec p(d * d);
      for (std::size_t y = 0; y < d; ++y)
        for (std::size_t x = 0; x < d; ++x) p[y * d + x] = img.at(pr * d + y, pc * d + x);
      g.patches.push_back(std::move(p));
    }
  return g;
}

/// Inverse of partition for real-valued patches (any intensity scale).
inline UnitImage stitch(const std::vector<Vec>& patches, std::size_t grid_rows, std::size_t grid_cols, std::size_t d) {
  require_shape(patches.size() == grid_rows * grid_cols, "stitch patch count");
  UnitImage out(grid_cols * d, grid_rows * d);
  for (std::size_t pr = 0; pr < grid_rows; ++pr)
    for (std::size_t pc = 0; pc < grid_cols; ++pc) {
      const Vec& p = patches[pr * grid_cols + pc];
      require_shape(p.size() == d * d, "stitch patch size");
      for (std::size_t y = 0; y < d; ++y)
        for (std::size_t x = 0; x < d; ++x) out.at(pr * d + y, pc * d + x) = p[y * d + x];
    }
  return out;
}

}  // namespace nidec

#endif  // NIDEC_IMAGE_HPP
