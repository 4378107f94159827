#ifndef NIDEC_DATASET_HPP
#define NIDEC_DATASET_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "nidec/codec.hpp"
#include "nidec/error.hpp"
#include "nidec/image.hpp"
#include "nidec/numeric.hpp"
#include "nidec/rng.hpp"

namespace nidec {

/// One training/eval example: N quantized context patches (flattened,
/// window order) and the raw target patch scaled to [0,1].
struct PatchBlock {
  Vec inputs;
  Vec target;
  PatchCoord target_index;

  std::size_t patch_dim() const { return target.size(); }
  ConstSpan input(std::size_t i) const { return ConstSpan(inputs).subspan(i * target.size(), target.size()); }
};

/// Quantizes every patch of `img` and builds one block per patch, in
/// row-major target order.
inline std::vector<PatchBlock> image_blocks(const GrayImage& img, const QuantizerConfig& cfg,
                                            std::size_t d = kCodecBlock) {
  const PatchGrid grid = partition(img, d);
  std::vector<Vec> symbols;
  symbols.reserve(grid.patches.size());
  for (const Vec& p : grid.patches) symbols.push_back(dct_quantize(p, cfg));
  std::vector<PatchBlock> blocks;
  blocks.reserve(grid.patches.size());
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) {
      PatchBlock b;
      b.target_index = {r, c};
      b.inputs.reserve(kContextPatches * d * d);
      for (const PatchCoord& w : block_window({r, c}, grid.rows, grid.cols)) {
        const Vec& q = symbols[w.row * grid.cols + w.col];
        b.inputs.insert(b.inputs.end(), q.begin(), q.end());
      }
      b.target = grid.at(r, c);
      for (double& v : b.target) v /= 255.0;
      blocks.push_back(std::move(b));
    }
  return blocks;
}

// ---------------------------------------------------------------------------
// Dataset container and its on-disk format

inline constexpr char kDatasetMagic[4] = {'N', 'I', 'D', 'C'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint64_t kDatasetHeaderBytes = 4 + 4 + 4 + 4 + 8;

/// Records stored exactly as they appear on disk (32-bit floats).
struct DatasetFile {
  std::uint32_t d = kCodecBlock;
  std::uint32_t n_context = kContextPatches;
  std::vector<float> inputs;   // count x (n_context * d * d)
  std::vector<float> targets;  // count x (d * d)

  std::size_t patch_dim() const { return std::size_t{d} * d; }
  std::size_t input_dim() const { return n_context * patch_dim(); }
  std::size_t size() const { return patch_dim() == 0 ? 0 : targets.size() / patch_dim(); }

  void append(const PatchBlock& b) {
    require_shape(b.target.size() == patch_dim() && b.inputs.size() == input_dim(), "dataset record");
    for (double v : b.inputs) inputs.push_back(static_cast<float>(v));
    for (double v : b.target) targets.push_back(static_cast<float>(v));
  }

  PatchBlock block(std::size_t i) const {
    PatchBlock b;
    const std::size_t in = input_dim(), pd = patch_dim();
    b.inputs.assign(inputs.begin() + static_cast<std::ptrdiff_t>(i * in),
                    inputs.begin() + static_cast<std::ptrdiff_t>((i + 1) * in));
    b.target.assign(targets.begin() + static_cast<std::ptrdiff_t>(i * pd),
                    targets.begin() + static_cast<std::ptrdiff_t>((i + 1) * pd));
    return b;
  }

  bool operator==(const DatasetFile&) const = default;
};

/// Builds a dataset from a set of images. Shuffling happens in two steps:
/// the image order is permuted, then the concatenated block stream is
/// permuted again. Blocks are produced per image in a fixed order, so the
/// result depends only on the images and the RNG state.
inline DatasetFile extract_dataset(const std::vector<GrayImage>& images, const QuantizerConfig& cfg, SeededRng& rng,
                                   std::size_t d = kCodecBlock, bool shuffle = true) {
  if (images.empty()) throw Error("no input images");
  cfg.validate();
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) rng.shuffle(std::span<std::size_t>(order));

  std::vector<PatchBlock> all;
  for (std::size_t idx : order) {
    auto blocks = image_blocks(center_crop(images[idx], d), cfg, d);
    for (auto& b : blocks) all.push_back(std::move(b));
  }
  std::vector<std::size_t> perm(all.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (shuffle) rng.shuffle(std::span<std::size_t>(perm));

  DatasetFile ds;
  ds.d = static_cast<std::uint32_t>(d);
  ds.n_context = kContextPatches;
  for (std::size_t i : perm) ds.append(all[i]);
  return ds;
}

namespace detail {

inline void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::vector<char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::vector<char>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline void put_f64(std::vector<char>& out, double f) { put_u64(out, std::bit_cast<std::uint64_t>(f)); }

inline std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}
inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}
inline float get_f32(const char* p) { return std::bit_cast<float>(get_u32(p)); }
inline double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

inline void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace detail

inline std::vector<char> encode_dataset(const DatasetFile& ds) {
  std::vector<char> out(kDatasetMagic, kDatasetMagic + 4);
  out.reserve(kDatasetHeaderBytes + 4 * (ds.inputs.size() + ds.targets.size()));
  detail::put_u32(out, kDatasetVersion);
  detail::put_u32(out, ds.d);
  detail::put_u32(out, ds.n_context);
  detail::put_u64(out, ds.size());
  const std::size_t in = ds.input_dim(), pd = ds.patch_dim();
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t i = 0; i < in; ++i) detail::put_f32(out, ds.inputs[r * in + i]);
    for (std::size_t i = 0; i < pd; ++i) detail::put_f32(out, ds.targets[r * pd + i]);
  }
  return out;
}

namespace detail {

/// Parses `count` headerless records starting at `offset`.
inline void decode_records(const std::vector<char>& bytes, std::uint64_t offset, std::uint64_t count,
                           DatasetFile& ds) {
  const std::size_t in = ds.input_dim(), pd = ds.patch_dim();
  const std::uint64_t rec_bytes = 4 * (in + pd);
  ds.inputs.resize(count * in);
  ds.targets.resize(count * pd);
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint64_t start = offset + r * rec_bytes;
    if (start + rec_bytes > bytes.size())
      throw RecordError("truncated record: need " + std::to_string(rec_bytes) + " bytes, have " +
                            std::to_string(bytes.size() > start ? bytes.size() - start : 0),
                        r + 1);
    const char* p = bytes.data() + start;
    for (std::size_t i = 0; i < in; ++i) ds.inputs[r * in + i] = get_f32(p + 4 * i);
    for (std::size_t i = 0; i < pd; ++i) ds.targets[r * pd + i] = get_f32(p + 4 * (in + i));
  }
}

}  // namespace detail

inline DatasetFile decode_dataset(const std::vector<char>& bytes) {
  if (bytes.size() < kDatasetHeaderBytes) throw FormatError("dataset: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kDatasetMagic, 4) != 0) throw FormatError("dataset: bad magic (need NIDC)", 0);
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kDatasetVersion) throw FormatError("dataset: unsupported version " + std::to_string(version), 4);
  DatasetFile ds;
  ds.d = detail::get_u32(bytes.data() + 8);
  ds.n_context = detail::get_u32(bytes.data() + 12);
  if (ds.d == 0 || ds.n_context == 0) throw FormatError("dataset: d and N must be positive", 8);
  const std::uint64_t count = detail::get_u64(bytes.data() + 16);
  const std::uint64_t rec_bytes = 4 * (ds.input_dim() + ds.patch_dim());
  const std::uint64_t body = bytes.size() - kDatasetHeaderBytes;
  if (body > count * rec_bytes)
    throw FormatError("dataset: " + std::to_string(body - count * rec_bytes) + " trailing bytes after " +
                          std::to_string(count) + " records",
                      kDatasetHeaderBytes + count * rec_bytes);
  detail::decode_records(bytes, kDatasetHeaderBytes, count, ds);
  return ds;
}

inline void save_dataset(const std::string& path, const DatasetFile& ds) {
  detail::write_bytes(path, encode_dataset(ds));
}

inline DatasetFile load_dataset(const std::string& path) {
  try {
    return decode_dataset(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

/// Headerless record stream: each record is N*d^2 then d^2 little-endian
/// 32-bit floats. This is how externally produced symbols come in.
inline DatasetFile import_quantized(const std::vector<char>& raw, std::uint32_t d, std::uint32_t n_context) {
  if (d == 0 || n_context == 0) throw Error("import: d and N must be positive");
  DatasetFile ds;
  ds.d = d;
  ds.n_context = n_context;
  const std::uint64_t rec_bytes = 4 * (ds.input_dim() + ds.patch_dim());
  const std::uint64_t whole = raw.size() / rec_bytes;
  const std::uint64_t count = whole + (raw.size() % rec_bytes != 0 ? 1 : 0);
  detail::decode_records(raw, 0, count, ds);
  for (float v : ds.inputs)
    if (!std::isfinite(v)) throw Error("import: non-finite input symbol");
  for (float v : ds.targets)
    if (!std::isfinite(v)) throw Error("import: non-finite target value");
  return ds;
}

inline DatasetFile import_quantized_file(const std::string& path, std::uint32_t d, std::uint32_t n_context) {
  return import_quantized(read_file_bytes(path), d, n_context);
}

inline std::vector<char> export_raw(const DatasetFile& ds) {
  std::vector<char> bytes = encode_dataset(ds);
  bytes.erase(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(kDatasetHeaderBytes));
  return bytes;
}

}  // namespace nidec

#endif  // NIDEC_DATASET_HPP
