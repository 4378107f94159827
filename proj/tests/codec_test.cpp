#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>

#include <gtest/gtest.h>

#include "nidec/codec.hpp"
#include "nidec/dataset.hpp"
#include "nidec/image.hpp"
#include "nidec/model.hpp"
#include "nidec/pipeline.hpp"
#include "nidec/rng.hpp"

namespace nidec {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("nidec_codec_" + name)).string();
}

std::vector<char> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

// Direct O(d^4) DCT-II definition, for checking the separable version.
double direct_dct(const Vec& x, std::size_t u, std::size_t v) {
  const double pi = std::numbers::pi;
  const double au = u == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
  const double av = v == 0 ? std::sqrt(1.0 / 8) : std::sqrt(2.0 / 8);
  double acc = 0.0;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t xx = 0; xx < 8; ++xx)
      acc += x[y * 8 + xx] * std::cos(pi * (2 * y + 1) * u / 16.0) * std::cos(pi * (2 * xx + 1) * v / 16.0);
  return au * av * acc;
}

TEST(Dct, BasisIsOrthonormal) {
  const Mat& c = dct_basis();
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 8; ++k) acc += c(i, k) * c(j, k);
      EXPECT_NEAR(acc, i == j ? 1.0 : 0.0, 1e-14);
    }
}

TEST(Dct, SeparableMatchesDirectDefinition) {
  SeededRng rng(1);
  Vec x(64);
  for (double& v : x) v = rng.uniform(-128, 127);
  const Vec y = dct2(x);
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t v = 0; v < 8; ++v) EXPECT_NEAR(y[u * 8 + v], direct_dct(x, u, v), 1e-10);
}

TEST(Dct, InverseRoundTrip) {
  SeededRng rng(2);
  Vec x(64);
  for (double& v : x) v = rng.uniform(-128, 127);
  const Vec back = idct2(dct2(x));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_NEAR(back[i], x[i], 1e-10);
}

TEST(Dct, OtherSizesRejected) { EXPECT_THROW(dct_basis(4), Error); }

TEST(Quantizer, MidGrayBlockIsAllZero) {
  const Vec q = dct_quantize(Vec(64, 128.0), QuantizerConfig{});
  for (double v : q) EXPECT_EQ(v, 0.0);
}

TEST(Quantizer, ConstantBlockDcSymbol) {
  // DC of a constant block v is 8 (v - 128); step = 16 * scale.
  for (double scale : {0.5, 1.0, 2.0, 3.0}) {
    QuantizerConfig cfg;
    cfg.quality_scale = scale;
    for (double v : {0.0, 37.0, 200.0, 255.0}) {
      const Vec q = dct_quantize(Vec(64, v), cfg);
      EXPECT_DOUBLE_EQ(q[0], std::nearbyint(8.0 * (v - 128.0) / (16.0 * scale)) / 128.0);
      for (std::size_t i = 1; i < 64; ++i) EXPECT_EQ(q[i], 0.0);
    }
  }
}

TEST(Quantizer, SymbolsAreIntegersOver128) {
  SeededRng rng(3);
  Vec x(64);
  for (double& v : x) v = static_cast<double>(rng.below(256));
  for (double s : dct_quantize(x, QuantizerConfig{})) EXPECT_EQ(s * 128.0, std::nearbyint(s * 128.0));
}

TEST(Quantizer, BaselineErrorBoundedByHalfStep) {
  // Orthonormal transform: ||x - x^||_2 = ||X - X^||_2 <= 0.5 ||step||_2.
  SeededRng rng(4);
  QuantizerConfig cfg;
  double bound = 0.0;
  for (std::size_t u = 0; u < 8; ++u)
    for (std::size_t v = 0; v < 8; ++v) bound += 0.25 * cfg.step(u, v) * cfg.step(u, v);
  bound = std::sqrt(bound) / 255.0;
  for (int trial = 0; trial < 20; ++trial) {
    Vec x(64);
    const double base = rng.uniform(40, 215);
    for (double& v : x) v = std::clamp(std::round(base + rng.uniform(-30, 30)), 0.0, 255.0);
    const Vec rec = dequantize_baseline(dct_quantize(x, cfg), cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < 64; ++i) err += std::pow(rec[i] - x[i] / 255.0, 2);
    EXPECT_LE(std::sqrt(err), bound + 1e-12);
  }
}

TEST(Quantizer, CoarserScaleLosesMore) {
  SeededRng rng(5);
  const GrayImage img = synthetic_image(rng, 64, 64);
  double prev = -1.0;
  for (double scale : {0.5, 1.0, 2.0, 4.0}) {
    QuantizerConfig cfg;
    cfg.quality_scale = scale;
    const UnitImage rec = baseline_image(img, cfg);
    const UnitImage ref = to_unit(img);
    double err = 0.0;
    for (std::size_t i = 0; i < ref.pixels.size(); ++i) err += std::pow(rec.pixels[i] - ref.pixels[i], 2);
    EXPECT_GT(err, prev);
    prev = err;
  }
}

TEST(Quantizer, InvalidScaleRejected) {
  QuantizerConfig cfg;
  cfg.quality_scale = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Window, InteriorIsCentered) {
  const auto w = block_window({2, 3}, 5, 6);
  EXPECT_EQ(w[0], (PatchCoord{1, 2}));
  EXPECT_EQ(w[4], (PatchCoord{2, 3}));
  EXPECT_EQ(w[8], (PatchCoord{3, 4}));
}

TEST(Window, CornersAndEdgesClampInside) {
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) {
      const auto w = block_window({r, c}, 4, 5);
      bool has_target = false;
      for (const PatchCoord& p : w) {
        EXPECT_LT(p.row, 4u);
        EXPECT_LT(p.col, 5u);
        has_target |= p == PatchCoord{r, c};
      }
      EXPECT_TRUE(has_target);
    }
  EXPECT_EQ(block_window({0, 0}, 4, 5)[0], (PatchCoord{0, 0}));
  EXPECT_EQ(block_window({3, 4}, 4, 5)[8], (PatchCoord{3, 4}));
}

TEST(Window, GridTooSmall) { EXPECT_THROW(block_window({0, 0}, 2, 5), Error); }

// ---------------------------------------------------------------- images

TEST(Pgm, RoundTripThroughFile) {
  GrayImage img(5, 3);
  for (std::size_t i = 0; i < img.samples.size(); ++i) img.samples[i] = static_cast<std::uint8_t>(i * 17);
  const std::string path = temp_path("rt.pgm");
  save_pgm(path, img);
  EXPECT_EQ(load_pgm(path), img);
  std::remove(path.c_str());
}

TEST(Pgm, HeaderWithComments) {
  const std::string s = std::string("P5\n# made by hand\n2 1\n255\n") + '\x07' + '\xff';
  const GrayImage img = decode_pgm(bytes_of(s));
  EXPECT_EQ(img.width, 2u);
  EXPECT_EQ(img.at(0, 1), 255);
}

TEST(Pgm, ErrorsCarryByteOffsets) {
  try {
    decode_pgm(bytes_of("P6\n1 1\n255\nx"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  try {
    decode_pgm(bytes_of("P5\n2 2\n255\nabc"));  // 3 of 4 samples
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 14u);  // end of input
  }
  EXPECT_THROW(decode_pgm(bytes_of("P5\n1 1\n65535\nxx")), FormatError);
}

TEST(Patches, PartitionThenStitchIsIdentity) {
  SeededRng rng(6);
  const GrayImage img = synthetic_image(rng, 24, 16);
  const PatchGrid g = partition(img, 8);
  EXPECT_EQ(g.rows, 2u);
  EXPECT_EQ(g.cols, 3u);
  const UnitImage back = stitch(g.patches, g.rows, g.cols, 8);
  for (std::size_t i = 0; i < back.pixels.size(); ++i) EXPECT_EQ(back.pixels[i], img.samples[i]);
}

TEST(Patches, IndivisibleSizeSuggestsCrop) {
  const GrayImage img(20, 16);
  try {
    partition(img, 8);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("center_crop"), std::string::npos);
  }
  const GrayImage cropped = center_crop(img, 8);
  EXPECT_EQ(cropped.width, 16u);
  EXPECT_EQ(cropped.height, 16u);
}

TEST(Blocks, ContextAndTargetLayout) {
  SeededRng rng(7);
  const GrayImage img = synthetic_image(rng, 32, 24);
  const QuantizerConfig cfg;
  const std::vector<PatchBlock> blocks = image_blocks(img, cfg);
  ASSERT_EQ(blocks.size(), 12u);
  const PatchGrid g = partition(img, 8);
  const PatchBlock& b = blocks[1 * 4 + 2];  // row 1, col 2
  EXPECT_EQ(b.target_index, (PatchCoord{1, 2}));
  const Vec q_center = dct_quantize(g.at(1, 2), cfg);
  for (std::size_t i = 0; i < 64; ++i) {
    EXPECT_EQ(b.input(4)[i], q_center[i]);
    EXPECT_DOUBLE_EQ(b.target[i], g.at(1, 2)[i] / 255.0);
  }
  EXPECT_EQ(blocks[0].input(0)[0], dct_quantize(g.at(0, 0), cfg)[0]);
}

// ---------------------------------------------------------------- dataset files

DatasetFile small_dataset() {
  SeededRng rng(8);
  std::vector<GrayImage> imgs = {synthetic_image(rng, 24, 24), synthetic_image(rng, 32, 24)};
  return extract_dataset(imgs, QuantizerConfig{}, rng, 8, true);
}

TEST(Dataset, ExtractCountsEveryPatch) {
  const DatasetFile ds = small_dataset();
  EXPECT_EQ(ds.size(), 9u + 12u);
  EXPECT_EQ(ds.block(0).inputs.size(), 9u * 64u);
}

TEST(Dataset, EncodeDecodeRoundTrip) {
  const DatasetFile ds = small_dataset();
  const std::vector<char> bytes = encode_dataset(ds);
  EXPECT_EQ(bytes.size(), kDatasetHeaderBytes + ds.size() * 4 * (9 * 64 + 64));
  const DatasetFile back = decode_dataset(bytes);
  EXPECT_EQ(back.inputs, ds.inputs);
  EXPECT_EQ(back.targets, ds.targets);
  EXPECT_EQ(back.d, 8u);
  EXPECT_EQ(back.n_context, 9u);
}

TEST(Dataset, SymbolsSurviveFloat32Exactly) {
  // k/128 with |k| < 2^24 is exactly representable.
  const DatasetFile ds = small_dataset();
  const PatchBlock b = ds.block(3);
  for (double v : b.inputs) EXPECT_EQ(v * 128.0, std::nearbyint(v * 128.0));
}

TEST(Dataset, ShuffleDependsOnSeed) {
  SeededRng a(1), b(1), c(2);
  std::vector<GrayImage> imgs;
  SeededRng gen(9);
  for (int i = 0; i < 3; ++i) imgs.push_back(synthetic_image(gen, 24, 24));
  const DatasetFile da = extract_dataset(imgs, QuantizerConfig{}, a, 8, true);
  const DatasetFile db = extract_dataset(imgs, QuantizerConfig{}, b, 8, true);
  const DatasetFile dc = extract_dataset(imgs, QuantizerConfig{}, c, 8, true);
  EXPECT_EQ(da.targets, db.targets);
  EXPECT_NE(da.targets, dc.targets);
}

TEST(Dataset, BadMagicAndTrailingBytes) {
  std::vector<char> bytes = encode_dataset(small_dataset());
  std::vector<char> bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_dataset(bad), FormatError);
  bytes.push_back('\0');
  EXPECT_THROW(decode_dataset(bytes), FormatError);
}

TEST(Dataset, TruncatedRecordNamesItsIndex) {
  const DatasetFile ds = small_dataset();
  std::vector<char> raw = export_raw(ds);
  const std::size_t rec = 4 * (9 * 64 + 64);
  raw.resize(9 * rec + rec / 2);  // nine whole records, tenth cut
  try {
    import_quantized(raw, 8, 9);
    FAIL();
  } catch (const RecordError& e) {
    EXPECT_EQ(e.record(), 10u);
    EXPECT_NE(std::string(e.what()).find("record 10"), std::string::npos);
  }
}

TEST(Dataset, ImportAcceptsOtherPatchSizes) {
  DatasetFile ds;
  ds.d = 4;
  ds.n_context = 9;
  PatchBlock b;
  b.inputs.assign(9 * 16, 0.25);
  b.target.assign(16, 0.5);
  ds.append(b);
  ds.append(b);
  const DatasetFile back = import_quantized(export_raw(ds), 4, 9);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.block(1).target, b.target);
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripIsBitExact) {
  for (CellKind cell : kAllCells) {
    DecoderConfig cfg;
    cfg.cell = cell;
    cfg.hidden = 7;
    cfg.d = 4;
    SeededRng rng(10);
    const DecoderParams p = init_params(cfg, rng);
    const DecoderParams back = decode_checkpoint(encode_checkpoint(p));
    EXPECT_EQ(back, p);
    EXPECT_EQ(back.config().steps, cfg.steps);
  }
}

TEST(Checkpoint, CorruptHeaderIsRejected) {
  DecoderConfig cfg;
  cfg.hidden = 3;
  cfg.d = 2;
  SeededRng rng(11);
  std::vector<char> bytes = encode_checkpoint(init_params(cfg, rng));
  std::vector<char> wrong_count = bytes;
  wrong_count[32] ^= 1;
  EXPECT_THROW(decode_checkpoint(wrong_count), FormatError);
  bytes.pop_back();
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

}  // namespace
}  // namespace nidec
