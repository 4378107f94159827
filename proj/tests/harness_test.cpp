#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "nidec/config.hpp"
#include "nidec/harness.hpp"
#include "nidec/pipeline.hpp"

namespace nidec {
namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nidec_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DatasetFile toy_dataset(std::size_t images, std::uint64_t seed) {
  SeededRng gen(seed);
  std::vector<GrayImage> imgs;
  for (std::size_t i = 0; i < images; ++i) imgs.push_back(synthetic_image(gen, 32, 32));
  SeededRng rng(seed + 1);
  return extract_dataset(imgs, QuantizerConfig{}, rng);
}

RunConfig toy_config() {
  RunConfig c = desk_profile();
  c.model.hidden = 4;
  c.batch = 4;
  c.updates = 500;
  c.eval_every = 50;
  return c;
}

TEST(Config, FullProfileDefaults) {
  const RunConfig c = full_profile();
  EXPECT_EQ(c.model.hidden, 512u);
  EXPECT_EQ(c.batch, 256u);
  EXPECT_EQ(c.model.steps, 4u);
  EXPECT_EQ(c.lr0, 2e-4);
  EXPECT_EQ(c.clip, 13.0);
  EXPECT_EQ(c.init_bound, 0.054);
  const std::string text = serialize_config(c);
  for (const char* line : {"hidden=512\n", "batch=256\n", "K=4\n", "clip=13\n"})
    EXPECT_NE(text.find(line), std::string::npos) << line;
}

TEST(Config, RoundTripsThroughText) {
  std::vector<RunConfig> cases = {full_profile(), desk_profile()};
  RunConfig odd = desk_profile();
  odd.model.cell = CellKind::kDelta;
  odd.model.state_act = Activation::kRelu;
  odd.algorithm = Algorithm::kSab;
  odd.lr0 = 0.1 + 0.2;  // not exactly representable in short decimal
  odd.lr_end = 1.0 / 3.0 * 1e-3;
  odd.loss.alpha = 0.7;
  odd.loss.mae_batch_normalized = true;
  odd.sab = {3, 2, 5};
  odd.seed = 18446744073709551615ull;
  odd.train_data = "data/train.bin";
  odd.val_dir = "some dir/val";
  cases.push_back(odd);
  for (const RunConfig& c : cases) {
    const RunConfig back = parse_config(serialize_config(c), RunConfig{});
    EXPECT_TRUE(back == c) << serialize_config(c);
    EXPECT_EQ(back.lr0, c.lr0);
    EXPECT_EQ(back.lr_end, c.lr_end);
  }
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config("# header\nhidden = 8\nhiden = 9\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("hiden"), std::string::npos);
  }
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(parse_config("hidden=eight"), ConfigError);
  EXPECT_THROW(parse_config("hidden=8x"), ConfigError);
  EXPECT_THROW(parse_config("cell=transformer"), ConfigError);
  EXPECT_THROW(parse_config("mae_batch_normalized=maybe"), ConfigError);
  EXPECT_THROW(parse_config("just text"), ConfigError);
  RunConfig c = parse_config("lr=1e-3\nlr_end=1e-2");
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, LaterValuesOverrideEarlier) {
  const RunConfig c = parse_config("hidden=8\nhidden=12\n", desk_profile());
  EXPECT_EQ(c.model.hidden, 12u);
  EXPECT_EQ(c.batch, 32u);  // untouched base value
}

TEST(Harness, ToyRunLogRowsAndSchedule) {
  const fs::path dir = scratch_dir("toy");
  const RunConfig cfg = toy_config();
  const TrainResult r = train_run(cfg, toy_dataset(2, 1), {}, dir.string());
  ASSERT_FALSE(r.diverged);
  ASSERT_EQ(r.rows.size(), 500u / 50u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(r.rows[i].update, 50 * (i + 1));
    if (i > 0) {
      EXPECT_LE(r.rows[i].lr, r.rows[i - 1].lr);
    }
    EXPECT_FALSE(r.rows[i].val.has_value());
  }
  EXPECT_NEAR(r.rows.back().lr, cfg.optimizer().lr_at(499), 1e-18);

  std::istringstream log(read_text(dir / kLogFile));
  std::string line;
  std::getline(log, line);
  EXPECT_EQ(line, kTrainLogHeader);
  std::size_t n = 0;
  while (std::getline(log, line)) {
    ++n;
    EXPECT_EQ(line, format_log_row(r.rows[n - 1]));
  }
  EXPECT_EQ(n, 10u);
  EXPECT_TRUE(load_checkpoint((dir / kCheckpointFile).string()) == r.params);
}

TEST(Harness, FinalUpdateAlwaysLogged) {
  RunConfig cfg = toy_config();
  cfg.updates = 23;
  cfg.eval_every = 10;
  const TrainResult r = train_run(cfg, toy_dataset(1, 2), {}, "");
  ASSERT_EQ(r.rows.size(), 3u);
  EXPECT_EQ(r.rows.back().update, 23u);
}

TEST(Harness, EpochCountsSamplesOverDatasetSize) {
  RunConfig cfg = toy_config();
  cfg.updates = 32;
  cfg.eval_every = 16;
  const DatasetFile ds = toy_dataset(1, 3);  // 16 blocks
  ASSERT_EQ(ds.size(), 16u);
  const TrainResult r = train_run(cfg, ds, {}, "");
  EXPECT_DOUBLE_EQ(r.rows[0].epoch, 4.0);
  EXPECT_DOUBLE_EQ(r.rows[1].epoch, 8.0);
}

TEST(Harness, ValidationMetricsAreMeanOverImages) {
  RunConfig cfg = toy_config();
  cfg.updates = 10;
  cfg.eval_every = 10;
  SeededRng gen(40);
  std::vector<NamedImage> val = {{"a", synthetic_image(gen, 24, 24)}, {"b", synthetic_image(gen, 40, 32)}};
  const TrainResult r = train_run(cfg, toy_dataset(1, 4), val, "");
  ASSERT_TRUE(r.rows.back().val.has_value());
  const QuantizerConfig q = cfg.quantizer();
  double sum = 0.0;
  for (const NamedImage& v : val) sum += psnr(to_unit(v.image), neural_image(v.image, r.params, q, cfg.model.steps));
  EXPECT_NEAR(r.rows.back().val->psnr, sum / 2.0, 1e-12);
}

TEST(Harness, RepeatRunsAreByteIdentical) {
  for (Algorithm alg : kAllAlgorithms) {
    RunConfig cfg = toy_config();
    cfg.algorithm = alg;
    cfg.updates = 40;
    cfg.eval_every = 20;
    const DatasetFile ds = toy_dataset(2, 5);
    const fs::path a = scratch_dir("rep_a"), b = scratch_dir("rep_b");
    train_run(cfg, ds, {}, a.string());
    train_run(cfg, ds, {}, b.string());
    EXPECT_EQ(read_text(a / kLogFile), read_text(b / kLogFile)) << to_string(alg);
    EXPECT_EQ(read_text(a / kCheckpointFile), read_text(b / kCheckpointFile)) << to_string(alg);
  }
}

TEST(Harness, ManifestReloadsToSameConfig) {
  const fs::path dir = scratch_dir("manifest");
  RunConfig cfg = toy_config();
  cfg.updates = 20;
  cfg.eval_every = 10;
  cfg.algorithm = Algorithm::kUoro;
  cfg.seed = 99;
  train_run(cfg, toy_dataset(1, 6), {}, dir.string());
  const std::string text = read_text(dir / kManifestFile);
  EXPECT_NE(text.find("status=complete"), std::string::npos);
  EXPECT_NE(text.find("code_version="), std::string::npos);
  EXPECT_NE(text.find("eval_row=20,"), std::string::npos);
  EXPECT_TRUE(parse_config(text, full_profile()) == cfg);
}

TEST(Harness, SeedChangesRun) {
  RunConfig cfg = toy_config();
  cfg.updates = 10;
  cfg.eval_every = 10;
  const DatasetFile ds = toy_dataset(1, 7);
  const TrainResult a = train_run(cfg, ds, {}, "");
  cfg.seed = 2;
  const TrainResult b = train_run(cfg, ds, {}, "");
  EXPECT_FALSE(a.params == b.params);
}

TEST(Harness, DivergenceKeepsLastGoodCheckpoint) {
  const fs::path dir = scratch_dir("diverge");
  RunConfig cfg = toy_config();
  cfg.updates = 10;
  cfg.eval_every = 5;
  cfg.lr0 = 1e308;  // overflows within a few steps
  const TrainResult r = train_run(cfg, toy_dataset(1, 8), {}, dir.string());
  ASSERT_TRUE(r.diverged);
  EXPECT_NE(r.message.find("diverged at update"), std::string::npos);
  const DecoderParams saved = load_checkpoint((dir / kCheckpointFile).string());
  EXPECT_TRUE(saved == r.params);
  for (double v : saved.values()) ASSERT_TRUE(std::isfinite(v));
  EXPECT_NE(read_text(dir / kManifestFile).find("status=diverged"), std::string::npos);
}

TEST(Harness, DatasetShapeMustMatchModel) {
  RunConfig cfg = toy_config();
  cfg.model.d = 4;
  EXPECT_THROW(train_run(cfg, toy_dataset(1, 9), {}, ""), ConfigError);
}

TEST(Pipeline, ReconstructionKeepsInputDimensions) {
  SeededRng gen(12);
  const GrayImage img = synthetic_image(gen, 70, 61);
  SeededRng init(1);
  DecoderConfig mc;
  mc.hidden = 4;
  const DecoderParams p = init_params(mc, init);
  const std::vector<UnitImage> traj = neural_trajectory(img, p, QuantizerConfig{}, 5);
  ASSERT_EQ(traj.size(), 5u);
  for (const UnitImage& t : traj) {
    EXPECT_EQ(t.width, 70u);
    EXPECT_EQ(t.height, 61u);
  }
  const UnitImage base = baseline_image(img, QuantizerConfig{});
  EXPECT_EQ(base.width, 70u);
  EXPECT_EQ(base.height, 61u);
}

TEST(Pipeline, PaddingReplicatesEdges) {
  GrayImage img(3, 2);
  for (std::size_t i = 0; i < 6; ++i) img.samples[i] = static_cast<std::uint8_t>(10 * (i + 1));
  const GrayImage p = pad_to_multiple(img, 4);
  ASSERT_EQ(p.width, 4u);
  ASSERT_EQ(p.height, 4u);
  EXPECT_EQ(p.at(0, 3), 30);
  EXPECT_EQ(p.at(3, 0), 40);
  EXPECT_EQ(p.at(3, 3), 60);
  EXPECT_EQ(p.at(1, 1), 50);
}

TEST(Pipeline, StitchedBaselineMatchesPerPatchDequantization) {
  SeededRng gen(13);
  const GrayImage img = synthetic_image(gen, 48, 40);
  const QuantizerConfig q;
  const UnitImage base = baseline_image(img, q);
  // Decode every 8x8 patch independently and compare pixel by pixel.
  for (std::size_t br = 0; br < 5; ++br)
    for (std::size_t bc = 0; bc < 6; ++bc) {
      Vec patch(64);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) patch[y * 8 + x] = img.at(br * 8 + y, bc * 8 + x);
      const Vec deq = dequantize_baseline(dct_quantize(patch, q), q);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) ASSERT_EQ(base.at(br * 8 + y, bc * 8 + x), deq[y * 8 + x]);
    }
}

TEST(Sweep, HeaderLayout) {
  EXPECT_EQ(sweep_header({1, 3, 5, 7, 9, 11}), "algorithm,K1,K3,K5,K7,K9,K11");
}

TEST(Sweep, MlpIsFlatAcrossK) {
  DecoderConfig mc;
  mc.cell = CellKind::kMlp;
  mc.hidden = 6;
  SeededRng init(3);
  const DecoderParams p = init_params(mc, init);
  SeededRng gen(14);
  const std::vector<NamedImage> imgs = {{"x", synthetic_image(gen, 32, 32)}};
  const std::vector<double> row = sweep_k(p, imgs, QuantizerConfig{}, {1, 3, 5, 7, 9, 11});
  for (double v : row) EXPECT_EQ(v, row[0]);
}

TEST(Sweep, EntriesMatchDirectDecodeAtEachK) {
  DecoderConfig mc;
  mc.cell = CellKind::kGru;
  mc.hidden = 5;
  SeededRng init(4);
  const DecoderParams p = init_params(mc, init, 0.5);
  SeededRng gen(15);
  const std::vector<NamedImage> imgs = {{"x", synthetic_image(gen, 32, 24)}, {"y", synthetic_image(gen, 24, 32)}};
  const std::vector<std::size_t> ks = {1, 2, 4};
  const std::vector<double> row = sweep_k(p, imgs, QuantizerConfig{}, ks);
  for (std::size_t j = 0; j < ks.size(); ++j) {
    double sum = 0.0;
    for (const NamedImage& im : imgs) sum += psnr(to_unit(im.image), neural_image(im.image, p, QuantizerConfig{}, ks[j]));
    EXPECT_NEAR(row[j], sum / 2.0, 1e-12);
  }
  EXPECT_THROW(sweep_k(p, imgs, QuantizerConfig{}, {0, 1}), ConfigError);
}

TEST(Eval, MeanReportIsArithmeticMean) {
  const MetricReport m = mean_report({{30.0, 0.9, 0.95, {}}, {20.0, 0.7, 0.85, {}}});
  EXPECT_DOUBLE_EQ(m.psnr, 25.0);
  EXPECT_DOUBLE_EQ(m.ssim, 0.8);
  EXPECT_DOUBLE_EQ(m.ms_ssim, 0.9);
}

}  // namespace
}  // namespace nidec
