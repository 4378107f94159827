#ifndef NIDEC_HARNESS_HPP
#define NIDEC_HARNESS_HPP

// Training runs, evaluation over image sets, and K sweeps. Everything a
// run writes (log, checkpoint) is a pure function of its config and data.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nidec/config.hpp"
#include "nidec/dataset.hpp"
#include "nidec/image.hpp"
#include "nidec/metrics.hpp"
#include "nidec/pipeline.hpp"
#include "nidec/trainer.hpp"

namespace nidec {

inline constexpr std::string_view kTrainLogHeader = "update,epoch,lr,loss,val_psnr,val_ssim,val_ms_ssim";
inline constexpr const char* kLogFile = "train_log.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.nidp";
inline constexpr const char* kManifestFile = "manifest.txt";

struct NamedImage {
  std::string name;
  GrayImage image;
};

/// All *.pgm files of a directory, sorted by file name.
inline std::vector<std::string> list_pgm_files(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("not a directory: '" + dir + "'");
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") out.push_back(entry.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<NamedImage> load_pgm_dir(const std::string& dir) {
  std::vector<NamedImage> out;
  for (const std::string& path : list_pgm_files(dir))
    out.push_back({std::filesystem::path(path).filename().string(), load_pgm(path)});
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ImageEval {
  std::string name;
  MetricReport baseline;
  MetricReport neural;
};

inline ImageEval evaluate_image(const NamedImage& img, const DecoderParams& p, const QuantizerConfig& q,
                                std::size_t K) {
  const UnitImage ref = to_unit(img.image);
  return {img.name, evaluate_metrics(ref, baseline_image(img.image, q)),
          evaluate_metrics(ref, neural_image(img.image, p, q, K))};
}

/// Arithmetic mean of finite values; +inf if any value is +inf.
inline double mean_metric(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline MetricReport mean_report(const std::vector<MetricReport>& rows) {
  std::vector<double> a, b, c;
  for (const MetricReport& r : rows) {
    a.push_back(r.psnr);
    b.push_back(r.ssim);
    c.push_back(r.ms_ssim);
  }
  return {mean_metric(a), mean_metric(b), mean_metric(c), std::nullopt};
}

/// Mean neural PSNR over `images` for every K in `ks` (one decode per
/// image at max K; earlier steps are read off the trajectory).
inline std::vector<double> sweep_k(const DecoderParams& p, const std::vector<NamedImage>& images,
                                   const QuantizerConfig& q, const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ConfigError("empty K list");
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());
  if (std::find(ks.begin(), ks.end(), 0) != ks.end()) throw ConfigError("K must be >= 1");
  std::vector<std::vector<double>> per_k(ks.size());
  for (const NamedImage& img : images) {
    const UnitImage ref = to_unit(img.image);
    const std::vector<UnitImage> traj = neural_trajectory(img.image, p, q, kmax);
    for (std::size_t j = 0; j < ks.size(); ++j) per_k[j].push_back(psnr(ref, traj[ks[j] - 1]));
  }
  std::vector<double> out;
  for (const auto& v : per_k) out.push_back(mean_metric(v));
  return out;
}

inline std::string sweep_header(const std::vector<std::size_t>& ks) {
  std::string h = "algorithm";
  for (std::size_t k : ks) h += ",K" + std::to_string(k);
  return h;
}

// ---------------------------------------------------------------------------
// Training

struct TrainLogRow {
  std::size_t update = 0;
  double epoch = 0.0;
  double lr = 0.0;
  double loss = 0.0;  // mean batch loss since the previous row
  std::optional<MetricReport> val;
};

inline std::string format_log_row(const TrainLogRow& r) {
  char head[128];
  std::snprintf(head, sizeof head, "%zu,%.4f,", r.update, r.epoch);
  std::string s = head + detail::format_double(r.lr) + "," + detail::format_double(r.loss) + ",";
  if (r.val) s += format_metric(r.val->psnr) + "," + format_metric(r.val->ssim) + "," + format_metric(r.val->ms_ssim);
  else s += ",,";
  return s;
}

struct TrainResult {
  DecoderParams params;
  std::vector<TrainLogRow> rows;
  bool diverged = false;
  std::string message;
};

/// Seeds for the independent random streams of one run.
struct RunSeeds {
  std::uint64_t init, order, noise;
  explicit RunSeeds(std::uint64_t seed) : init(seed), order(seed + 0x100), noise(seed + 0x200) {}
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path + "'");
}

inline std::string manifest_text(const RunConfig& cfg, const std::string& start, std::size_t blocks,
                                 std::size_t val_images, const std::vector<TrainLogRow>& rows,
                                 const std::string& status) {
  std::string m = "# training run manifest\n";
  m += "code_version=" + std::string(kCodeVersion) + "\n";
  m += "start_time=" + start + "\n";
  m += serialize_config(cfg);
  m += "train_blocks=" + std::to_string(blocks) + "\n";
  m += "val_images=" + std::to_string(val_images) + "\n";
  for (const TrainLogRow& r : rows) m += "eval_row=" + format_log_row(r) + "\n";
  m += "status=" + status + "\n";
  return m;
}

}  // namespace detail

/// Observer for progress output; called after every logged row.
using RowCallback = std::function<void(const TrainLogRow&)>;

/// Trains per `cfg` on `data`. If `out_dir` is non-empty the log,
/// checkpoint and manifest are written there; the checkpoint is refreshed at
/// every logged row. On divergence the last good parameters are saved and
/// the result is flagged instead of throwing.
inline TrainResult train_run(const RunConfig& cfg, const DatasetFile& data, const std::vector<NamedImage>& val,
                             const std::string& out_dir, const RowCallback& on_row = {}) {
  cfg.validate();
  if (data.size() == 0) throw Error("training set is empty");
  if (data.d != cfg.model.d || data.n_context != cfg.model.n_context)
    throw ConfigError("dataset has d=" + std::to_string(data.d) + ", N=" + std::to_string(data.n_context) +
                      " but the model expects d=" + std::to_string(cfg.model.d) +
                      ", N=" + std::to_string(cfg.model.n_context));
  const RunSeeds seeds(cfg.seed);
  SeededRng init_rng(seeds.init), order_rng(seeds.order);
  Trainer trainer(init_params(cfg.model, init_rng, cfg.init_bound), cfg.optimizer(), cfg.settings(), seeds.noise);
  const QuantizerConfig q = cfg.quantizer();
  const std::string start = utc_timestamp();

  namespace fs = std::filesystem;
  const bool write = !out_dir.empty();
  std::ofstream log;
  if (write) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / kLogFile, std::ios::binary);
    if (!log) throw Error("cannot write log in '" + out_dir + "'");
    log << kTrainLogHeader << '\n';
  }
  auto save = [&](const DecoderParams& p, const std::vector<TrainLogRow>& rows, const std::string& status) {
    if (!write) return;
    save_checkpoint((fs::path(out_dir) / kCheckpointFile).string(), p);
    detail::write_text((fs::path(out_dir) / kManifestFile).string(),
                       detail::manifest_text(cfg, start, data.size(), val.size(), rows, status));
  };

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng.shuffle(std::span<std::size_t>(order));
  std::size_t cursor = 0, seen = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  std::vector<PatchBlock> batch(cfg.batch);

  for (std::size_t u = 1; u <= cfg.updates; ++u) {
    for (PatchBlock& b : batch) {
      if (cursor == order.size()) {
        order_rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      b = data.block(order[cursor++]);
    }
    const double lr = trainer.optimizer().lr();
    try {
      loss_sum += trainer.train_episode(batch);
    } catch (const DivergedError& e) {
      result.diverged = true;
      result.message = "diverged at update " + std::to_string(u) + ": " + e.what();
      save(trainer.params(), result.rows, "diverged at update " + std::to_string(u));
      result.params = trainer.params();
      return result;
    }
    ++loss_count;
    seen += cfg.batch;

    if (u % cfg.eval_every == 0 || u == cfg.updates) {
      TrainLogRow row;
      row.update = u;
      row.epoch = static_cast<double>(seen) / static_cast<double>(data.size());
      row.lr = lr;
      row.loss = loss_sum / static_cast<double>(loss_count);
      loss_sum = 0.0;
      loss_count = 0;
      if (!val.empty()) {
        std::vector<MetricReport> reports;
        for (const NamedImage& img : val)
          reports.push_back(evaluate_metrics(to_unit(img.image), neural_image(img.image, trainer.params(), q,
                                                                              cfg.model.steps)));
        row.val = mean_report(reports);
      }
      result.rows.push_back(row);
      if (write) log << format_log_row(row) << '\n' << std::flush;
      save(trainer.params(), result.rows, u == cfg.updates ? "complete" : "running");
      if (on_row) on_row(row);
    }
  }
  result.params = trainer.params();
  return result;
}

}  // namespace nidec

#endif  // NIDEC_HARNESS_HPP
