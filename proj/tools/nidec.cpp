// nidec command-line tool: dataset extraction, training, evaluation,
// K sweeps, algorithm comparison and single-image reconstruction.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nidec/config.hpp"
#include "nidec/dataset.hpp"
#include "nidec/harness.hpp"
#include "nidec/image.hpp"
#include "nidec/metrics.hpp"
#include "nidec/model.hpp"
#include "nidec/pipeline.hpp"

namespace fs = std::filesystem;
using namespace nidec;

namespace {

// Exit codes
constexpr int kExitError = 1;
constexpr int kExitDiverged = 3;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!detail::trim(item).empty()) out.push_back(detail::trim(item));
  return out;
}

// Options shared by train and compare. Precedence: profile, then --config,
// then --set, then the shorthand flags.
struct ConfigOptions {
  std::string profile = "full";
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> shorthand;
  bool dry_run = false;

  void attach(CLI::App* app) {
    app->add_option("--profile", profile, "Base defaults: full or desk")->check(CLI::IsMember({"full", "desk"}));
    app->add_option("--config", config_file, "key=value config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one key (key=value), repeatable");
    app->add_flag("--dry-run", dry_run, "Print the resolved config and exit");
    const std::pair<const char*, const char*> flags[] = {
        {"--algorithm", "algorithm"}, {"--cell", "cell"},      {"--K", "K"},
        {"--hidden", "hidden"},       {"--seed", "seed"},      {"--updates", "updates"},
        {"--batch", "batch"},         {"--lr", "lr"},          {"--momentum", "momentum"},
        {"--eval-every", "eval_every"}, {"--data", "train_data"}, {"--val", "val_dir"},
        {"--out", "out_dir"},         {"--quality-scale", "quality_scale"}};
    for (const auto& [flag, key] : flags) {
      const std::string k = key;
      app->add_option_function<std::string>(
          flag, [this, k](const std::string& v) { shorthand.emplace_back(k, v); }, "Sets config key '" + k + "'");
    }
  }

  RunConfig resolve() const {
    RunConfig c = profile_by_name(profile);
    if (!config_file.empty()) c = load_config(config_file, c);
    for (const std::string& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      set_config_value(c, detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)));
    }
    for (const auto& [k, v] : shorthand) set_config_value(c, k, v);
    c.validate();
    return c;
  }
};

std::vector<NamedImage> load_val(const RunConfig& c) {
  return c.val_dir.empty() ? std::vector<NamedImage>{} : load_pgm_dir(c.val_dir);
}

void print_row(const TrainLogRow& r) { std::cout << format_log_row(r) << '\n' << std::flush; }

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out, std::size_t count, std::size_t w, std::size_t h, std::uint64_t seed) {
  fs::create_directories(out);
  SeededRng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "synth_%04zu.pgm", i);
    save_pgm((fs::path(out) / name).string(), synthetic_image(rng, w, h));
  }
  std::cout << "wrote " << count << " images to " << out << '\n';
  return 0;
}

struct ExtractArgs {
  std::string input, output, raw;
  std::uint64_t seed = 1;
  double quality_scale = 2.0;
  std::size_t d = kCodecBlock;
  std::size_t n_context = kContextPatches;
  bool fail_fast = false;
};

int cmd_extract(const ExtractArgs& a) {
  DatasetFile ds;
  std::ostringstream manifest;
  if (!a.raw.empty()) {
    ds = import_quantized_file(a.raw, static_cast<std::uint32_t>(a.d), static_cast<std::uint32_t>(a.n_context));
    manifest << "source=" << a.raw << "\n";
  } else {
    if (a.input.empty()) throw ConfigError("extract needs an input directory or --raw");
    std::vector<GrayImage> images;
    std::vector<std::string> used;
    std::size_t skipped = 0;
    for (const std::string& path : list_pgm_files(a.input)) {
      try {
        images.push_back(load_pgm(path));
        used.push_back(fs::path(path).filename().string());
      } catch (const Error& e) {
        if (a.fail_fast) throw;
        std::cerr << "warning: skipping " << path << ": " << e.what() << '\n';
        ++skipped;
      }
    }
    QuantizerConfig q;
    q.quality_scale = a.quality_scale;
    SeededRng rng(a.seed);
    ds = extract_dataset(images, q, rng, a.d);
    manifest << "source=" << a.input << "\n"
             << "images=" << images.size() << "\n"
             << "skipped=" << skipped << "\n"
             << "seed=" << a.seed << "\n"
             << "quality_scale=" << detail::format_double(a.quality_scale) << "\n";
    for (const std::string& u : used) manifest << "image=" << u << "\n";
  }
  manifest << "d=" << ds.d << "\n"
           << "n_context=" << ds.n_context << "\n"
           << "blocks=" << ds.size() << "\n";
  save_dataset(a.output, ds);
  detail::write_text(a.output + ".manifest", manifest.str());
  std::cout << manifest.str();
  return 0;
}

int run_training(const RunConfig& cfg, bool quiet) {
  const DatasetFile data = load_dataset(cfg.train_data);
  const std::vector<NamedImage> val = load_val(cfg);
  if (!quiet) std::cout << kTrainLogHeader << '\n';
  const TrainResult r = train_run(cfg, data, val, cfg.out_dir, quiet ? RowCallback{} : RowCallback(print_row));
  if (r.diverged) {
    std::cerr << "error: " << r.message << "; last good checkpoint kept in " << cfg.out_dir << '\n';
    return kExitDiverged;
  }
  return 0;
}

int cmd_train(const ConfigOptions& opts) {
  const RunConfig cfg = opts.resolve();
  std::cout << serialize_config(cfg);
  if (opts.dry_run) return 0;
  if (cfg.train_data.empty()) throw ConfigError("no training data (set train_data or --data)");
  return run_training(cfg, false);
}

int cmd_compare(const ConfigOptions& opts, const std::string& algorithms, const std::string& seeds) {
  const RunConfig base = opts.resolve();
  std::vector<Algorithm> algs;
  for (const std::string& a : split(algorithms, ',')) algs.push_back(parse_algorithm(a));
  std::vector<std::uint64_t> seed_list;
  for (const std::string& s : split(seeds, ',')) seed_list.push_back(detail::parse_number<std::uint64_t>("seeds", s));
  if (algs.empty() || seed_list.empty()) throw ConfigError("compare needs at least one algorithm and one seed");
  if (opts.dry_run) {
    std::cout << serialize_config(base);
    return 0;
  }
  if (base.train_data.empty()) throw ConfigError("no training data (set train_data or --data)");

  const DatasetFile data = load_dataset(base.train_data);
  const std::vector<NamedImage> val = load_val(base);
  fs::create_directories(base.out_dir);
  const std::string merged_path = (fs::path(base.out_dir) / "compare.csv").string();
  std::ofstream merged(merged_path, std::ios::binary);
  if (!merged) throw Error("cannot write '" + merged_path + "'");
  merged << "algorithm,seed," << kTrainLogHeader << '\n';
  int status = 0;
  for (Algorithm alg : algs)
    for (std::uint64_t seed : seed_list) {
      RunConfig cfg = base;
      cfg.algorithm = alg;
      cfg.seed = seed;
      cfg.out_dir = (fs::path(base.out_dir) / (std::string(to_string(alg)) + "_seed" + std::to_string(seed))).string();
      std::cout << "training " << to_string(alg) << " seed " << seed << " -> " << cfg.out_dir << '\n' << std::flush;
      const TrainResult r = train_run(cfg, data, val, cfg.out_dir);
      for (const TrainLogRow& row : r.rows)
        merged << to_string(alg) << ',' << seed << ',' << format_log_row(row) << '\n';
      if (r.diverged) {
        std::cerr << "warning: " << to_string(alg) << " seed " << seed << ": " << r.message << '\n';
        status = kExitDiverged;
      }
    }
  std::cout << "merged log: " << merged_path << '\n';
  return status;
}

QuantizerConfig quantizer(double scale) {
  QuantizerConfig q;
  q.quality_scale = scale;
  q.validate();
  return q;
}

std::string report_cells(const MetricReport& r) {
  return format_metric(r.psnr) + "," + format_metric(r.ssim) + "," + format_metric(r.ms_ssim);
}

int cmd_eval(const std::string& model, const std::string& images, std::optional<std::size_t> K, double qs) {
  const DecoderParams p = load_checkpoint(model);
  const std::size_t steps = K.value_or(p.config().steps);
  const QuantizerConfig q = quantizer(qs);
  const std::vector<std::string> files = list_pgm_files(images);
  if (files.empty()) throw Error("no input images in '" + images + "'");

  std::cout << "image,baseline_psnr,baseline_ssim,baseline_ms_ssim,neural_psnr,neural_ssim,neural_ms_ssim,error\n";
  std::vector<MetricReport> base_rows, neural_rows;
  for (const std::string& path : files) {
    const std::string name = fs::path(path).filename().string();
    try {
      const ImageEval e = evaluate_image({name, load_pgm(path)}, p, q, steps);
      base_rows.push_back(e.baseline);
      neural_rows.push_back(e.neural);
      std::cout << name << ',' << report_cells(e.baseline) << ',' << report_cells(e.neural) << ",\n";
    } catch (const Error& e) {
      std::string msg = e.what();
      for (char& c : msg)
        if (c == ',' || c == '\n') c = ';';
      std::cout << name << ",,,,,,," << msg << '\n';
    }
  }
  if (!base_rows.empty())
    std::cout << "mean," << report_cells(mean_report(base_rows)) << ',' << report_cells(mean_report(neural_rows))
              << ",\n";
  return base_rows.size() == files.size() ? 0 : kExitError;
}

int cmd_sweep(const std::vector<std::string>& models, const std::string& images, const std::string& ks_text,
              double qs) {
  std::vector<std::size_t> ks;
  for (const std::string& k : split(ks_text, ',')) ks.push_back(detail::parse_number<std::size_t>("ks", k));
  const QuantizerConfig q = quantizer(qs);
  const std::vector<NamedImage> imgs = load_pgm_dir(images);
  if (imgs.empty()) throw Error("no input images in '" + images + "'");

  struct Entry {
    std::string label;
    DecoderParams params;
  };
  std::vector<Entry> entries;
  for (const std::string& m : models) {
    const auto eq = m.find('=');
    const std::string path = eq == std::string::npos ? m : m.substr(eq + 1);
    std::string label = eq == std::string::npos ? "" : m.substr(0, eq);
    if (!fs::exists(path)) throw Error("missing checkpoint '" + path + "'");
    entries.push_back({label, load_checkpoint(path)});
  }
  std::cout << sweep_header(ks) << '\n';
  for (const Entry& e : entries) {
    const std::vector<double> row = sweep_k(e.params, imgs, q, ks);
    std::cout << (e.label.empty() ? std::string(to_string(e.params.config().cell)) : e.label);
    for (double v : row) std::cout << ',' << format_metric(v);
    std::cout << '\n';
  }
  return 0;
}

int cmd_reconstruct(const std::string& model, const std::string& input, const std::string& output,
                    std::optional<std::size_t> K, double qs, bool baseline) {
  const GrayImage img = load_pgm(input);
  const UnitImage ref = to_unit(img);
  const QuantizerConfig q = quantizer(qs);
  const UnitImage base = baseline_image(img, q);
  std::cout << "step,psnr\n";
  std::cout << "baseline," << format_metric(psnr(ref, base)) << '\n';
  if (baseline) {
    save_pgm(output, to_gray(base));
    return 0;
  }
  if (model.empty()) throw ConfigError("reconstruct needs --model (or --baseline)");
  const DecoderParams p = load_checkpoint(model);
  const std::vector<UnitImage> traj = neural_trajectory(img, p, q, K.value_or(p.config().steps));
  for (std::size_t k = 0; k < traj.size(); ++k) std::cout << k + 1 << ',' << format_metric(psnr(ref, traj[k])) << '\n';
  save_pgm(output, to_gray(traj.back()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nidec: iterative neural decoder for block-quantized images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kCodeVersion));

  // synth
  std::string synth_out;
  std::size_t synth_count = 16, synth_w = 64, synth_h = 64;
  std::uint64_t synth_seed = 1;
  CLI::App* synth = app.add_subcommand("synth", "Write synthetic grayscale test images");
  synth->add_option("-o,--out", synth_out, "Output directory")->required();
  synth->add_option("--count", synth_count, "Number of images");
  synth->add_option("--width", synth_w, "Width in pixels");
  synth->add_option("--height", synth_h, "Height in pixels");
  synth->add_option("--seed", synth_seed, "Generator seed");

  // extract
  ExtractArgs ex;
  CLI::App* extract = app.add_subcommand("extract", "Build a patch-block dataset from a directory of PGM images");
  extract->add_option("input", ex.input, "Directory of PGM (P5) images");
  extract->add_option("-o,--out", ex.output, "Dataset file")->required();
  extract->add_option("--seed", ex.seed, "Shuffle seed");
  extract->add_option("--quality-scale", ex.quality_scale, "Quantization table multiplier");
  extract->add_option("--d", ex.d, "Patch size");
  extract->add_option("--N", ex.n_context, "Patches per block (with --raw)");
  extract->add_option("--raw", ex.raw, "Import a raw float32 record stream instead of images");
  extract->add_flag("--fail-fast", ex.fail_fast, "Abort on the first unreadable image");

  // train
  ConfigOptions train_opts;
  CLI::App* train = app.add_subcommand("train", "Train a decoder");
  train_opts.attach(train);

  // compare
  ConfigOptions cmp_opts;
  std::string cmp_algs = "bptt,rtrl,uoro,sab", cmp_seeds = "1";
  CLI::App* compare = app.add_subcommand("compare", "Train several algorithms and seeds, merge their logs");
  cmp_opts.attach(compare);
  compare->add_option("--algorithms", cmp_algs, "Comma-separated algorithms");
  compare->add_option("--seeds", cmp_seeds, "Comma-separated seeds");

  // eval
  std::string eval_model, eval_images;
  std::optional<std::size_t> eval_k;
  double eval_qs = 2.0;
  CLI::App* eval = app.add_subcommand("eval", "Per-image PSNR/SSIM/MS-SSIM of baseline and decoder");
  eval->add_option("--model", eval_model, "Checkpoint")->required();
  eval->add_option("--images", eval_images, "Directory of PGM images")->required();
  eval->add_option("--K", eval_k, "Refinement steps (default: checkpoint K)");
  eval->add_option("--quality-scale", eval_qs, "Quantization table multiplier");

  // sweep-k
  std::vector<std::string> sweep_models;
  std::string sweep_images, sweep_ks = "1,3,5,7,9,11";
  double sweep_qs = 2.0;
  CLI::App* sweep = app.add_subcommand("sweep-k", "Mean PSNR as a function of K");
  sweep->add_option("--model", sweep_models, "label=checkpoint, repeatable")->required();
  sweep->add_option("--images", sweep_images, "Directory of PGM images")->required();
  sweep->add_option("--ks", sweep_ks, "Comma-separated K values");
  sweep->add_option("--quality-scale", sweep_qs, "Quantization table multiplier");

  // reconstruct
  std::string rec_model, rec_in, rec_out;
  std::optional<std::size_t> rec_k;
  double rec_qs = 2.0;
  bool rec_baseline = false;
  CLI::App* rec = app.add_subcommand("reconstruct", "Quantize and decode one image");
  rec->add_option("--model", rec_model, "Checkpoint");
  rec->add_option("-i,--input", rec_in, "Input PGM")->required();
  rec->add_option("-o,--output", rec_out, "Output PGM")->required();
  rec->add_option("--K", rec_k, "Refinement steps (default: checkpoint K)");
  rec->add_option("--quality-scale", rec_qs, "Quantization table multiplier");
  rec->add_flag("--baseline", rec_baseline, "Write the dequantized baseline instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_out, synth_count, synth_w, synth_h, synth_seed);
    if (*extract) return cmd_extract(ex);
    if (*train) return cmd_train(train_opts);
    if (*compare) return cmd_compare(cmp_opts, cmp_algs, cmp_seeds);
    if (*eval) return cmd_eval(eval_model, eval_images, eval_k, eval_qs);
    if (*sweep) return cmd_sweep(sweep_models, sweep_images, sweep_ks, sweep_qs);
    if (*rec) return cmd_reconstruct(rec_model, rec_in, rec_out, rec_k, rec_qs, rec_baseline);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
