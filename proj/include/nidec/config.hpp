#ifndef NIDEC_CONFIG_HPP
#define NIDEC_CONFIG_HPP

// Run configuration as a flat key=value text file.
//
//   # comment
//   cell = lstm
//   hidden = 16
//
// Unknown keys are errors. Keys that only appear in manifests (see
// kManifestKeys) are accepted and ignored, so a manifest can be fed back
// in as a config.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nidec/codec.hpp"
#include "nidec/error.hpp"
#include "nidec/loss.hpp"
#include "nidec/model.hpp"
#include "nidec/optim.hpp"
#include "nidec/sab.hpp"
#include "nidec/trainer.hpp"

namespace nidec {

inline constexpr std::string_view kCodeVersion = "nidec 0.1.0";

struct RunConfig {
  DecoderConfig model;  // hidden = 512, K = 4 by default
  LossConfig loss;
  SabConfig sab;
  Algorithm algorithm = Algorithm::kBptt;
  std::uint64_t seed = 1;
  std::size_t batch = 256;
  std::size_t updates = 100000;
  std::size_t eval_every = 1000;
  double lr0 = 2e-4;
  std::optional<double> lr_end;  // unset: lr0 / 100
  double lr_power = 2.0;
  double momentum = 0.0;
  double clip = kClipNorm;
  double init_bound = kInitBound;
  double quality_scale = 2.0;
  std::string train_data;
  std::string val_dir;
  std::string out_dir = "run";

  void validate() const {
    model.validate();
    loss.validate();
    sab.validate();
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (updates < 1) throw ConfigError("updates must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(clip > 0.0)) throw ConfigError("clip must be positive");
    if (!(init_bound >= 0.0)) throw ConfigError("init_bound must be >= 0");
    if (!(lr_power > 0.0)) throw ConfigError("lr_power must be positive");
    QuantizerConfig q;
    q.quality_scale = quality_scale;
    q.validate();
    optimizer().validate();
  }

  OptimizerState optimizer() const {
    OptimizerState o;
    o.lr0 = lr0;
    o.lr_end = lr_end.value_or(lr0 / 100.0);
    o.decay_steps = updates;
    o.power = lr_power;
    o.momentum = momentum;
    return o;
  }

  TrainSettings settings() const { return {algorithm, loss, sab, clip}; }

  QuantizerConfig quantizer() const {
    QuantizerConfig q;
    q.quality_scale = quality_scale;
    return q;
  }
};

/// Full-scale protocol: n = 512, B = 256, K = 4, lr 2e-4, clip 13. The
/// update budget (100000) is a placeholder.
inline RunConfig full_profile() { return RunConfig{}; }

/// Desk-scale defaults: small hidden layer, small batches and budget.
inline RunConfig desk_profile() {
  RunConfig c;
  c.model.hidden = 16;
  c.batch = 32;
  c.updates = 2000;
  c.eval_every = 100;
  c.momentum = 0.9;
  return c;
}

inline RunConfig profile_by_name(std::string_view name) {
  if (name == "full") return full_profile();
  if (name == "desk") return desk_profile();
  throw ConfigError("unknown profile '" + std::string(name) + "' (full|desk)");
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  // shortest text that parses back to the same double
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf, end);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("bad value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("bad boolean '" + std::string(text) + "' for key '" + std::string(key) + "'");
}

}  // namespace detail

/// Keys written by the training harness into manifests, skipped on load.
inline constexpr std::array<std::string_view, 6> kManifestKeys = {"code_version", "start_time", "eval_row",
                                                                  "train_blocks", "val_images", "status"};

/// Applies one key=value setting. Throws ConfigError on unknown keys.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  using detail::parse_number;
  const std::string v(value);
  if (key == "cell") c.model.cell = parse_cell(v);
  else if (key == "hidden") c.model.hidden = parse_number<std::size_t>(key, v);
  else if (key == "n_context") c.model.n_context = parse_number<std::size_t>(key, v);
  else if (key == "d") c.model.d = parse_number<std::size_t>(key, v);
  else if (key == "K") c.model.steps = parse_number<std::size_t>(key, v);
  else if (key == "state_activation") c.model.state_act = parse_activation(v);
  else if (key == "alpha") c.loss.alpha = parse_number<double>(key, v);
  else if (key == "mae_batch_normalized") c.loss.mae_batch_normalized = detail::parse_bool(key, v);
  else if (key == "k_top") c.sab.k_top = parse_number<std::size_t>(key, v);
  else if (key == "k_attn") c.sab.k_attn = parse_number<std::size_t>(key, v);
  else if (key == "trunc") c.sab.trunc = parse_number<std::size_t>(key, v);
  else if (key == "algorithm") c.algorithm = parse_algorithm(v);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "batch") c.batch = parse_number<std::size_t>(key, v);
  else if (key == "updates") c.updates = parse_number<std::size_t>(key, v);
  else if (key == "eval_every") c.eval_every = parse_number<std::size_t>(key, v);
  else if (key == "lr") c.lr0 = parse_number<double>(key, v);
  else if (key == "lr_end") c.lr_end = v == "auto" ? std::nullopt : std::optional(parse_number<double>(key, v));
  else if (key == "lr_power") c.lr_power = parse_number<double>(key, v);
  else if (key == "momentum") c.momentum = parse_number<double>(key, v);
  else if (key == "clip") c.clip = parse_number<double>(key, v);
  else if (key == "init_bound") c.init_bound = parse_number<double>(key, v);
  else if (key == "quality_scale") c.quality_scale = parse_number<double>(key, v);
  else if (key == "train_data") c.train_data = v;
  else if (key == "val_dir") c.val_dir = v;
  else if (key == "out_dir") c.out_dir = v;
  else if (std::find(kManifestKeys.begin(), kManifestKeys.end(), key) != kManifestKeys.end()) return;
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

/// Parses `key=value` text on top of `base`. Errors name the line.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(std::string_view(t).substr(0, eq));
    const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    try {
      set_config_value(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

/// Every field, one per line, in a fixed order.
inline std::string serialize_config(const RunConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "cell=" << to_string(c.model.cell) << '\n'
    << "hidden=" << c.model.hidden << '\n'
    << "n_context=" << c.model.n_context << '\n'
    << "d=" << c.model.d << '\n'
    << "K=" << c.model.steps << '\n'
    << "state_activation=" << to_string(c.model.state_act) << '\n'
    << "alpha=" << format_double(c.loss.alpha) << '\n'
    << "mae_batch_normalized=" << (c.loss.mae_batch_normalized ? "true" : "false") << '\n'
    << "k_top=" << c.sab.k_top << '\n'
    << "k_attn=" << c.sab.k_attn << '\n'
    << "trunc=" << c.sab.trunc << '\n'
    << "algorithm=" << to_string(c.algorithm) << '\n'
    << "seed=" << c.seed << '\n'
    << "batch=" << c.batch << '\n'
    << "updates=" << c.updates << '\n'
    << "eval_every=" << c.eval_every << '\n'
    << "lr=" << format_double(c.lr0) << '\n'
    << "lr_end=" << (c.lr_end ? format_double(*c.lr_end) : std::string("auto")) << '\n'
    << "lr_power=" << format_double(c.lr_power) << '\n'
    << "momentum=" << format_double(c.momentum) << '\n'
    << "clip=" << format_double(c.clip) << '\n'
    << "init_bound=" << format_double(c.init_bound) << '\n'
    << "quality_scale=" << format_double(c.quality_scale) << '\n'
    << "train_data=" << c.train_data << '\n'
    << "val_dir=" << c.val_dir << '\n'
    << "out_dir=" << c.out_dir << '\n';
  return o.str();
}

inline bool operator==(const RunConfig& a, const RunConfig& b) { return serialize_config(a) == serialize_config(b); }

}  // namespace nidec

#endif  // NIDEC_CONFIG_HPP
