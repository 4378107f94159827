#ifndef NIDEC_MODEL_HPP
#define NIDEC_MODEL_HPP

// Decoder parameters live in one flat vector. The layout is
//
//   [ W_1 .. W_N | state-function tensors | U | c ]
//    `---------------- recurrent ----------'  output
//
// so the parameters that influence the recurrent state form a prefix,
// and gradients share the same layout.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nidec/dataset.hpp"
#include "nidec/error.hpp"
#include "nidec/numeric.hpp"
#include "nidec/rng.hpp"

namespace nidec {

enum class CellKind : std::uint32_t { kElman = 0, kLstm = 1, kGru = 2, kDelta = 3, kMlp = 4 };

inline constexpr std::array<CellKind, 5> kAllCells = {CellKind::kElman, CellKind::kLstm, CellKind::kGru,
                                                      CellKind::kDelta, CellKind::kMlp};

inline std::string_view to_string(CellKind k) {
  switch (k) {
    case CellKind::kElman: return "elman";
    case CellKind::kLstm: return "lstm";
    case CellKind::kGru: return "gru";
    case CellKind::kDelta: return "delta";
    case CellKind::kMlp: return "mlp";
  }
  return "?";
}

inline CellKind parse_cell(std::string_view s) {
  for (CellKind k : kAllCells)
    if (to_string(k) == s) return k;
  throw ConfigError("unknown cell kind '" + std::string(s) + "'");
}

struct DecoderConfig {
  CellKind cell = CellKind::kLstm;
  std::size_t hidden = 512;
  std::size_t n_context = kContextPatches;
  std::size_t d = kCodecBlock;
  std::size_t steps = 4;  // K
  Activation state_act = Activation::kTanh;

  std::size_t patch_dim() const { return d * d; }
  /// Size of the recurrent state z: (s, c) for LSTM, s otherwise.
  std::size_t state_size() const { return cell == CellKind::kLstm ? 2 * hidden : hidden; }

  void validate() const {
    if (steps < 1) throw ConfigError("K must be >= 1");
    if (hidden < 1) throw ConfigError("hidden size must be >= 1");
    if (n_context < 1 || d < 1) throw ConfigError("N and d must be >= 1");
  }
};

/// Named state-function tensors. Each cell uses a subset.
enum class Slot : std::size_t {
  kV, kVf, kVi, kVc, kVo, kVz, kVr, kVs,
  kB, kBf, kBi, kBc, kBo, kBz, kBr, kBs,
  kAlpha, kBeta1, kBeta2,
  kCount
};

inline constexpr std::size_t kSlotCount = static_cast<std::size_t>(Slot::kCount);

struct TensorSpec {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;
  bool matrix = true;  // weight matrix (random init) vs. per-unit vector
  std::size_t size() const { return rows * cols; }
};

class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const DecoderConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const std::size_t n = cfg.hidden, pd = cfg.patch_dim();
    slot_.fill(kAbsent);
    for (std::size_t i = 0; i < cfg.n_context; ++i) add("W" + std::to_string(i + 1), n, pd, true);
    state_begin_ = total_;
    switch (cfg.cell) {
      case CellKind::kElman:
        add_slot(Slot::kV, "V", n, n);
        add_slot(Slot::kB, "b", n, 1);
        break;
      case CellKind::kLstm:
        add_slot(Slot::kVf, "V_f", n, n);
        add_slot(Slot::kVi, "V_i", n, n);
        add_slot(Slot::kVc, "V_c", n, n);
        add_slot(Slot::kVo, "V_o", n, n);
        add_slot(Slot::kBf, "b_f", n, 1);
        add_slot(Slot::kBi, "b_i", n, 1);
        add_slot(Slot::kBc, "b_c", n, 1);
        add_slot(Slot::kBo, "b_o", n, 1);
        break;
      case CellKind::kGru:
        add_slot(Slot::kVz, "V_z", n, n);
        add_slot(Slot::kVr, "V_r", n, n);
        add_slot(Slot::kVs, "V_s", n, n);
        add_slot(Slot::kBz, "b_z", n, 1);
        add_slot(Slot::kBr, "b_r", n, 1);
        add_slot(Slot::kBs, "b_s", n, 1);
        break;
      case CellKind::kDelta:
        add_slot(Slot::kV, "V", n, n);
        add_slot(Slot::kB, "b", n, 1);
        add_slot(Slot::kBr, "b_r", n, 1);
        add_slot(Slot::kAlpha, "alpha", n, 1);
        add_slot(Slot::kBeta1, "beta1", n, 1);
        add_slot(Slot::kBeta2, "beta2", n, 1);
        break;
      case CellKind::kMlp:
        add_slot(Slot::kB, "b", n, 1);
        break;
    }
    recurrent_size_ = total_;
    u_index_ = tensors_.size();
    add("U", pd, n, true);
    add("c", pd, 1, false);
  }

  const DecoderConfig& config() const { return cfg_; }
  const std::vector<TensorSpec>& tensors() const { return tensors_; }
  std::size_t total_size() const { return total_; }
  /// Parameters that feed the recurrent state (Theta_t and Theta_s).
  std::size_t recurrent_size() const { return recurrent_size_; }
  std::size_t state_begin() const { return state_begin_; }
  std::size_t state_param_size() const { return recurrent_size_ - state_begin_; }

  bool has(Slot s) const { return slot_[static_cast<std::size_t>(s)] != kAbsent; }
  const TensorSpec& spec(Slot s) const {
    const std::size_t i = slot_[static_cast<std::size_t>(s)];
    if (i == kAbsent) throw Error("parameter slot not present for this cell");
    return tensors_[i];
  }
  const TensorSpec& w_spec(std::size_t i) const { return tensors_[i]; }
  const TensorSpec& u_spec() const { return tensors_[u_index_]; }
  const TensorSpec& c_spec() const { return tensors_[u_index_ + 1]; }

  template <typename T>
  MatSpan<T> mat(std::span<T> flat, const TensorSpec& t) const {
    return MatSpan<T>(flat.data() + t.offset, t.rows, t.cols);
  }
  template <typename T>
  std::span<T> vec(std::span<T> flat, const TensorSpec& t) const {
    return flat.subspan(t.offset, t.size());
  }

 private:
  static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);

  void add(std::string name, std::size_t rows, std::size_t cols, bool matrix) {
    tensors_.push_back({std::move(name), rows, cols, total_, matrix});
    total_ += rows * cols;
  }
  void add_slot(Slot s, std::string name, std::size_t rows, std::size_t cols) {
    slot_[static_cast<std::size_t>(s)] = tensors_.size();
    add(std::move(name), rows, cols, s <= Slot::kVs);
  }

  DecoderConfig cfg_;
  std::vector<TensorSpec> tensors_;
  std::array<std::size_t, kSlotCount> slot_{};
  std::size_t total_ = 0;
  std::size_t state_begin_ = 0;
  std::size_t recurrent_size_ = 0;
  std::size_t u_index_ = 0;
};

/// Theta = {Theta_t, Theta_s, Theta_d} stored flat according to a ParamLayout.
class DecoderParams {
 public:
  DecoderParams() = default;
  explicit DecoderParams(const DecoderConfig& cfg)
      : layout_(std::make_shared<const ParamLayout>(cfg)), values_(layout_->total_size(), 0.0) {}

  const DecoderConfig& config() const { return layout_->config(); }
  const ParamLayout& layout() const { return *layout_; }
  Vec& values() { return values_; }
  const Vec& values() const { return values_; }
  ConstSpan flat() const { return values_; }
  MutSpan flat_mut() { return values_; }

  MatView mat(Slot s) const { return layout_->mat(flat(), layout_->spec(s)); }
  ConstSpan vec(Slot s) const { return layout_->vec(flat(), layout_->spec(s)); }
  MatView W(std::size_t i) const { return layout_->mat(flat(), layout_->w_spec(i)); }
  MatView U() const { return layout_->mat(flat(), layout_->u_spec()); }
  ConstSpan c() const { return layout_->vec(flat(), layout_->c_spec()); }

  MatMut mat_mut(Slot s) { return layout_->mat(flat_mut(), layout_->spec(s)); }
  MutSpan vec_mut(Slot s) { return layout_->vec(flat_mut(), layout_->spec(s)); }
  MatMut W_mut(std::size_t i) { return layout_->mat(flat_mut(), layout_->w_spec(i)); }
  MatMut U_mut() { return layout_->mat(flat_mut(), layout_->u_spec()); }
  MutSpan c_mut() { return layout_->vec(flat_mut(), layout_->c_spec()); }

  /// Shares the layout, new zeroed storage (e.g. a gradient).
  Vec zeros_like() const { return Vec(values_.size(), 0.0); }

  bool operator==(const DecoderParams& o) const {
    return values_ == o.values_ && config().cell == o.config().cell && config().hidden == o.config().hidden &&
           config().n_context == o.config().n_context && config().d == o.config().d;
  }

 private:
  std::shared_ptr<const ParamLayout> layout_;
  Vec values_;
};

/// Matrices ~ U(-bound, bound); biases zero; Delta-RNN alpha = 0,
/// beta1 = beta2 = 1. Tensors are drawn in layout order.
inline DecoderParams init_params(const DecoderConfig& cfg, SeededRng& rng, double bound = kInitBound) {
  DecoderParams p(cfg);
  const ParamLayout& lay = p.layout();
  for (const TensorSpec& t : lay.tensors()) {
    if (t.matrix) fill_uniform(rng, lay.vec(p.flat_mut(), t), bound);
  }
  if (cfg.cell == CellKind::kDelta) {
    fill_zero(p.vec_mut(Slot::kAlpha));
    for (double& v : p.vec_mut(Slot::kBeta1)) v = 1.0;
    for (double& v : p.vec_mut(Slot::kBeta2)) v = 1.0;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint file:
//   "NIDP" | u32 version | u32 cell | u32 activation | u32 n | u32 N | u32 d |
//   u32 K | u64 count | count x f64 (layout order)   -- all little-endian

inline constexpr char kCheckpointMagic[4] = {'N', 'I', 'D', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint64_t kCheckpointHeaderBytes = 4 + 7 * 4 + 8;

inline std::vector<char> encode_checkpoint(const DecoderParams& p) {
  const DecoderConfig& c = p.config();
  std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(c.cell));
  detail::put_u32(out, static_cast<std::uint32_t>(c.state_act));
  detail::put_u32(out, static_cast<std::uint32_t>(c.hidden));
  detail::put_u32(out, static_cast<std::uint32_t>(c.n_context));
  detail::put_u32(out, static_cast<std::uint32_t>(c.d));
  detail::put_u32(out, static_cast<std::uint32_t>(c.steps));
  detail::put_u64(out, p.values().size());
  for (double v : p.values()) detail::put_f64(out, v);
  return out;
}

inline DecoderParams decode_checkpoint(const std::vector<char>& bytes) {
  if (bytes.size() < kCheckpointHeaderBytes) throw FormatError("checkpoint: truncated header", bytes.size());
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("checkpoint: bad magic (need NIDP)", 0);
  const char* h = bytes.data();
  if (detail::get_u32(h + 4) != kCheckpointVersion) throw FormatError("checkpoint: unsupported version", 4);
  const std::uint32_t cell = detail::get_u32(h + 8);
  const std::uint32_t act = detail::get_u32(h + 12);
  if (cell > static_cast<std::uint32_t>(CellKind::kMlp)) throw FormatError("checkpoint: unknown cell kind", 8);
  if (act > static_cast<std::uint32_t>(Activation::kIdentity)) throw FormatError("checkpoint: unknown activation", 12);
  DecoderConfig cfg;
  cfg.cell = static_cast<CellKind>(cell);
  cfg.state_act = static_cast<Activation>(act);
  cfg.hidden = detail::get_u32(h + 16);
  cfg.n_context = detail::get_u32(h + 20);
  cfg.d = detail::get_u32(h + 24);
  cfg.steps = detail::get_u32(h + 28);
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what(), 16);
  }
  const std::uint64_t count = detail::get_u64(h + 32);
  DecoderParams p(cfg);
  if (count != p.values().size())
    throw FormatError("checkpoint: parameter count " + std::to_string(count) + " does not match layout (" +
                          std::to_string(p.values().size()) + ")",
                      32);
  if (bytes.size() != kCheckpointHeaderBytes + 8 * count)
    throw FormatError("checkpoint: body size mismatch", std::min<std::uint64_t>(bytes.size(), kCheckpointHeaderBytes));
  for (std::uint64_t i = 0; i < count; ++i) p.values()[i] = detail::get_f64(h + kCheckpointHeaderBytes + 8 * i);
  return p;
}

inline void save_checkpoint(const std::string& path, const DecoderParams& p) {
  detail::write_bytes(path, encode_checkpoint(p));
}

inline DecoderParams load_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.offset());
  }
}

}  // namespace nidec

#endif  // NIDEC_MODEL_HPP
