#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shrvq/binary.hpp"
#include "shrvq/checksum.hpp"
#include "shrvq/codebook_tree.hpp"
#include "shrvq/nn/layers.hpp"
#include "shrvq/random.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// How positions of past frames are exposed to the frame being generated.
enum class MaskMode {
  kFullHistory,    // every position of every past frame is visible
  kCausalHistory,  // past frames are only visible at raster positions j < k
};

inline const char* to_string(MaskMode m) {
  return m == MaskMode::kFullHistory ? "full_history" : "causal_history";
}

inline MaskMode parse_mask_mode(const std::string& s) {
  if (s == "full_history") return MaskMode::kFullHistory;
  if (s == "causal_history") return MaskMode::kCausalHistory;
  throw ParameterError("unknown mask mode '" + s + "'");
}

/// Visibility rules for predicting frame t+1 from frames <= t. Positions are
/// raster indices k = y * W + x (left to right, top to bottom, zero-based).
struct MaskSpec {
  int height = 1;
  int width = 1;
  int context = 1;
  MaskMode mode = MaskMode::kFullHistory;

  int positions() const { return height * width; }

  /// Position j of the generated frame is visible from position k.
  bool same_frame(int k, int j) const { return j < k; }

  /// Position j of past frame tau (0-based, tau < context) is visible from k.
  /// Frames at or after the generated one are never visible.
  bool history(int k, int tau, int j) const {
    if (tau < 0 || tau >= context) return false;
    return mode == MaskMode::kFullHistory || j < k;
  }

  /// Row-major (k, j) 0/1 matrix of same-frame visibility.
  std::vector<std::uint8_t> spatial_matrix() const {
    const int n = positions();
    std::vector<std::uint8_t> m(static_cast<std::size_t>(n) * n, 0);
    for (int k = 0; k < n; ++k)
      for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(k) * n + j] = same_frame(k, j) ? 1 : 0;
    return m;
  }

  /// 3x3 kernel taps that precede the centre in raster order; with
  /// include_centre the centre tap is added (stacked layers).
  static std::vector<nn::Tap> raster_taps(bool include_centre) {
    std::vector<nn::Tap> taps;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int dy = ky - 1, dx = kx - 1;
        const bool before = dy < 0 || (dy == 0 && dx < 0);
        if (before || (include_centre && dy == 0 && dx == 0)) taps.push_back({ky, kx});
      }
    return taps;
  }
};

inline MaskSpec causal_mask(int height, int width, int context,
                            MaskMode mode = MaskMode::kFullHistory) {
  if (height < 1 || width < 1 || context < 1) throw ParameterError("mask dimensions must be positive");
  return {height, width, context, mode};
}

/// Time-indexed stack of per-layer code grids.
struct CodeSequence {
  int branch = 0;
  std::vector<std::vector<CodeGrid>> frames;  // [layer][t]

  int layers() const { return static_cast<int>(frames.size()); }
  int length() const { return frames.empty() ? 0 : static_cast<int>(frames[0].size()); }
  int height() const { return length() ? frames[0][0].height : 0; }
  int width() const { return length() ? frames[0][0].width : 0; }

  static CodeSequence empty(int layers, int branch) {
    CodeSequence s;
    s.branch = branch;
    s.frames.resize(static_cast<std::size_t>(layers));
    return s;
  }

  /// Frames [first, first + count) of every layer.
  CodeSequence slice(int first, int count) const {
    if (first < 0 || count < 0 || first + count > length()) throw IndexError("code sequence slice out of range");
    CodeSequence s = empty(layers(), branch);
    for (int i = 0; i < layers(); ++i)
      s.frames[i].assign(frames[i].begin() + first, frames[i].begin() + first + count);
    return s;
  }

  void validate() const {
    for (int i = 0; i < layers(); ++i) {
      if (static_cast<int>(frames[i].size()) != length()) throw ShapeError("layers have different lengths");
      for (const auto& g : frames[i]) {
        if (g.height != height() || g.width != width()) throw ShapeError("code grids change shape over time");
        for (int v : g.values)
          if (v < 0 || v >= branch) throw InputError("code index " + std::to_string(v) + " out of range");
      }
    }
  }

  friend bool operator==(const CodeSequence&, const CodeSequence&) = default;
};

/// Integer array with a (layers, T, H, W, M) header, all little-endian i32.
inline std::string encode_code_sequence(const CodeSequence& s) {
  ByteWriter w;
  w.raw("SHRVQ-CODES-1\n");
  w.i32(s.layers());
  w.i32(s.length());
  w.i32(s.height());
  w.i32(s.width());
  w.i32(s.branch);
  for (const auto& layer : s.frames)
    for (const auto& g : layer)
      for (int v : g.values) w.i32(v);
  return w.take();
}

inline CodeSequence decode_code_sequence(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.raw(14) != "SHRVQ-CODES-1\n") throw FormatError("not a code sequence file");
  const int n = r.i32(), t = r.i32(), h = r.i32(), w = r.i32(), m = r.i32();
  if (n < 0 || t < 0 || h < 0 || w < 0 || m < 1) throw FormatError("bad code sequence header");
  CodeSequence s = CodeSequence::empty(n, m);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < t; ++k) {
      CodeGrid g(i, h, w);
      for (auto& v : g.values) v = r.i32();
      s.frames[i].push_back(std::move(g));
    }
  if (!r.at_end()) throw FormatError("trailing bytes in code sequence");
  s.validate();
  return s;
}

/// Mixed-radix codebook address of layer `layer` at each position, computed
/// from the codes of layers 0..layer-1 of one frame.
inline CodeGrid parent_address_grid(std::span<const CodeGrid> lower, int branch) {
  if (lower.empty()) return {};
  CodeGrid g(static_cast<int>(lower.size()), lower[0].height, lower[0].width);
  for (std::size_t pos = 0; pos < g.size(); ++pos) {
    std::int64_t a = 0;
    for (const auto& l : lower) a = a * branch + l.values[pos];
    g.values[pos] = static_cast<int>(a);
  }
  return g;
}

struct AstPmConfig {
  int branch = 8;       // M
  int height = 32;      // code grid rows
  int width = 32;       // code grid columns
  int window = 4;       // past frames seen when predicting the next one
  int channels = 32;    // embedding width
  int heads = 2;
  int head_layers = 2;  // stacked masked 3x3 layers after attention
  int context_blocks = 1;
  std::int64_t parent_codebooks = 0;  // > 0 conditions on the lower-layer path
  MaskMode mask_mode = MaskMode::kFullHistory;
  std::uint64_t seed = 0;

  void validate() const {
    if (branch < 2) throw ParameterError("AST-PM needs at least two classes");
    if (height < 1 || width < 1) throw ParameterError("AST-PM grid must be non-empty");
    if (window < 1) throw ParameterError("AST-PM window must be at least one frame");
    if (channels < 1 || heads < 1) throw ParameterError("AST-PM width and heads must be positive");
    if (channels % heads != 0) throw ParameterError("attention heads must divide the embedding width");
    if (head_layers < 0 || context_blocks < 0) throw ParameterError("layer counts must be non-negative");
    if (parent_codebooks < 0 || parent_codebooks > (std::int64_t{1} << 24))
      throw ParameterError("parent codebook count out of range");
  }
};

/// Scores over M codewords for each position of one predicted frame,
/// stored class-major as (M, H, W).
template <class T>
struct LogitVolume {
  Tensor<T> scores;

  int classes() const { return scores.dim(0); }
  int height() const { return scores.dim(1); }
  int width() const { return scores.dim(2); }
  int positions() const { return height() * width(); }
  T at(int pos, int m) const { return scores[static_cast<std::size_t>(m) * positions() + pos]; }

  std::vector<double> probabilities(int pos, double temperature = 1.0) const {
    std::vector<double> p(static_cast<std::size_t>(classes()));
    double mx = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < classes(); ++m) mx = std::max(mx, static_cast<double>(at(pos, m)) / temperature);
    double z = 0.0;
    for (int m = 0; m < classes(); ++m) {
      p[m] = std::exp(static_cast<double>(at(pos, m)) / temperature - mx);
      z += p[m];
    }
    for (auto& v : p) v /= z;
    return p;
  }
};

/// Mean over positions of the cross-entropy against one-hot targets.
template <class T>
double astpm_loss(const LogitVolume<T>& logits, const CodeGrid& target) {
  if (target.height != logits.height() || target.width != logits.width())
    throw ShapeError("target grid does not match logit volume");
  double total = 0.0;
  for (int pos = 0; pos < logits.positions(); ++pos) {
    const int t = target.values[pos];
    if (t < 0 || t >= logits.classes()) throw InputError("target index out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (int m = 0; m < logits.classes(); ++m) mx = std::max(mx, static_cast<double>(logits.at(pos, m)));
    double z = 0.0;
    for (int m = 0; m < logits.classes(); ++m) z += std::exp(static_cast<double>(logits.at(pos, m)) - mx);
    total += -(static_cast<double>(logits.at(pos, t)) - mx - std::log(z));
  }
  return total / logits.positions();
}

/// dL/dlogits for astpm_loss, shaped like the scores.
template <class T>
Tensor<T> astpm_loss_gradient(const LogitVolume<T>& logits, const CodeGrid& target) {
  Tensor<T> g(logits.scores.shape());
  const int n = logits.positions();
  for (int pos = 0; pos < n; ++pos) {
    const auto p = logits.probabilities(pos);
    for (int m = 0; m < logits.classes(); ++m) {
      const double onehot = target.values[pos] == m ? 1.0 : 0.0;
      g[static_cast<std::size_t>(m) * n + pos] = static_cast<T>((p[m] - onehot) / n);
    }
  }
  return g;
}

enum class DecodeMode { kGreedy, kSample };

template <class T>
struct AstPmCache;

/// Autoregressive spatiotemporal predictor for one hierarchy layer.
///
/// The past window is embedded and summarised by spatiotemporal
/// convolutions into a context map. The frame being generated is read only
/// through raster-masked 3x3 convolutions and a multi-head attention layer
/// whose keys are the voxels (tau, y, x) of the window plus the already
/// generated positions of the current frame.
template <class T>
class AstPm {
 public:
  AstPm() = default;

  explicit AstPm(const AstPmConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int c = cfg_.channels, m = cfg_.branch;
    const bool causal_history = cfg_.mask_mode == MaskMode::kCausalHistory;
    emb_hist_ = nn::Param<T>("astpm.emb_hist", {m, c});
    emb_tgt_ = nn::Param<T>("astpm.emb_tgt", {m, c});
    time_emb_ = nn::Param<T>("astpm.time", {cfg_.window + 1, c});
    row_emb_ = nn::Param<T>("astpm.row", {cfg_.height, c});
    col_emb_ = nn::Param<T>("astpm.col", {cfg_.width, c});
    if (cfg_.parent_codebooks > 0)
      parent_emb_ = nn::Param<T>("astpm.parent", {static_cast<int>(cfg_.parent_codebooks), c});
    ctx_conv_ = nn::Conv2d<T>("astpm.ctx", cfg_.window * c, c, 3, 1, 1,
                              causal_history ? MaskSpec::raster_taps(false) : std::vector<nn::Tap>{});
    for (int b = 0; b < cfg_.context_blocks; ++b)
      ctx_blocks_.emplace_back("astpm.ctx_block" + std::to_string(b), c, c, 3, 1, 1,
                               causal_history ? MaskSpec::raster_taps(true) : std::vector<nn::Tap>{});
    ctx_proj_ = nn::Conv2d<T>("astpm.ctx_proj", c, c, 1, 1, 0);
    head_a_ = nn::Conv2d<T>("astpm.head_a", c, c, 3, 1, 1, MaskSpec::raster_taps(false));
    wq_ = nn::Conv2d<T>("astpm.attn_q", c, c, 1, 1, 0);
    wk_ = nn::Conv2d<T>("astpm.attn_k", c, c, 1, 1, 0);
    wv_ = nn::Conv2d<T>("astpm.attn_v", c, c, 1, 1, 0);
    wo_ = nn::Conv2d<T>("astpm.attn_o", c, c, 1, 1, 0);
    for (int l = 0; l < cfg_.head_layers; ++l)
      head_b_.emplace_back("astpm.head_b" + std::to_string(l), c, c, 3, 1, 1, MaskSpec::raster_taps(true));
    out_ = nn::Conv2d<T>("astpm.out", c, m, 1, 1, 0);

    Rng rng(cfg_.seed);
    for (auto& v : emb_hist_.value.values()) v = static_cast<T>(rng.normal());
    for (auto& v : emb_tgt_.value.values()) v = static_cast<T>(rng.normal());
    for (auto* p : {&time_emb_, &row_emb_, &col_emb_})
      for (auto& v : p->value.values()) v = static_cast<T>(rng.normal(0.0, 0.5));
    for (auto& v : parent_emb_.value.values()) v = static_cast<T>(rng.normal(0.0, 0.5));
    ctx_conv_.init(rng);
    for (auto& b : ctx_blocks_) b.init(rng);
    ctx_proj_.init(rng);
    head_a_.init(rng);
    wq_.init(rng);
    wk_.init(rng);
    wv_.init(rng);
    wo_.init(rng);
    for (auto& b : head_b_) b.init(rng);
    out_.init(rng);
  }

  const AstPmConfig& config() const { return cfg_; }
  MaskSpec mask() const { return causal_mask(cfg_.height, cfg_.width, cfg_.window, cfg_.mask_mode); }

  nn::ParamList<T> params() {
    nn::ParamList<T> p{&emb_hist_, &emb_tgt_, &time_emb_, &row_emb_, &col_emb_};
    if (cfg_.parent_codebooks > 0) p.push_back(&parent_emb_);
    nn::append(p, ctx_conv_.params());
    for (auto& b : ctx_blocks_) nn::append(p, b.params());
    nn::append(p, ctx_proj_.params());
    nn::append(p, head_a_.params());
    nn::append(p, wq_.params());
    nn::append(p, wk_.params());
    nn::append(p, wv_.params());
    nn::append(p, wo_.params());
    for (auto& b : head_b_) nn::append(p, b.params());
    nn::append(p, out_.params());
    return p;
  }

  std::string checksum() const {
    Fnv1a h;
    for (auto* p : const_cast<AstPm*>(this)->params()) h.update_values(p->value.values());
    return h.hex();
  }

  /// The `window` frames preceding step t+1 of `frames` (t = frames used),
  /// oldest first; missing early frames repeat the first one.
  std::vector<CodeGrid> history_window(std::span<const CodeGrid> frames, int t) const {
    if (t < 1 || t > static_cast<int>(frames.size())) throw IndexError("history needs at least one past frame");
    std::vector<CodeGrid> h;
    for (int k = t - cfg_.window; k < t; ++k) h.push_back(frames[std::max(k, 0)]);
    return h;
  }

  /// Logits for the frame following `history` (exactly `window` grids,
  /// oldest first). Position k reads only the past window and positions
  /// j < k of `partial`.
  LogitVolume<T> forward(std::span<const CodeGrid> history, const CodeGrid& partial,
                         const CodeGrid* parent = nullptr, AstPmCache<T>* cache = nullptr) const;

  /// Accumulate parameter gradients from dL/dlogits.
  void backward(const AstPmCache<T>& cache, const Tensor<T>& dlogits);

  /// Generates one frame position by position in raster order.
  CodeGrid generate_frame(std::span<const CodeGrid> history, const CodeGrid* parent, DecodeMode mode,
                          double temperature, Rng& rng, LogitVolume<T>* logits_out = nullptr) const;

 private:
  struct Static {
    Tensor<T> ctx_input;        // (window*C, H, W)
    Tensor<T> ctx_pre0;
    std::vector<Tensor<T>> block_pre;
    Tensor<T> ctx;              // context map (C, H, W)
    Tensor<T> bias_map;         // ctx_proj(ctx) + parent embedding
    Tensor<T> pos;              // (C, H, W) row + column embedding
    Tensor<T> hist_tokens;      // (C, 1, window*H*W)
    Tensor<T> k_hist, v_hist;   // projected history tokens
    nn::ConvCache<T> c_ctx, c_proj, c_kh, c_vh;
    std::vector<nn::ConvCache<T>> c_blocks;
  };

  void check_inputs(std::span<const CodeGrid> history, const CodeGrid& partial, const CodeGrid* parent) const;
  Static compute_static(std::span<const CodeGrid> history, const CodeGrid* parent, bool keep) const;

  // Calls f(first, count) for each contiguous run of keys visible from query k.
  template <class F>
  void visible_runs(int k, F&& f) const {
    const int hw = cfg_.height * cfg_.width;
    const int nh = cfg_.window * hw;
    if (cfg_.mask_mode == MaskMode::kFullHistory)
      f(0, nh);
    else if (k > 0)
      for (int tau = 0; tau < cfg_.window; ++tau) f(tau * hw, k);
    if (k > 0) f(nh, k);
  }

  friend struct AstPmCache<T>;

  AstPmConfig cfg_;
  nn::Param<T> emb_hist_, emb_tgt_, time_emb_, row_emb_, col_emb_, parent_emb_;
  nn::Conv2d<T> ctx_conv_;
  std::vector<nn::Conv2d<T>> ctx_blocks_;
  nn::Conv2d<T> ctx_proj_;
  nn::Conv2d<T> head_a_;
  nn::Conv2d<T> wq_, wk_, wv_, wo_;
  std::vector<nn::Conv2d<T>> head_b_;
  nn::Conv2d<T> out_;

 public:
  // Intermediate state needed for backward.
  struct Trace {
    Static st;
    std::vector<int> history_codes;  // window*H*W
    std::vector<int> target_codes;   // H*W
    std::vector<int> parent_codes;
    Tensor<T> a_pre, a1, q_in, tgt_tokens, q, k, v, o;
    std::vector<RowMat<T>> probs;  // per head, (H*W, keys)
    std::vector<Tensor<T>> b_in, b_pre;
    Tensor<T> a_final;
    nn::ConvCache<T> c_head_a, c_q, c_kt, c_vt, c_o, c_out;
    std::vector<nn::ConvCache<T>> c_b;
  };
};

template <class T>
struct AstPmCache {
  typename AstPm<T>::Trace trace;
};

namespace detail {

template <class T>
Tensor<T> as_tokens(const Tensor<T>& map) {
  return map.reshaped({map.dim(0), 1, static_cast<int>(map.size() / map.dim(0))});
}

}  // namespace detail

template <class T>
void AstPm<T>::check_inputs(std::span<const CodeGrid> history, const CodeGrid& partial,
                            const CodeGrid* parent) const {
  if (static_cast<int>(history.size()) != cfg_.window)
    throw ShapeError("AST-PM expects " + std::to_string(cfg_.window) + " history frames, got " +
                     std::to_string(history.size()));
  auto check_grid = [&](const CodeGrid& g, std::int64_t limit, const char* what) {
    if (g.height != cfg_.height || g.width != cfg_.width || g.size() != static_cast<std::size_t>(g.height) * g.width)
      throw ShapeError(std::string(what) + " grid has the wrong shape");
    for (int v : g.values)
      if (v < 0 || v >= limit) throw InputError(std::string(what) + " index " + std::to_string(v) + " out of range");
  };
  for (const auto& g : history) check_grid(g, cfg_.branch, "history");
  check_grid(partial, cfg_.branch, "partial frame");
  if (cfg_.parent_codebooks > 0) {
    if (!parent) throw InputError("this AST-PM is conditioned on lower-layer codes; none given");
    check_grid(*parent, cfg_.parent_codebooks, "parent");
  }
}

template <class T>
typename AstPm<T>::Static AstPm<T>::compute_static(std::span<const CodeGrid> history, const CodeGrid* parent,
                                                   bool keep) const {
  const int c = cfg_.channels, h = cfg_.height, w = cfg_.width, hw = h * w, win = cfg_.window;
  Static s;
  s.ctx_input = Tensor<T>({win * c, h, w});
  s.hist_tokens = Tensor<T>({c, 1, win * hw});
  s.pos = Tensor<T>({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) s.pos(ch, y, x) = row_emb_.value(y, ch) + col_emb_.value(x, ch);
  for (int tau = 0; tau < win; ++tau)
    for (int p = 0; p < hw; ++p) {
      const int code = history[tau].values[p];
      for (int ch = 0; ch < c; ++ch) {
        const T e = emb_hist_.value(code, ch);
        s.ctx_input[(static_cast<std::size_t>(tau) * c + ch) * hw + p] = e;
        s.hist_tokens[static_cast<std::size_t>(ch) * win * hw + tau * hw + p] =
            e + time_emb_.value(tau, ch) + s.pos[static_cast<std::size_t>(ch) * hw + p];
      }
    }
  s.ctx_pre0 = ctx_conv_.forward(s.ctx_input, keep ? &s.c_ctx : nullptr);
  Tensor<T> ctx = nn::relu(s.ctx_pre0);
  s.c_blocks.resize(ctx_blocks_.size());
  for (std::size_t b = 0; b < ctx_blocks_.size(); ++b) {
    Tensor<T> pre = ctx_blocks_[b].forward(ctx, keep ? &s.c_blocks[b] : nullptr);
    ctx += nn::relu(pre);
    s.block_pre.push_back(std::move(pre));
  }
  s.bias_map = ctx_proj_.forward(ctx, keep ? &s.c_proj : nullptr);
  if (cfg_.parent_codebooks > 0)
    for (int p = 0; p < hw; ++p)
      for (int ch = 0; ch < c; ++ch)
        s.bias_map[static_cast<std::size_t>(ch) * hw + p] += parent_emb_.value(parent->values[p], ch);
  s.ctx = std::move(ctx);
  s.k_hist = wk_.forward(s.hist_tokens, keep ? &s.c_kh : nullptr);
  s.v_hist = wv_.forward(s.hist_tokens, keep ? &s.c_vh : nullptr);
  return s;
}

template <class T>
LogitVolume<T> AstPm<T>::forward(std::span<const CodeGrid> history, const CodeGrid& partial,
                                 const CodeGrid* parent, AstPmCache<T>* cache) const {
  check_inputs(history, partial, parent);
  const int c = cfg_.channels, h = cfg_.height, w = cfg_.width, hw = h * w, win = cfg_.window;
  const int nh = win * hw, nk = nh + hw, heads = cfg_.heads, dh = c / heads;
  Trace local;
  Trace& tr = cache ? cache->trace : local;
  const bool keep = cache != nullptr;
  tr.st = compute_static(history, parent, keep);
  const Static& st = tr.st;

  Tensor<T> u({c, h, w});
  Tensor<T> tgt_tokens({c, 1, hw});
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const T e = emb_tgt_.value(partial.values[p], ch);
      u[static_cast<std::size_t>(ch) * hw + p] = e;
      tgt_tokens[static_cast<std::size_t>(ch) * hw + p] =
          e + time_emb_.value(win, ch) + st.pos[static_cast<std::size_t>(ch) * hw + p];
    }
  Tensor<T> a_pre = head_a_.forward(u, keep ? &tr.c_head_a : nullptr);
  a_pre += st.bias_map;
  Tensor<T> a1 = nn::relu(a_pre);
  Tensor<T> q_in = a1 + st.pos;
  Tensor<T> q = wq_.forward(detail::as_tokens(q_in), keep ? &tr.c_q : nullptr);
  Tensor<T> kt = wk_.forward(tgt_tokens, keep ? &tr.c_kt : nullptr);
  Tensor<T> vt = wv_.forward(tgt_tokens, keep ? &tr.c_vt : nullptr);

  // Keys/values: history voxels followed by the positions of this frame.
  RowMat<T> kmat(c, nk), vmat(c, nk);
  kmat.leftCols(nh) = as_matrix(st.k_hist, c);
  kmat.rightCols(hw) = as_matrix(kt, c);
  vmat.leftCols(nh) = as_matrix(st.v_hist, c);
  vmat.rightCols(hw) = as_matrix(vt, c);
  const auto qmat = as_matrix(q, c);
  Tensor<T> o({c, 1, hw});
  auto omat = as_matrix(o, c);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  tr.probs.assign(static_cast<std::size_t>(heads), RowMat<T>());
  for (int hd = 0; hd < heads; ++hd) {
    RowMat<T> s = (qmat.middleRows(hd * dh, dh).transpose() * kmat.middleRows(hd * dh, dh)) * scale;
    Eigen::Array<T, 1, Eigen::Dynamic> e(nk);
    for (int k = 0; k < hw; ++k) {
      T mx = -std::numeric_limits<T>::infinity();
      visible_runs(k, [&](int a, int n) { mx = std::max(mx, s.row(k).segment(a, n).maxCoeff()); });
      e.setZero();
      T z{};
      visible_runs(k, [&](int a, int n) {
        e.segment(a, n) = (s.row(k).segment(a, n).array() - mx).exp();
        z += e.segment(a, n).sum();
      });
      if (z > T{}) e /= z;
      s.row(k) = e.matrix();
    }
    omat.middleRows(hd * dh, dh).noalias() = vmat.middleRows(hd * dh, dh) * s.transpose();
    tr.probs[hd] = std::move(s);
  }
  Tensor<T> att = wo_.forward(o, keep ? &tr.c_o : nullptr);
  Tensor<T> a = a1 + att.reshaped({c, h, w});
  tr.c_b.resize(head_b_.size());
  tr.b_in.clear();
  tr.b_pre.clear();
  for (std::size_t l = 0; l < head_b_.size(); ++l) {
    Tensor<T> pre = head_b_[l].forward(a, keep ? &tr.c_b[l] : nullptr);
    if (keep) tr.b_in.push_back(a);
    a += nn::relu(pre);
    if (keep) tr.b_pre.push_back(std::move(pre));
  }
  Tensor<T> logits = out_.forward(nn::relu(a), keep ? &tr.c_out : nullptr);
  if (keep) {
    tr.history_codes.clear();
    for (const auto& g : history) tr.history_codes.insert(tr.history_codes.end(), g.values.begin(), g.values.end());
    tr.target_codes = partial.values;
    tr.parent_codes = parent ? parent->values : std::vector<int>{};
    tr.a_pre = std::move(a_pre);
    tr.a1 = std::move(a1);
    tr.q_in = std::move(q_in);
    tr.tgt_tokens = std::move(tgt_tokens);
    tr.q = std::move(q);
    tr.k = Tensor<T>({c, 1, nk});
    as_matrix(tr.k, c) = kmat;
    tr.v = Tensor<T>({c, 1, nk});
    as_matrix(tr.v, c) = vmat;
    tr.o = std::move(o);
    tr.a_final = std::move(a);
  }
  return {std::move(logits)};
}

template <class T>
void AstPm<T>::backward(const AstPmCache<T>& cache, const Tensor<T>& dlogits) {
  const Trace& tr = cache.trace;
  const Static& st = tr.st;
  const int c = cfg_.channels, h = cfg_.height, w = cfg_.width, hw = h * w, win = cfg_.window;
  const int nh = win * hw, nk = nh + hw, heads = cfg_.heads, dh = c / heads;

  Tensor<T> da = nn::relu_backward(tr.a_final, out_.backward(tr.c_out, dlogits));
  for (std::size_t l = head_b_.size(); l-- > 0;) {
    Tensor<T> dpre = nn::relu_backward(tr.b_pre[l], da);
    da += head_b_[l].backward(tr.c_b[l], dpre);
  }
  // a = a1 + attention(a1)
  Tensor<T> da1 = da;
  Tensor<T> d_o = wo_.backward(tr.c_o, detail::as_tokens(da));
  const auto qmat = as_matrix(tr.q, c);
  const auto kmat = as_matrix(tr.k, c);
  const auto vmat = as_matrix(tr.v, c);
  const auto domat = as_matrix(d_o, c);
  RowMat<T> dq(c, hw), dk(c, nk), dv(c, nk);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  for (int hd = 0; hd < heads; ++hd) {
    const RowMat<T>& p = tr.probs[hd];
    const auto dom = domat.middleRows(hd * dh, dh);
    dv.middleRows(hd * dh, dh).noalias() = dom * p;
    RowMat<T> dp = dom.transpose() * vmat.middleRows(hd * dh, dh);
    RowMat<T> ds = p.cwiseProduct(dp);
    const Eigen::Matrix<T, Eigen::Dynamic, 1> rs = ds.rowwise().sum();
    ds -= (p.array().colwise() * rs.array()).matrix();
    dq.middleRows(hd * dh, dh).noalias() = (kmat.middleRows(hd * dh, dh) * ds.transpose()) * scale;
    dk.middleRows(hd * dh, dh).noalias() = (qmat.middleRows(hd * dh, dh) * ds) * scale;
  }
  Tensor<T> dq_t({c, 1, hw}), dkh({c, 1, nh}), dvh({c, 1, nh}), dkt({c, 1, hw}), dvt({c, 1, hw});
  as_matrix(dq_t, c) = dq;
  as_matrix(dkh, c) = dk.leftCols(nh);
  as_matrix(dvh, c) = dv.leftCols(nh);
  as_matrix(dkt, c) = dk.rightCols(hw);
  as_matrix(dvt, c) = dv.rightCols(hw);
  Tensor<T> dq_in = wq_.backward(tr.c_q, dq_t).reshaped({c, h, w});
  Tensor<T> d_hist_tok = wk_.backward(st.c_kh, dkh);
  d_hist_tok += wv_.backward(st.c_vh, dvh);
  Tensor<T> d_tgt_tok = wk_.backward(tr.c_kt, dkt);
  d_tgt_tok += wv_.backward(tr.c_vt, dvt);
  da1 += dq_in;

  auto add_pos = [&](int p, int ch, T g) {
    row_emb_.grad(p / w, ch) += g;
    col_emb_.grad(p % w, ch) += g;
  };
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < c; ++ch) add_pos(p, ch, dq_in[static_cast<std::size_t>(ch) * hw + p]);

  Tensor<T> dpre = nn::relu_backward(tr.a_pre, da1);
  Tensor<T> du = head_a_.backward(tr.c_head_a, dpre);
  for (int p = 0; p < hw; ++p)
    for (int ch = 0; ch < c; ++ch) {
      const T g = d_tgt_tok[static_cast<std::size_t>(ch) * hw + p];
      emb_tgt_.grad(tr.target_codes[p], ch) += g + du[static_cast<std::size_t>(ch) * hw + p];
      time_emb_.grad(win, ch) += g;
      add_pos(p, ch, g);
    }
  if (cfg_.parent_codebooks > 0)
    for (int p = 0; p < hw; ++p)
      for (int ch = 0; ch < c; ++ch)
        parent_emb_.grad(tr.parent_codes[p], ch) += dpre[static_cast<std::size_t>(ch) * hw + p];

  Tensor<T> dctx = ctx_proj_.backward(st.c_proj, dpre);
  for (std::size_t b = ctx_blocks_.size(); b-- > 0;) {
    Tensor<T> dbp = nn::relu_backward(st.block_pre[b], dctx);
    dctx += ctx_blocks_[b].backward(st.c_blocks[b], dbp);
  }
  Tensor<T> dx = ctx_conv_.backward(st.c_ctx, nn::relu_backward(st.ctx_pre0, std::move(dctx)));
  for (int tau = 0; tau < win; ++tau)
    for (int p = 0; p < hw; ++p) {
      const int code = tr.history_codes[static_cast<std::size_t>(tau) * hw + p];
      for (int ch = 0; ch < c; ++ch) {
        const T gt = d_hist_tok[static_cast<std::size_t>(ch) * nh + tau * hw + p];
        emb_hist_.grad(code, ch) += gt + dx[(static_cast<std::size_t>(tau) * c + ch) * hw + p];
        time_emb_.grad(tau, ch) += gt;
        add_pos(p, ch, gt);
      }
    }
}

namespace detail {

/// Output of a stride-1, pad-1 convolution at a single position.
template <class T>
void conv_at(const nn::Conv2d<T>& conv, const Tensor<T>& in, int y, int x, T* out) {
  const auto& taps = conv.taps();
  const int cin = conv.in_channels(), nt = static_cast<int>(taps.size());
  const int h = in.dim(1), w = in.dim(2);
  Eigen::Matrix<T, Eigen::Dynamic, 1> patch(cin * nt);
  for (int ci = 0; ci < cin; ++ci)
    for (int t = 0; t < nt; ++t) {
      const int iy = y - 1 + taps[t].ky, ix = x - 1 + taps[t].kx;
      patch[ci * nt + t] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? in(ci, iy, ix) : T{};
    }
  const int cout = conv.out_channels();
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> o(out, cout);
  o.noalias() = as_matrix(conv.weight().value, cout) * patch;
  o += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(conv.bias().value.data(), cout);
}

/// 1x1 convolution applied to one column vector.
template <class T>
Eigen::Matrix<T, Eigen::Dynamic, 1> linear_at(const nn::Conv2d<T>& conv, const Eigen::Matrix<T, Eigen::Dynamic, 1>& v) {
  const int cout = conv.out_channels();
  Eigen::Matrix<T, Eigen::Dynamic, 1> o = as_matrix(conv.weight().value, cout) * v;
  o += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(conv.bias().value.data(), cout);
  return o;
}

inline int pick_code(const std::vector<double>& probs, DecodeMode mode, Rng& rng) {
  if (mode == DecodeMode::kGreedy) {
    int best = 0;
    for (int m = 1; m < static_cast<int>(probs.size()); ++m)
      if (probs[m] > probs[best]) best = m;
    return best;
  }
  const double u = rng.uniform();
  double acc = 0.0;
  for (int m = 0; m < static_cast<int>(probs.size()); ++m) {
    acc += probs[m];
    if (u < acc) return m;
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace detail

template <class T>
CodeGrid AstPm<T>::generate_frame(std::span<const CodeGrid> history, const CodeGrid* parent, DecodeMode mode,
                                  double temperature, Rng& rng, LogitVolume<T>* logits_out) const {
  if (mode == DecodeMode::kSample && !(temperature > 0.0))
    throw ParameterError("sampling temperature must be positive");
  CodeGrid frame(0, cfg_.height, cfg_.width);
  check_inputs(history, frame, parent);
  const int c = cfg_.channels, h = cfg_.height, w = cfg_.width, hw = h * w, win = cfg_.window, m = cfg_.branch;
  const int nh = win * hw, heads = cfg_.heads, dh = c / heads;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const Static st = compute_static(history, parent, false);
  const auto khist = as_matrix(st.k_hist, c);
  const auto vhist = as_matrix(st.v_hist, c);

  Tensor<T> u({c, h, w}), a1({c, h, w});
  std::vector<Tensor<T>> layer_maps(head_b_.size() + 1, Tensor<T>({c, h, w}));
  RowMat<T> kt(c, hw), vt(c, hw);
  Tensor<T> logits({m, h, w});
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  Vec tmp(c), scores(nh + hw);

  for (int k = 0; k < hw; ++k) {
    const int y = k / w, x = k % w;
    detail::conv_at(head_a_, u, y, x, tmp.data());
    for (int ch = 0; ch < c; ++ch) {
      const T v = tmp[ch] + st.bias_map[static_cast<std::size_t>(ch) * hw + k];
      a1[static_cast<std::size_t>(ch) * hw + k] = v > T{} ? v : T{};
    }
    Vec qin(c);
    for (int ch = 0; ch < c; ++ch)
      qin[ch] = a1[static_cast<std::size_t>(ch) * hw + k] + st.pos[static_cast<std::size_t>(ch) * hw + k];
    const Vec q = detail::linear_at(wq_, qin);
    Vec o = Vec::Zero(c);
    for (int hd = 0; hd < heads; ++hd) {
      const auto qh = q.segment(hd * dh, dh);
      T mx = -std::numeric_limits<T>::infinity();
      int n = 0;
      visible_runs(k, [&](int a, int cnt) {
        if (a < nh)
          scores.segment(a, cnt).noalias() = khist.block(hd * dh, a, dh, cnt).transpose() * qh;
        else
          scores.segment(a, cnt).noalias() = kt.block(hd * dh, a - nh, dh, cnt).transpose() * qh;
        scores.segment(a, cnt) *= scale;
        mx = std::max(mx, scores.segment(a, cnt).maxCoeff());
        n += cnt;
      });
      if (n == 0) continue;
      T z{};
      visible_runs(k, [&](int a, int cnt) {
        scores.segment(a, cnt) = (scores.segment(a, cnt).array() - mx).exp();
        z += scores.segment(a, cnt).sum();
      });
      visible_runs(k, [&](int a, int cnt) {
        if (a < nh)
          o.segment(hd * dh, dh).noalias() += vhist.block(hd * dh, a, dh, cnt) * scores.segment(a, cnt) / z;
        else
          o.segment(hd * dh, dh).noalias() += vt.block(hd * dh, a - nh, dh, cnt) * scores.segment(a, cnt) / z;
      });
    }
    const Vec att = detail::linear_at(wo_, o);
    Tensor<T>& a2 = layer_maps[0];
    for (int ch = 0; ch < c; ++ch)
      a2[static_cast<std::size_t>(ch) * hw + k] = a1[static_cast<std::size_t>(ch) * hw + k] + att[ch];
    for (std::size_t l = 0; l < head_b_.size(); ++l) {
      detail::conv_at(head_b_[l], layer_maps[l], y, x, tmp.data());
      for (int ch = 0; ch < c; ++ch) {
        const T prev = layer_maps[l][static_cast<std::size_t>(ch) * hw + k];
        layer_maps[l + 1][static_cast<std::size_t>(ch) * hw + k] = prev + (tmp[ch] > T{} ? tmp[ch] : T{});
      }
    }
    Vec r(c);
    for (int ch = 0; ch < c; ++ch) {
      const T v = layer_maps.back()[static_cast<std::size_t>(ch) * hw + k];
      r[ch] = v > T{} ? v : T{};
    }
    const Vec lg = detail::linear_at(out_, r);
    for (int cls = 0; cls < m; ++cls) logits[static_cast<std::size_t>(cls) * hw + k] = lg[cls];

    LogitVolume<T> view{Tensor<T>({m, 1, 1}, std::vector<T>(lg.data(), lg.data() + m))};
    const int code = detail::pick_code(view.probabilities(0, mode == DecodeMode::kSample ? temperature : 1.0), mode, rng);
    frame.values[k] = code;
    Vec tok(c);
    for (int ch = 0; ch < c; ++ch) {
      const T e = emb_tgt_.value(code, ch);
      u[static_cast<std::size_t>(ch) * hw + k] = e;
      tok[ch] = e + time_emb_.value(win, ch) + st.pos[static_cast<std::size_t>(ch) * hw + k];
    }
    kt.col(k) = detail::linear_at(wk_, tok);
    vt.col(k) = detail::linear_at(wv_, tok);
  }
  if (logits_out) logits_out->scores = std::move(logits);
  return frame;
}

/// Free-running generation of `horizon` frames for every layer. Frames are
/// produced one at a time; within a frame layers are generated in order so
/// a conditioned layer sees the codes just generated below it.
template <class T>
CodeSequence generate_codes(std::span<const AstPm<T>> models, const CodeSequence& context, int horizon,
                            DecodeMode mode, double temperature, std::uint64_t seed) {
  if (horizon < 1) throw ParameterError("prediction horizon must be at least one frame");
  if (context.length() < 1) throw ParameterError("context must contain at least one frame");
  if (static_cast<int>(models.size()) != context.layers())
    throw ShapeError("need one AST-PM per hierarchy layer");
  if (mode == DecodeMode::kSample && !(temperature > 0.0))
    throw ParameterError("sampling temperature must be positive");
  context.validate();
  Rng rng(seed);
  CodeSequence all = context;
  const int t0 = context.length();
  for (int s = 0; s < horizon; ++s) {
    std::vector<CodeGrid> current;
    for (int i = 0; i < context.layers(); ++i) {
      const auto& model = models[i];
      const auto hist = model.history_window(all.frames[i], t0 + s);
      CodeGrid parent;
      const bool cond = model.config().parent_codebooks > 0;
      if (cond) parent = parent_address_grid(current, context.branch);
      if (cond && i == 0) parent = CodeGrid(0, context.height(), context.width(), 0);
      CodeGrid g = model.generate_frame(hist, cond ? &parent : nullptr, mode, temperature, rng);
      g.layer = i;
      current.push_back(g);
    }
    for (int i = 0; i < context.layers(); ++i) all.frames[i].push_back(current[i]);
  }
  return all.slice(t0, horizon);
}

}  // namespace shrvq
