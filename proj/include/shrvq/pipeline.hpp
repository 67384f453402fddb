#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "shrvq/ast_pm.hpp"
#include "shrvq/autoencoder.hpp"
#include "shrvq/codebook_tree.hpp"
#include "shrvq/config.hpp"
#include "shrvq/datakit.hpp"
#include "shrvq/metrics.hpp"
#include "shrvq/nn/adam.hpp"
#include "shrvq/vq_loss.hpp"

namespace shrvq {

/// Autoencoder, codebook tree and per-layer predictors with their
/// configuration and training metadata.
template <class T>
struct Model {
  ModelConfig config;
  Autoencoder<T> ae;
  CodebookTree<T> tree;
  std::vector<AstPm<T>> predictors;
  KeyValues meta;

  Shape frame_shape() const { return ae.frame_shape(); }
};

template <class T>
Model<T> build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model<T> m{cfg, Autoencoder<T>(cfg.autoencoder()),
             CodebookTree<T>::build(cfg.layers, cfg.branch, cfg.latent_dim, cfg.tree_seed()), {}, {}};
  for (int i = 0; i < cfg.layers; ++i) m.predictors.emplace_back(cfg.astpm(i));
  return m;
}

/// One line per epoch and phase, e.g. "phase=hrvqvae epoch=3 loss=0.01".
struct TrainingLog {
  std::vector<std::string> lines;
  std::function<void(const std::string&)> sink;

  void add(const std::string& phase, int epoch, const KeyValues& values) {
    std::string s = "phase=" + phase + " epoch=" + std::to_string(epoch);
    for (const auto& [k, v] : values.entries()) s += " " + k + "=" + v;
    lines.push_back(s);
    if (sink) sink(s);
  }
  std::string text() const {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
  }
};

template <class T>
void check_frame(const Model<T>& m, const Tensor<T>& f) {
  if (f.shape() != m.frame_shape())
    throw ShapeError("frame " + shape_str(f.shape()) + " does not match model input " + shape_str(m.frame_shape()));
}

template <class T>
QuantizationOutput<T> quantize_frame(const Model<T>& m, const Tensor<T>& frame) {
  check_frame(m, frame);
  return hierarchical_quantize(m.tree, m.ae.encode(frame));
}

/// HR-VQVAE reconstruction: decode of e_C for the frame's own codes.
template <class T>
Tensor<T> reconstruct(const Model<T>& m, const Tensor<T>& frame) {
  return m.ae.decode_frame(quantize_frame(m, frame).combined);
}

template <class T>
CodeSequence encode_sequence(const Model<T>& m, const std::vector<Tensor<T>>& frames) {
  CodeSequence s = CodeSequence::empty(m.config.layers, m.config.branch);
  for (const auto& f : frames) {
    auto q = quantize_frame(m, f);
    for (int i = 0; i < m.config.layers; ++i) s.frames[i].push_back(std::move(q.code_grids[i]));
  }
  return s;
}

/// e_C of frame t of a code sequence.
template <class T>
Tensor<T> combined_embedding(const Model<T>& m, const CodeSequence& codes, int t) {
  std::vector<CodeGrid> grids;
  for (int i = 0; i < codes.layers(); ++i) grids.push_back(codes.frames[i].at(t));
  return lookup(m.tree, std::span<const CodeGrid>(grids));
}

template <class T>
std::vector<Tensor<T>> decode_codes(const Model<T>& m, const CodeSequence& codes) {
  if (codes.layers() != m.config.layers) throw ShapeError("code sequence has the wrong number of layers");
  std::vector<Tensor<T>> out;
  for (int t = 0; t < codes.length(); ++t) out.push_back(m.ae.decode_frame(combined_embedding(m, codes, t)));
  return out;
}

struct PredictionRequest {
  int horizon = 1;
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

template <class T>
CodeSequence predict_codes(const Model<T>& m, const std::vector<Tensor<T>>& context, const PredictionRequest& req) {
  if (context.empty()) throw ParameterError("prediction needs at least one context frame");
  if (req.horizon < 1) throw ParameterError("prediction horizon must be at least one frame");
  if (req.horizon > m.config.max_horizon)
    throw ParameterError("horizon " + std::to_string(req.horizon) + " exceeds the configured maximum " +
                         std::to_string(m.config.max_horizon));
  const auto codes = encode_sequence(m, context);
  return generate_codes<T>(m.predictors, codes, req.horizon, req.mode, req.temperature, req.seed);
}

/// Encode the context, generate future codes per layer, decode e_C of each
/// generated frame.
template <class T>
std::vector<Tensor<T>> predict_frames(const Model<T>& m, const std::vector<Tensor<T>>& context,
                                      const PredictionRequest& req) {
  return decode_codes(m, predict_codes(m, context, req));
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

template <class T>
std::vector<const Tensor<T>*> all_frames(const Dataset<T>& data) {
  std::vector<const Tensor<T>*> out;
  for (const auto& s : data)
    for (const auto& f : s.frames) out.push_back(&f);
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

inline void append_history(KeyValues& meta, const std::string& key, double v) {
  const std::string cur = meta.get(key, "");
  meta.set(key, cur.empty() ? format_double(v) : cur + "," + format_double(v));
}

}  // namespace detail

/// Sets each layer's codewords to residuals observed on `frames`, one layer
/// at a time so later layers see the residuals left by the initialized ones.
template <class T>
void init_codebooks_from_data(Model<T>& m, const std::vector<const Tensor<T>*>& frames, std::uint64_t seed) {
  std::vector<Tensor<T>> latents;
  for (const auto* f : frames) latents.push_back(m.ae.encode(*f));
  for (int i = 0; i < m.tree.layers(); ++i) {
    DonorPool<T> donors;
    for (const auto& z : latents) collect_donors(hierarchical_quantize(m.tree, z), donors);
    auto usage = make_usage(m.tree);
    for (int j = 0; j < m.tree.layers(); ++j)
      if (j != i) std::fill(usage[j].begin(), usage[j].end(), 1);
    m.tree = reseed_dead_codewords(std::move(m.tree), usage, donors, derive_seed(seed, i));
  }
}

/// Encoder, tree and decoder trained per frame on the hierarchical loss.
/// Codewords unused during an epoch are reseeded from residuals of the
/// epoch's last batch, except after the final epoch.
template <class T>
void train_hrvqvae(Model<T>& m, const Dataset<T>& data, const TrainingConfig& cfg, TrainingLog* log = nullptr) {
  cfg.validate();
  const auto frames = detail::all_frames(data);
  if (frames.empty()) throw DataError("no training frames");
  for (const auto* f : frames) check_frame(m, *f);
  const auto betas = cfg.beta_values(m.config.layers);
  Rng rng(derive_seed(cfg.seed, 21));
  if (cfg.init_from_data) {
    std::vector<std::size_t> idx(frames.size());
    std::iota(idx.begin(), idx.end(), 0);
    rng.shuffle(idx.begin(), idx.end());
    std::vector<const Tensor<T>*> sample;
    for (std::size_t k = 0; k < std::min<std::size_t>(idx.size(), 64); ++k) sample.push_back(frames[idx[k]]);
    init_codebooks_from_data(m, sample, derive_seed(cfg.seed, 22));
  }
  auto params = m.ae.params();
  nn::append(params, m.tree.params());
  nn::Adam<T> opt(params, {cfg.lr});
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.hrvqvae_epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    auto usage = make_usage(m.tree);
    DonorPool<T> donors;
    double loss = 0, recon = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      donors.clear();
      opt.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const Tensor<T>& x = *frames[order[k]];
        EncoderCache<T> ec;
        DecoderCache<T> dc;
        auto z = m.ae.encode(x, &ec);
        auto q = hierarchical_quantize(m.tree, z);
        auto xh = m.ae.decode(StraightThrough<T>::forward(z, q.combined), &dc);
        const auto lb = hrvqvae_loss(x, xh, q, betas);
        loss += lb.total;
        recon += lb.reconstruction;
        auto g = hrvqvae_loss_gradients(x, xh, q, betas);
        auto dz = StraightThrough<T>::backward(m.ae.backward_decoder(dc, g.d_reconstruction));
        dz += g.d_latent;
        m.ae.backward_encoder(ec, dz);
        scatter_codeword_gradients(m.tree, q, g.d_codewords);
        accumulate_usage(q, m.tree.branch(), usage);
        collect_donors(q, donors);
      }
      opt.step(1.0 / static_cast<double>(b1 - b0));
    }
    std::uint64_t dead = 0;
    for (const auto& layer : usage) dead += static_cast<std::uint64_t>(std::count(layer.begin(), layer.end(), 0));
    if (cfg.reseed && epoch < cfg.hrvqvae_epochs && dead > 0)
      m.tree = reseed_dead_codewords(std::move(m.tree), usage, donors, derive_seed(cfg.seed, 1000 + epoch));
    const double n = static_cast<double>(frames.size());
    KeyValues kv;
    kv.set("loss", loss / n);
    kv.set("recon_mse", recon / n);
    kv.set("recon_psnr", psnr_from_mse(recon / n));
    kv.set("dead_codewords", dead);
    if (log) log->add("hrvqvae", epoch, kv);
    detail::append_history(m.meta, "hrvqvae.loss", loss / n);
  }
  m.meta.set("hrvqvae.epochs", cfg.hrvqvae_epochs);
  m.meta.set("hrvqvae.tree_checksum", m.tree.checksum());
}

namespace detail {

/// Layer-i parent grid for frame t: mixed-radix address of the lower
/// layers' codes, all zero for layer 0.
inline CodeGrid parent_grid(const std::vector<CodeGrid>& lower, int layer, int branch, int h, int w) {
  if (layer == 0) return CodeGrid(0, h, w, 0);
  return parent_address_grid(std::span<const CodeGrid>(lower.data(), static_cast<std::size_t>(layer)), branch);
}

template <class T>
std::vector<CodeGrid> frame_grids(const CodeSequence& s, int t) {
  std::vector<CodeGrid> g;
  for (int i = 0; i < s.layers(); ++i) g.push_back(s.frames[i][t]);
  return g;
}

}  // namespace detail

/// First frame index trained as a target: early frames whose window would
/// reach before the sequence start are skipped unless prediction itself
/// starts with a shorter context.
template <class T>
int first_target(const Model<T>& m) {
  return std::min(m.config.astpm_window, m.config.context);
}

/// Teacher-forced cross-entropy training of every layer's predictor on
/// ground-truth code sequences.
template <class T>
void train_astpm_on_codes(Model<T>& m, const std::vector<CodeSequence>& codes, const TrainingConfig& cfg,
                          TrainingLog* log = nullptr) {
  cfg.validate();
  const int t0 = first_target(m);
  std::vector<std::pair<int, int>> samples;
  for (std::size_t s = 0; s < codes.size(); ++s) {
    if (codes[s].layers() != m.config.layers) throw ShapeError("code sequence layer count does not match model");
    for (int t = t0; t < codes[s].length(); ++t) samples.emplace_back(static_cast<int>(s), t);
  }
  if (samples.empty()) throw DataError("no code frames with a full history window");
  const int n = m.config.layers, h = m.predictors[0].config().height, w = m.predictors[0].config().width;
  std::vector<nn::Adam<T>> opts;
  for (auto& p : m.predictors) opts.emplace_back(p.params(), nn::AdamOptions{cfg.astpm_lr});
  Rng rng(derive_seed(cfg.seed, 31));
  for (int epoch = 1; epoch <= cfg.astpm_epochs; ++epoch) {
    rng.shuffle(samples.begin(), samples.end());
    std::vector<double> loss(n, 0.0);
    for (std::size_t b0 = 0; b0 < samples.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(samples.size(), b0 + cfg.batch_size);
      for (int i = 0; i < n; ++i) {
        auto& model = m.predictors[i];
        opts[i].zero_grad();
        for (std::size_t k = b0; k < b1; ++k) {
          const auto& seq = codes[samples[k].first];
          const int t = samples[k].second;
          const auto hist = model.history_window(seq.frames[i], t);
          CodeGrid parent;
          const bool cond = model.config().parent_codebooks > 0;
          if (cond) parent = detail::parent_grid(detail::frame_grids<T>(seq, t), i, m.config.branch, h, w);
          AstPmCache<T> cache;
          const auto& target = seq.frames[i][t];
          auto lv = model.forward(hist, target, cond ? &parent : nullptr, &cache);
          loss[i] += astpm_loss(lv, target);
          model.backward(cache, astpm_loss_gradient(lv, target));
        }
        opts[i].step(1.0 / static_cast<double>(b1 - b0));
      }
    }
    KeyValues kv;
    double total = 0;
    for (int i = 0; i < n; ++i) {
      kv.set("ce" + std::to_string(i), loss[i] / samples.size());
      total += loss[i] / samples.size();
    }
    kv.set("loss", total);
    if (log) log->add("astpm", epoch, kv);
    detail::append_history(m.meta, "astpm.loss", total);
  }
  m.meta.set("astpm.epochs", cfg.astpm_epochs);
  m.meta.set("astpm.tree_checksum", m.tree.checksum());
}

template <class T>
std::vector<CodeSequence> encode_dataset(const Model<T>& m, const Dataset<T>& data) {
  std::vector<CodeSequence> out;
  for (const auto& s : data) out.push_back(encode_sequence(m, s.frames));
  return out;
}

template <class T>
void train_astpm(Model<T>& m, const Dataset<T>& data, const TrainingConfig& cfg, TrainingLog* log = nullptr) {
  train_astpm_on_codes(m, encode_dataset(m, data), cfg, log);
}

template <class T>
void check_training_data(const Model<T>& m, const Dataset<T>& data) {
  if (data.empty()) throw DataError("training dataset is empty");
  const int need = m.config.context + m.config.horizon;
  for (const auto& s : data)
    if (s.length() < need)
      throw DataError("sequence " + s.name + " has " + std::to_string(s.length()) + " frames, needs " +
                      std::to_string(need));
}

/// HR-VQVAE first, then AST-PM on codes from the frozen phase-1 model.
template <class T>
Model<T> train_disjoint(const Dataset<T>& data, const ModelConfig& mc, const TrainingConfig& tc,
                        TrainingLog* log = nullptr) {
  Model<T> m = build_model<T>(mc);
  check_training_data(m, data);
  train_hrvqvae(m, data, tc, log);
  train_astpm(m, data, tc, log);
  m.meta.set("train.seed", tc.seed);
  m.meta.set("train.mode", "disjoint");
  return m;
}

/// L_p + lambda * reconstruction.
inline double joint_objective(double prediction_loss, double reconstruction_loss, double lambda) {
  if (lambda < 0) throw ParameterError("lambda must be non-negative");
  return prediction_loss + lambda * reconstruction_loss;
}

/// Fine-tunes the decoder and the predictors on
///   sum_i CE_i + lambda * mean_s ||x_s - D(e_C(predicted codes_s))||^2
/// over windows of `context + horizon` frames. Future codes are predicted
/// greedily from ground-truth history; encoder and codebooks stay frozen.
/// `codes` are the frozen encoder's codes of `data`.
template <class T>
void train_joint(Model<T>& m, const Dataset<T>& data, const std::vector<CodeSequence>& codes, const TrainingConfig& cfg,
                 TrainingLog* log = nullptr) {
  if (cfg.lambda < 0) throw ParameterError("lambda must be non-negative");
  cfg.validate();
  check_training_data(m, data);
  if (codes.size() != data.size()) throw DataError("one code sequence per training sequence is required");
  const std::string enc_sum = m.ae.encoder_checksum(), tree_sum = m.tree.checksum();
  const int ctx = m.config.context, hor = m.config.horizon, n = m.config.layers;
  std::vector<std::pair<int, int>> windows;
  for (std::size_t s = 0; s < data.size(); ++s)
    for (int a = 0; a + ctx + hor <= data[s].length(); a += hor) windows.emplace_back(static_cast<int>(s), a);
  // Adam cancels a constant loss weight, so lambda also scales the decoder step.
  nn::Adam<T> dec_opt(m.ae.decoder_params(), {cfg.lr * cfg.lambda});
  std::vector<nn::Adam<T>> opts;
  for (auto& p : m.predictors) opts.emplace_back(p.params(), nn::AdamOptions{cfg.astpm_lr});
  Rng rng(derive_seed(cfg.seed, 41));
  const int h = m.predictors[0].config().height, w = m.predictors[0].config().width;
  for (int epoch = 1; epoch <= cfg.joint_epochs; ++epoch) {
    rng.shuffle(windows.begin(), windows.end());
    double lp_sum = 0, rec_sum = 0;
    for (std::size_t b0 = 0; b0 < windows.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(windows.size(), b0 + cfg.batch_size);
      dec_opt.zero_grad();
      for (auto& o : opts) o.zero_grad();
      for (std::size_t k = b0; k < b1; ++k) {
        const auto [s, a] = windows[k];
        const auto& seq = codes[s];
        double lp = 0, rec = 0;
        const double nrec = cfg.joint_context_recon ? ctx + hor : hor;
        // Squared error of one decoded frame; the gradient reaches the decoder only.
        auto decoder_term = [&](const Tensor<T>& e, const Tensor<T>& x) {
          DecoderCache<T> dc;
          const auto xh = m.ae.decode(e, &dc);
          Tensor<T> dx(x.shape());
          double mse = 0;
          for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = static_cast<double>(xh[j]) - x[j];
            mse += d * d;
            dx[j] = static_cast<T>(cfg.lambda * 2.0 * d / (static_cast<double>(x.size()) * nrec));
          }
          rec += mse / static_cast<double>(x.size()) / nrec;
          if (cfg.lambda > 0) m.ae.backward_decoder(dc, dx);
        };
        if (cfg.joint_context_recon)
          for (int t = a; t < a + ctx; ++t) decoder_term(combined_embedding(m, seq, t), data[s].frames[t]);
        for (int step = 0; step < hor; ++step) {
          const int t = a + ctx + step;
          std::vector<CodeGrid> predicted;
          Rng unused(0);
          for (int i = 0; i < n; ++i) {
            auto& model = m.predictors[i];
            // History is the window ending at t, clipped to start at a.
            std::vector<CodeGrid> frames(seq.frames[i].begin() + a, seq.frames[i].begin() + t);
            const auto hist = model.history_window(frames, t - a);
            const bool cond = model.config().parent_codebooks > 0;
            CodeGrid parent_gt, parent_pred;
            if (cond) {
              parent_gt = detail::parent_grid(detail::frame_grids<T>(seq, t), i, m.config.branch, h, w);
              parent_pred = detail::parent_grid(predicted, i, m.config.branch, h, w);
            }
            const auto& target = seq.frames[i][t];
            AstPmCache<T> cache;
            auto lv = model.forward(hist, target, cond ? &parent_gt : nullptr, &cache);
            lp += astpm_loss(lv, target) / hor;
            auto g = astpm_loss_gradient(lv, target);
            g *= static_cast<T>(1.0 / hor);
            model.backward(cache, g);
            CodeGrid pg = model.generate_frame(hist, cond ? &parent_pred : nullptr, DecodeMode::kGreedy, 1.0, unused);
            pg.layer = i;
            predicted.push_back(std::move(pg));
          }
          decoder_term(lookup(m.tree, std::span<const CodeGrid>(predicted)), data[s].frames[t]);
        }
        lp_sum += lp;
        rec_sum += rec;
      }
      const double scale = 1.0 / static_cast<double>(b1 - b0);
      if (cfg.lambda > 0) dec_opt.step(scale);
      for (auto& o : opts) o.step(scale);
    }
    const double nw = static_cast<double>(windows.size());
    KeyValues kv;
    kv.set("prediction_loss", lp_sum / nw);
    kv.set("recon_mse", rec_sum / nw);
    kv.set("loss", joint_objective(lp_sum / nw, rec_sum / nw, cfg.lambda));
    if (log) log->add("joint", epoch, kv);
    detail::append_history(m.meta, "joint.loss", joint_objective(lp_sum / nw, rec_sum / nw, cfg.lambda));
  }
  if (m.ae.encoder_checksum() != enc_sum || m.tree.checksum() != tree_sum)
    throw Error("joint training modified frozen parameters");
  m.meta.set("joint.epochs", cfg.joint_epochs);
  m.meta.set("joint.lambda", cfg.lambda);
  m.meta.set("train.mode", "joint");
}

template <class T>
void train_joint(Model<T>& m, const Dataset<T>& data, const TrainingConfig& cfg, TrainingLog* log = nullptr) {
  train_joint(m, data, encode_dataset(m, data), cfg, log);
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvaluationOptions {
  int context = 4;
  int horizon = 4;
  PredictionRequest request;
  bool oracle_codes = false;  // decode ground-truth future codes instead of predicting
  std::optional<CorruptionSpec> corruption;  // applied to the context frames only
  std::uint64_t corruption_seed = 0;
};

inline EvaluationOptions evaluation_options(const ModelConfig& mc, const EvalConfig& ec) {
  EvaluationOptions eo;
  eo.context = mc.context;
  eo.horizon = mc.horizon;
  eo.request.mode = ec.decode_mode();
  eo.request.temperature = ec.temperature;
  eo.request.seed = ec.seed;
  eo.oracle_codes = ec.oracle_codes;
  eo.corruption_seed = derive_seed(ec.seed, 1);
  return eo;
}

/// Outputs of one evaluated sequence.
template <class T>
struct SequencePrediction {
  std::vector<Tensor<T>> context;  // as fed to the model
  std::vector<Tensor<T>> truth;
  std::vector<Tensor<T>> predicted;
  std::vector<FrameMetrics> metrics;
};

template <class T>
SequencePrediction<T> evaluate_sequence(const Model<T>& m, const VideoSequence<T>& seq, const EvaluationOptions& opt,
                                        std::uint64_t index = 0) {
  if (seq.length() < opt.context + opt.horizon)
    throw DataError("sequence " + seq.name + " is shorter than context + horizon");
  SequencePrediction<T> out;
  out.context.assign(seq.frames.begin(), seq.frames.begin() + opt.context);
  out.truth.assign(seq.frames.begin() + opt.context, seq.frames.begin() + opt.context + opt.horizon);
  if (opt.corruption) out.context = corrupt(out.context, *opt.corruption, derive_seed(opt.corruption_seed, index));
  PredictionRequest req = opt.request;
  req.horizon = opt.horizon;
  req.seed = derive_seed(opt.request.seed, index);
  out.predicted = opt.oracle_codes ? decode_codes(m, encode_sequence(m, out.truth)) : predict_frames(m, out.context, req);
  for (int s = 0; s < opt.horizon; ++s) out.metrics.push_back(compute_metrics(out.predicted[s], out.truth[s]));
  return out;
}

template <class T>
MetricReport evaluate_model(const Model<T>& m, const Dataset<T>& data, const EvaluationOptions& opt) {
  if (data.empty()) throw DataError("evaluation dataset is empty");
  MetricReport r;
  for (std::size_t k = 0; k < data.size(); ++k) r.add(data[k].name, evaluate_sequence(m, data[k], opt, k).metrics);
  r.finish();
  return r;
}

/// Per-frame means of the HR-VQVAE reconstruction metrics over every frame.
template <class T>
FrameMetrics reconstruction_metrics(const Model<T>& m, const Dataset<T>& data) {
  FrameMetrics acc;
  std::size_t count = 0;
  for (const auto& s : data)
    for (const auto& f : s.frames) {
      const auto fm = compute_metrics(reconstruct(m, f), f);
      acc.mse += fm.mse;
      acc.mae += fm.mae;
      acc.ssim += fm.ssim;
      acc.psnr += fm.psnr;
      ++count;
    }
  if (count == 0) throw DataError("no frames to reconstruct");
  acc.mse /= count;
  acc.mae /= count;
  acc.ssim /= count;
  acc.psnr /= count;
  return acc;
}


struct DataSplit {
  Dataset<float> train;
  Dataset<float> test;
  std::vector<std::string> warnings;
};

/// Training and held-out sequences sized for `mc`. Synthetic test scenes use
/// a seed stream separate from the training scenes.
inline DataSplit load_data(const DataConfig& dc, const ModelConfig& mc) {
  dc.validate();
  DataSplit out;
  if (dc.source == "synthetic") {
    SceneSpec sc = dc.scene;
    sc.height = mc.height;
    sc.width = mc.width;
    sc.channels = mc.channels;
    sc.length = dc.train_length;
    out.train = synthetic_dataset(sc, dc.train_count, "train");
    sc.length = dc.test_length;
    sc.seed = derive_seed(dc.scene.seed, 0x7e57);
    out.test = synthetic_dataset(sc, dc.test_count, "test");
    return out;
  }
  const LoadOptions opt{mc.height, mc.width, mc.channels, mc.context + mc.horizon};
  auto add = [&](const std::string& root, Dataset<float>& into) {
    auto r = load_sequences(root, opt);
    into = std::move(r.sequences);
    for (auto& w : r.warnings) out.warnings.push_back(std::move(w));
  };
  add(dc.root, out.train);
  if (!dc.test_root.empty()) add(dc.test_root, out.test);
  return out;
}

}  // namespace shrvq
