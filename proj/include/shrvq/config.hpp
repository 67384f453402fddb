#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "shrvq/ast_pm.hpp"
#include "shrvq/autoencoder.hpp"
#include "shrvq/datakit.hpp"
#include "shrvq/kv.hpp"

namespace shrvq {

/// Architecture of the whole predictor: autoencoder, codebook tree and one
/// AST-PM per tree layer. Components derive their seeds from `seed`.
struct ModelConfig {
  int channels = 1;
  int height = 64;
  int width = 64;
  int stages = 2;
  int ae_width = 32;
  int res_blocks = 2;
  int res_hidden = 32;
  int latent_dim = 8;
  int layers = 3;  // n
  int branch = 8;  // M
  int astpm_channels = 32;
  int astpm_heads = 2;
  int astpm_head_layers = 2;
  int astpm_context_blocks = 1;
  int astpm_window = 4;
  MaskMode mask_mode = MaskMode::kFullHistory;
  bool condition_on_parent = false;
  int context = 4;  // T
  int horizon = 4;  // S
  int max_horizon = 64;
  std::uint64_t seed = 0;

  AutoencoderConfig autoencoder() const {
    AutoencoderConfig c;
    c.in_channels = channels;
    c.in_height = height;
    c.in_width = width;
    c.stages = stages;
    c.width = ae_width;
    c.res_blocks = res_blocks;
    c.res_hidden = res_hidden;
    c.latent_dim = latent_dim;
    c.seed = derive_seed(seed, 1);
    return c;
  }

  AstPmConfig astpm(int layer) const {
    AstPmConfig c;
    c.branch = branch;
    c.height = height >> stages;
    c.width = width >> stages;
    c.window = astpm_window;
    c.channels = astpm_channels;
    c.heads = astpm_heads;
    c.head_layers = astpm_head_layers;
    c.context_blocks = astpm_context_blocks;
    c.mask_mode = mask_mode;
    std::uint64_t parents = 0;
    if (condition_on_parent) {
      parents = 1;
      for (int i = 0; i < layer; ++i) parents *= static_cast<std::uint64_t>(branch);
    }
    c.parent_codebooks = parents;
    c.seed = derive_seed(seed, 100 + static_cast<std::uint64_t>(layer));
    return c;
  }

  std::uint64_t tree_seed() const { return derive_seed(seed, 2); }

  void validate() const {
    autoencoder().validate();
    if (layers < 1) throw ParameterError("model.layers must be at least 1");
    if (branch < 2) throw ParameterError("model.branch must be at least 2");
    for (int i = 0; i < layers; ++i) astpm(i).validate();
    if (context < 1) throw ParameterError("model.context must be at least 1");
    if (horizon < 1) throw ParameterError("model.horizon must be at least 1");
    if (max_horizon < horizon) throw ParameterError("model.max_horizon must be >= model.horizon");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("channels", channels);
    kv.set("height", height);
    kv.set("width", width);
    kv.set("stages", stages);
    kv.set("ae_width", ae_width);
    kv.set("res_blocks", res_blocks);
    kv.set("res_hidden", res_hidden);
    kv.set("latent_dim", latent_dim);
    kv.set("layers", layers);
    kv.set("branch", branch);
    kv.set("astpm_channels", astpm_channels);
    kv.set("astpm_heads", astpm_heads);
    kv.set("astpm_head_layers", astpm_head_layers);
    kv.set("astpm_context_blocks", astpm_context_blocks);
    kv.set("astpm_window", astpm_window);
    kv.set("mask_mode", to_string(mask_mode));
    kv.set("condition_on_parent", condition_on_parent);
    kv.set("context", context);
    kv.set("horizon", horizon);
    kv.set("max_horizon", max_horizon);
    kv.set("seed", seed);
    return kv;
  }

  static ModelConfig from_kv(const KeyValues& kv) {
    ModelConfig c;
    auto geti = [&](const char* k, int& v) { v = static_cast<int>(kv.get_int(k, v)); };
    geti("channels", c.channels);
    geti("height", c.height);
    geti("width", c.width);
    geti("stages", c.stages);
    geti("ae_width", c.ae_width);
    geti("res_blocks", c.res_blocks);
    geti("res_hidden", c.res_hidden);
    geti("latent_dim", c.latent_dim);
    geti("layers", c.layers);
    geti("branch", c.branch);
    geti("astpm_channels", c.astpm_channels);
    geti("astpm_heads", c.astpm_heads);
    geti("astpm_head_layers", c.astpm_head_layers);
    geti("astpm_context_blocks", c.astpm_context_blocks);
    geti("astpm_window", c.astpm_window);
    if (kv.has("mask_mode")) {
      try {
        c.mask_mode = parse_mask_mode(kv.raw("mask_mode"));
      } catch (const ParameterError& e) {
        throw ConfigError(e.what());
      }
    }
    c.condition_on_parent = kv.get_bool("condition_on_parent", c.condition_on_parent);
    geti("context", c.context);
    geti("horizon", c.horizon);
    geti("max_horizon", c.max_horizon);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {
        "channels",       "height",         "width",          "stages",
        "ae_width",       "res_blocks",     "res_hidden",     "latent_dim",
        "layers",         "branch",         "astpm_channels", "astpm_heads",
        "astpm_head_layers", "astpm_context_blocks", "astpm_window", "mask_mode",
        "condition_on_parent", "context",  "horizon",        "max_horizon",
        "seed"};
    return k;
  }
};

struct TrainingConfig {
  double lr = 3e-4;
  double astpm_lr = 3e-4;
  std::vector<double> betas;  // beta_0..beta_n; empty means 0.25 everywhere
  double lambda = 0.11;
  int hrvqvae_epochs = 10;
  int astpm_epochs = 10;
  int joint_epochs = 2;
  int batch_size = 8;
  // Joint phase also reconstructs the context frames from their encoded codes.
  bool joint_context_recon = true;
  bool init_from_data = true;
  bool reseed = true;
  std::string mode = "disjoint";  // disjoint or joint
  std::uint64_t seed = 0;

  std::vector<double> beta_values(int layers) const {
    if (betas.empty()) return std::vector<double>(static_cast<std::size_t>(layers) + 1, 0.25);
    if (static_cast<int>(betas.size()) != layers + 1)
      throw ParameterError("train.betas needs " + std::to_string(layers + 1) + " values");
    return betas;
  }

  void validate() const {
    if (!(lr > 0) || !(astpm_lr > 0)) throw ParameterError("learning rates must be positive");
    if (!(lambda >= 0)) throw ParameterError("lambda must be non-negative");
    if (hrvqvae_epochs < 0 || astpm_epochs < 0 || joint_epochs < 0) throw ParameterError("epoch counts must be >= 0");
    if (batch_size < 1) throw ParameterError("batch size must be positive");
    if (mode != "disjoint" && mode != "joint") throw ParameterError("train.mode must be disjoint or joint");
    for (double b : betas)
      if (!(b >= 0)) throw ParameterError("betas must be non-negative");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("lr", lr);
    kv.set("astpm_lr", astpm_lr);
    std::string b;
    for (std::size_t i = 0; i < betas.size(); ++i) b += (i ? "," : "") + format_double(betas[i]);
    if (!betas.empty()) kv.set("betas", b);
    kv.set("lambda", lambda);
    kv.set("hrvqvae_epochs", hrvqvae_epochs);
    kv.set("astpm_epochs", astpm_epochs);
    kv.set("joint_epochs", joint_epochs);
    kv.set("batch_size", batch_size);
    kv.set("joint_context_recon", joint_context_recon);
    kv.set("init_from_data", init_from_data);
    kv.set("reseed", reseed);
    kv.set("mode", mode);
    kv.set("seed", seed);
    return kv;
  }

  static TrainingConfig from_kv(const KeyValues& kv) {
    TrainingConfig c;
    c.lr = kv.get_double("lr", c.lr);
    c.astpm_lr = kv.get_double("astpm_lr", kv.has("lr") ? c.lr : c.astpm_lr);
    if (kv.has("betas")) c.betas = kv.get_doubles("betas");
    c.lambda = kv.get_double("lambda", c.lambda);
    c.hrvqvae_epochs = static_cast<int>(kv.get_int("hrvqvae_epochs", c.hrvqvae_epochs));
    c.astpm_epochs = static_cast<int>(kv.get_int("astpm_epochs", c.astpm_epochs));
    c.joint_epochs = static_cast<int>(kv.get_int("joint_epochs", c.joint_epochs));
    c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
    c.joint_context_recon = kv.get_bool("joint_context_recon", c.joint_context_recon);
    c.init_from_data = kv.get_bool("init_from_data", c.init_from_data);
    c.reseed = kv.get_bool("reseed", c.reseed);
    c.mode = kv.get("mode", c.mode);
    c.seed = kv.get_uint("seed", c.seed);
    return c;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {"lr",         "astpm_lr",     "betas",          "lambda",
                                            "hrvqvae_epochs", "astpm_epochs", "joint_epochs", "batch_size",
                                            "init_from_data", "reseed",   "mode",           "seed",
                                            "joint_context_recon"};
    return k;
  }
};

/// Where sequences come from. Synthetic data uses the scene.* keys; the
/// directory source reads root (training) and test_root (held out).
struct DataConfig {
  std::string source = "synthetic";
  std::string root;
  std::string test_root;
  int train_count = 20;
  int test_count = 5;
  int train_length = 16;
  int test_length = 8;
  SceneSpec scene;

  void validate() const {
    if (source != "synthetic" && source != "directory") throw ParameterError("data.source must be synthetic or directory");
    if (source == "directory" && root.empty()) throw ParameterError("data.root is required for directory data");
    if (train_count < 0 || test_count < 0 || train_length < 1 || test_length < 1)
      throw ParameterError("data counts and lengths must be positive");
    if (source == "synthetic") {
      SceneSpec s = scene;
      s.validate();
    }
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("source", source);
    if (!root.empty()) kv.set("root", root);
    if (!test_root.empty()) kv.set("test_root", test_root);
    kv.set("train_count", train_count);
    kv.set("test_count", test_count);
    kv.set("train_length", train_length);
    kv.set("test_length", test_length);
    kv.merge(scene.to_kv(), "scene.");
    return kv;
  }

  static DataConfig from_kv(const KeyValues& kv) {
    DataConfig c;
    c.source = kv.get("source", c.source);
    c.root = kv.get("root", c.root);
    c.test_root = kv.get("test_root", c.test_root);
    c.train_count = static_cast<int>(kv.get_int("train_count", c.train_count));
    c.test_count = static_cast<int>(kv.get_int("test_count", c.test_count));
    c.train_length = static_cast<int>(kv.get_int("train_length", c.train_length));
    c.test_length = static_cast<int>(kv.get_int("test_length", c.test_length));
    c.scene = SceneSpec::from_kv(kv.section("scene."));
    return c;
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k = {"source",      "root",       "test_root",   "train_count",
                                            "test_count",  "train_length", "test_length", "scene.*"};
    return k;
  }
};

/// Evaluation and corruption-study settings.
struct EvalConfig {
  std::string decode = "greedy";
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::vector<CorruptionSpec> corruptions;  // corrupt-eval conditions
  bool oracle_codes = false;

  DecodeMode decode_mode() const { return decode == "sample" ? DecodeMode::kSample : DecodeMode::kGreedy; }

  void validate() const {
    if (decode != "greedy" && decode != "sample") throw ParameterError("eval.decode must be greedy or sample");
    if (decode == "sample" && !(temperature > 0)) throw ParameterError("sampling temperature must be positive");
    for (const auto& c : corruptions) c.validate();
  }

  /// The default study: both blur strengths, fragment blur, two SNRs and
  /// two compression levels.
  static std::vector<CorruptionSpec> default_corruptions() {
    std::vector<CorruptionSpec> out;
    for (double s : {1.0, 2.0}) {
      CorruptionSpec c;
      c.kind = CorruptionKind::kGaussianBlur;
      c.sigma = s;
      out.push_back(c);
    }
    CorruptionSpec f;
    f.kind = CorruptionKind::kFragmentBlur;
    f.sigma = 2.0;
    out.push_back(f);
    for (double snr : {10.0, 20.0}) {
      CorruptionSpec c;
      c.kind = CorruptionKind::kAdditiveNoise;
      c.snr_db = snr;
      out.push_back(c);
    }
    for (int q : {CorruptionSpec::kHighQuality, CorruptionSpec::kLowQuality}) {
      CorruptionSpec c;
      c.kind = CorruptionKind::kCompression;
      c.quality = q;
      out.push_back(c);
    }
    return out;
  }

  static std::string describe(const CorruptionSpec& c) {
    switch (c.kind) {
      case CorruptionKind::kNone: return "clean";
      case CorruptionKind::kGaussianBlur: return "gaussian_blur_sigma" + format_double(c.sigma);
      case CorruptionKind::kFragmentBlur:
        return "fragment_blur_" + std::to_string(c.fragments) + "x" + std::to_string(c.fragment_size) + "_sigma" +
               format_double(c.sigma);
      case CorruptionKind::kAdditiveNoise: return "noise_snr" + format_double(c.snr_db);
      case CorruptionKind::kCompression: return "compression_q" + std::to_string(c.quality);
    }
    return "clean";
  }

  static int parse_quality(const std::string& s) {
    if (s == "high") return CorruptionSpec::kHighQuality;
    if (s == "low") return CorruptionSpec::kLowQuality;
    if (s == "max") return 100;
    KeyValues one;
    one.set("q", s);
    return static_cast<int>(one.get_int("q", 100));
  }

  /// Conditions are listed as corruption.<k>.kind plus optional
  /// corruption.<k>.{sigma,fragments,fragment_size,snr_db,quality}.
  static EvalConfig from_kv(const KeyValues& kv) {
    EvalConfig c;
    c.decode = kv.get("decode", c.decode);
    c.temperature = kv.get_double("temperature", c.temperature);
    c.seed = kv.get_uint("seed", c.seed);
    c.oracle_codes = kv.get_bool("oracle_codes", c.oracle_codes);
    for (int k = 0; kv.has("corruption." + std::to_string(k) + ".kind"); ++k) {
      const auto sec = kv.section("corruption." + std::to_string(k) + ".");
      const auto bad = sec.unknown_keys({"kind", "sigma", "fragments", "fragment_size", "snr_db", "quality"});
      if (!bad.empty()) throw ConfigError("unknown key 'eval.corruption." + std::to_string(k) + "." + bad[0] + "'");
      CorruptionSpec s;
      s.kind = parse_corruption_kind(sec.raw("kind"));
      s.sigma = sec.get_double("sigma", s.sigma);
      s.fragments = static_cast<int>(sec.get_int("fragments", s.fragments));
      s.fragment_size = static_cast<int>(sec.get_int("fragment_size", s.fragment_size));
      s.snr_db = sec.get_double("snr_db", s.snr_db);
      if (sec.has("quality")) s.quality = parse_quality(sec.raw("quality"));
      c.corruptions.push_back(s);
    }
    if (c.corruptions.empty()) c.corruptions = default_corruptions();
    return c;
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("decode", decode);
    kv.set("temperature", temperature);
    kv.set("seed", seed);
    kv.set("oracle_codes", oracle_codes);
    for (std::size_t k = 0; k < corruptions.size(); ++k) {
      const std::string p = "corruption." + std::to_string(k) + ".";
      const auto& s = corruptions[k];
      kv.set(p + "kind", to_string(s.kind));
      kv.set(p + "sigma", s.sigma);
      kv.set(p + "fragments", s.fragments);
      kv.set(p + "fragment_size", s.fragment_size);
      kv.set(p + "snr_db", s.snr_db);
      kv.set(p + "quality", s.quality);
    }
    return kv;
  }
};

/// Paths used by commands that read or write a checkpoint.
struct PathConfig {
  std::string checkpoint;  // input checkpoint for commands that need one
};

/// Complete configuration file: `seed`, `checkpoint`, and the model.,
/// train., data. and eval. sections. Unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  PathConfig paths;
  ModelConfig model;
  TrainingConfig train;
  DataConfig data;
  EvalConfig eval;

  /// Spreads the master seed over every component that has none of its own.
  void apply_seed(std::uint64_t s) {
    seed = s;
    model.seed = derive_seed(s, 11);
    train.seed = derive_seed(s, 12);
    data.scene.seed = derive_seed(s, 13);
    eval.seed = derive_seed(s, 14);
  }

  static RunConfig from_kv(const KeyValues& kv) {
    std::vector<std::string> bad;
    for (const auto& [k, v] : kv.entries()) {
      auto in = [&](const std::string& prefix, const std::set<std::string>& known) {
        if (k.rfind(prefix, 0) != 0) return false;
        KeyValues one;
        one.set(k.substr(prefix.size()), v);
        if (!one.unknown_keys(known).empty()) bad.push_back(k);
        return true;
      };
      if (k == "seed" || k == "checkpoint") continue;
      if (in("model.", ModelConfig::keys()) || in("train.", TrainingConfig::keys()) ||
          in("data.", DataConfig::keys()))
        continue;
      if (k.rfind("eval.", 0) == 0) {
        const std::string rest = k.substr(5);
        if (!(rest == "decode" || rest == "temperature" || rest == "seed" || rest == "oracle_codes" ||
              rest.rfind("corruption.", 0) == 0))
          bad.push_back(k);
        continue;
      }
      bad.push_back(k);
    }
    if (!bad.empty()) throw ConfigError("unknown config key '" + bad.front() + "'");
    RunConfig rc;
    rc.apply_seed(kv.get_uint("seed", 0));
    const auto model_kv = kv.section("model.");
    const auto train_kv = kv.section("train.");
    const auto data_kv = kv.section("data.");
    const auto eval_kv = kv.section("eval.");
    const auto seeded = rc;
    rc.model = ModelConfig::from_kv(model_kv);
    if (!model_kv.has("seed")) rc.model.seed = seeded.model.seed;
    rc.train = TrainingConfig::from_kv(train_kv);
    if (!train_kv.has("seed")) rc.train.seed = seeded.train.seed;
    rc.data = DataConfig::from_kv(data_kv);
    if (!data_kv.has("scene.seed")) rc.data.scene.seed = seeded.data.scene.seed;
    rc.eval = EvalConfig::from_kv(eval_kv);
    if (!eval_kv.has("seed")) rc.eval.seed = seeded.eval.seed;
    rc.paths.checkpoint = kv.get("checkpoint", "");
    try {
      rc.model.validate();
      rc.train.validate();
      rc.data.validate();
      rc.eval.validate();
      rc.train.beta_values(rc.model.layers);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
    return rc;
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("seed", seed);
    if (!paths.checkpoint.empty()) kv.set("checkpoint", paths.checkpoint);
    kv.merge(model.to_kv(), "model.");
    kv.merge(train.to_kv(), "train.");
    kv.merge(data.to_kv(), "data.");
    kv.merge(eval.to_kv(), "eval.");
    return kv;
  }
};

}  // namespace shrvq
