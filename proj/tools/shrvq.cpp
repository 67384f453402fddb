// Command-line front end: training, prediction, evaluation, corruption
// studies and figure export, all driven by a flat key=value config file.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "shrvq/shrvq.hpp"

namespace fs = std::filesystem;
using namespace shrvq;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string command;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

/// Files written by one command. Unless commit() runs, the destructor
/// deletes every file and directory this object created.
class Outputs {
 public:
  explicit Outputs(const fs::path& root) : root_(root) { make_dirs(root_); }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;

  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (auto it = files_.rbegin(); it != files_.rend(); ++it) fs::remove(root_ / *it, ec);
    for (auto it = dirs_.rbegin(); it != dirs_.rend(); ++it) fs::remove(*it, ec);
  }

  /// Registers `rel` and returns its absolute path, creating parent dirs.
  std::string path(const std::string& rel) {
    const fs::path p = root_ / rel;
    make_dirs(p.parent_path());
    files_.push_back(rel);
    return p.string();
  }

  void write(const std::string& rel, std::string_view bytes) { write_file(path(rel), bytes); }

  /// Writes manifest.txt: a header, then "<fnv1a> <bytes> <path>" per artifact.
  void commit(const std::string& command, const std::string& config_text) {
    Fnv1a cfg;
    cfg.update(config_text);
    std::string m = "command=" + command + "\nconfig=" + cfg.hex() + "\n";
    for (const auto& rel : files_) {
      const fs::path p = root_ / rel;
      m += file_checksum(p.string()) + " " + std::to_string(fs::file_size(p)) + " " + rel + "\n";
    }
    write_file((root_ / "manifest.txt").string(), m);
    committed_ = true;
  }

 private:
  void make_dirs(const fs::path& dir) {
    std::vector<fs::path> missing;
    for (fs::path p = dir; !p.empty() && !fs::exists(p); p = p.parent_path()) missing.push_back(p);
    for (auto it = missing.rbegin(); it != missing.rend(); ++it) {
      fs::create_directory(*it);
      dirs_.push_back(*it);
    }
  }

  fs::path root_;
  std::vector<std::string> files_;
  std::vector<fs::path> dirs_;
  bool committed_ = false;
};

bool needs_checkpoint(const std::string& cmd) {
  return cmd != "train-hrvqvae" && cmd != "train" && cmd != "generate-data";
}

/// Parses the config, applies --set and --seed, and validates every path the
/// command will read. Any failure here is a config error.
RunConfig load_config(const Options& opt) {
  try {
    KeyValues kv;
    if (!opt.config.empty()) {
      if (!fs::is_regular_file(opt.config)) throw ConfigError("config file " + opt.config + " does not exist");
      kv = KeyValues::parse(read_file(opt.config), opt.config);
    }
    for (const auto& o : opt.overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + o + "'");
      kv.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
    if (opt.seed) kv.set("seed", *opt.seed);
    RunConfig rc = RunConfig::from_kv(kv);
    if (needs_checkpoint(opt.command)) {
      if (rc.paths.checkpoint.empty()) throw ConfigError(opt.command + " needs 'checkpoint' in the config");
      if (!fs::is_regular_file(rc.paths.checkpoint))
        throw ConfigError("checkpoint " + rc.paths.checkpoint + " does not exist");
    }
    if (rc.data.source == "directory") {
      if (!fs::is_directory(rc.data.root)) throw ConfigError("data.root " + rc.data.root + " is not a directory");
      if (!rc.data.test_root.empty() && !fs::is_directory(rc.data.test_root))
        throw ConfigError("data.test_root " + rc.data.test_root + " is not a directory");
    }
    if (opt.command == "generate-data" && rc.data.source != "synthetic")
      throw ConfigError("generate-data needs data.source=synthetic");
    return rc;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

/// stem_0007 followed by `suffix`.
std::string seq_file(const std::string& stem, int t, const std::string& suffix) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%04d", t);
  return stem + buf + suffix;
}

/// PNG-ready copy: two-channel frames gain an empty third channel.
Tensor<float> displayable(const Tensor<float>& f) {
  const int c = f.dim(2);
  if (c == 1 || c == 3) return f;
  Tensor<float> out({f.dim(0), f.dim(1), 3});
  for (int y = 0; y < f.dim(0); ++y)
    for (int x = 0; x < f.dim(1); ++x)
      for (int ch = 0; ch < std::min(c, 3); ++ch) out(y, x, ch) = f(y, x, ch);
  return out;
}

std::vector<Tensor<float>> displayable(const std::vector<Tensor<float>>& fs) {
  std::vector<Tensor<float>> out;
  for (const auto& f : fs) out.push_back(displayable(f));
  return out;
}

/// Rows of input, ground truth and prediction, padded to a common width.
Tensor<float> strip(const SequencePrediction<float>& p) {
  std::vector<Tensor<float>> rows{hstack(displayable(p.context)), hstack(displayable(p.truth)),
                                  hstack(displayable(p.predicted))};
  int w = 0;
  for (const auto& r : rows) w = std::max(w, r.dim(1));
  for (auto& r : rows) {
    if (r.dim(1) == w) continue;
    std::vector<Tensor<float>> parts{r, Tensor<float>({r.dim(0), w - r.dim(1), r.dim(2)}, 1.0f)};
    r = hstack(parts, 0);
  }
  return vstack(rows, 4);
}

/// Blue-to-red colour ramp of a single-channel map in [0,1].
Tensor<float> colourize(const Tensor<float>& heat) {
  Tensor<float> out({heat.dim(0), heat.dim(1), 3});
  auto ramp = [](double v) { return static_cast<float>(std::clamp(1.5 - std::abs(v), 0.0, 1.0)); };
  for (int y = 0; y < heat.dim(0); ++y)
    for (int x = 0; x < heat.dim(1); ++x) {
      const double v = 4.0 * heat(y, x, 0);
      out(y, x, 0) = ramp(v - 3);
      out(y, x, 1) = ramp(v - 2);
      out(y, x, 2) = ramp(v - 1);
    }
  return out;
}

/// Code sequences of `data` under the model's frozen encoder. With
/// SHRVQ_CACHE set, results are stored there keyed by encoder, tree and data.
std::vector<CodeSequence> cached_codes(const Model<float>& m, const Dataset<float>& data) {
  const char* dir = std::getenv("SHRVQ_CACHE");
  if (!dir || !*dir) return encode_dataset(m, data);
  Fnv1a key;
  key.update(m.config.autoencoder().descriptor());
  key.update(m.ae.encoder_checksum());
  key.update(m.tree.checksum());
  for (const auto& s : data) {
    key.update(s.name);
    for (const auto& f : s.frames) key.update(f.data(), f.size() * sizeof(float));
  }
  const fs::path file = fs::path(dir) / ("codes_" + key.hex() + ".bin");
  if (fs::is_regular_file(file)) {
    try {
      const std::string bytes = read_file(file.string());
      ByteReader r(bytes);
      std::vector<CodeSequence> out(r.u32());
      for (auto& c : out) c = decode_code_sequence(r.str());
      if (r.at_end() && out.size() == data.size()) return out;
    } catch (const Error&) {
    }
    std::cerr << "shrvq: ignoring unreadable cache file " << file.string() << "\n";
  }
  auto codes = encode_dataset(m, data);
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(codes.size()));
  for (const auto& c : codes) w.str(encode_code_sequence(c));
  fs::create_directories(dir);
  const fs::path tmp = file.string() + ".tmp";
  write_file(tmp.string(), w.take());
  fs::rename(tmp, file);
  return codes;
}

EvaluationOptions eval_options(const Model<float>& m, const RunConfig& rc) {
  return evaluation_options(m.config, rc.eval);
}

const Dataset<float>& require_test(const DataSplit& d) {
  if (d.test.empty()) throw DataError("no held-out sequences: set data.test_count or data.test_root");
  return d.test;
}

void write_report(Outputs& out, const std::string& stem, const MetricReport& r) {
  out.write(stem + ".csv", r.to_csv());
  out.write(stem + ".kv", r.to_kv().to_text());
}

void save_training(Outputs& out, Model<float>& m, const RunConfig& rc, const TrainingLog& log) {
  out.write("model.ckpt", encode_checkpoint(m));
  out.write("train.log", log.text());
  out.write("config.kv", rc.to_kv().to_text());
}

int run(const Options& opt) {
  const RunConfig rc = load_config(opt);
  const std::string config_text = rc.to_kv().to_text();
  std::optional<Model<float>> loaded;
  if (needs_checkpoint(opt.command)) loaded = load_checkpoint<float>(rc.paths.checkpoint);
  const ModelConfig& mc = loaded ? loaded->config : rc.model;
  const DataSplit data = load_data(rc.data, mc);
  for (const auto& w : data.warnings) std::cerr << "shrvq: warning: " << w << "\n";

  Outputs out(opt.out);
  TrainingLog log;
  log.sink = [](const std::string& line) { std::cout << line << std::endl; };
  const std::string& cmd = opt.command;

  if (cmd == "generate-data") {
    for (const auto* part : {"train", "test"}) {
      const auto& set = std::string(part) == "train" ? data.train : data.test;
      for (const auto& s : set)
        for (int t = 0; t < s.length(); ++t) write_png(out.path(std::string(part) + "/" + s.name + "/" + seq_file("frame", t, ".png")), s.frames[t]);
    }
  } else if (cmd == "train-hrvqvae" || cmd == "train") {
    Model<float> m = build_model<float>(rc.model);
    check_training_data(m, data.train);
    train_hrvqvae(m, data.train, rc.train, &log);
    if (cmd == "train") {
      train_astpm_on_codes(m, cached_codes(m, data.train), rc.train, &log);
      m.meta.set("train.mode", "disjoint");
      if (rc.train.mode == "joint") train_joint(m, data.train, cached_codes(m, data.train), rc.train, &log);
    }
    m.meta.set("train.seed", rc.train.seed);
    save_training(out, m, rc, log);
  } else if (cmd == "train-astpm") {
    Model<float>& m = *loaded;
    check_training_data(m, data.train);
    train_astpm_on_codes(m, cached_codes(m, data.train), rc.train, &log);
    m.meta.set("train.mode", "disjoint");
    save_training(out, m, rc, log);
  } else if (cmd == "train-joint") {
    Model<float>& m = *loaded;
    train_joint(m, data.train, cached_codes(m, data.train), rc.train, &log);
    save_training(out, m, rc, log);
  } else if (cmd == "predict") {
    const Model<float>& m = *loaded;
    const auto& test = require_test(data);
    const auto eo = eval_options(m, rc);
    MetricReport all;
    for (std::size_t k = 0; k < test.size(); ++k) {
      const auto p = evaluate_sequence(m, test[k], eo, k);
      const std::string dir = "predictions/" + test[k].name + "/";
      for (int s = 0; s < eo.horizon; ++s)
        write_png(out.path(dir + seq_file("frame", eo.context + s, ".png")), displayable(p.predicted[s]));
      auto gif = displayable(p.context);
      for (const auto& f : displayable(p.predicted)) gif.push_back(f);
      write_gif(out.path(dir + "prediction.gif"), gif);
      MetricReport one;
      one.add(test[k].name, p.metrics);
      one.finish();
      out.write(dir + "metrics.csv", one.to_csv());
      write_png(out.path("figures/" + test[k].name + "_strip.png"), strip(p));
      all.add(test[k].name, p.metrics);
    }
    all.finish();
    write_report(out, "report", all);
  } else if (cmd == "evaluate") {
    const Model<float>& m = *loaded;
    const auto report = evaluate_model(m, require_test(data), eval_options(m, rc));
    write_report(out, "report", report);
    std::cout << "psnr=" << format_double(report.mean.psnr) << " ssim=" << format_double(report.mean.ssim) << "\n";
  } else if (cmd == "corrupt-eval") {
    const Model<float>& m = *loaded;
    const auto& test = require_test(data);
    auto eo = eval_options(m, rc);
    const auto clean = evaluate_model(m, test, eo);
    write_report(out, "reports/clean", clean);
    std::string summary = "condition,psnr,ssim,mse,mae,psnr_drop\n";
    auto row = [&](const std::string& name, const MetricReport& r) {
      summary += name + "," + format_double(r.mean.psnr) + "," + format_double(r.mean.ssim) + "," +
                 format_double(r.mean.mse) + "," + format_double(r.mean.mae) + "," +
                 format_double(clean.mean.psnr - r.mean.psnr) + "\n";
    };
    row("clean", clean);
    for (const auto& c : rc.eval.corruptions) {
      eo.corruption = c;
      const auto r = evaluate_model(m, test, eo);
      const std::string name = EvalConfig::describe(c);
      write_report(out, "reports/" + name, r);
      row(name, r);
    }
    out.write("summary.csv", summary);
  } else if (cmd == "export-heatmaps") {
    const Model<float>& m = *loaded;
    for (const auto& s : require_test(data))
      for (int t = 0; t < s.length(); ++t) {
        const auto layers = layer_reconstructions(m.ae, quantize_frame(m, s.frames[t]));
        for (std::size_t i = 0; i < layers.size(); ++i)
          write_png(out.path("heatmaps/" + s.name + "/" + seq_file("frame", t, "_layer" + std::to_string(i + 1) + ".png")),
                    colourize(layers[i].heatmap));
      }
  }
  out.commit(cmd, config_text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical residual VQ-VAE video prediction"};
  app.require_subcommand(1);
  Options opt;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train-hrvqvae", "train the autoencoder and codebook tree"},
      {"train-astpm", "train the code predictors of a checkpoint"},
      {"train-joint", "fine-tune decoder and predictors jointly"},
      {"train", "run every training phase selected by train.mode"},
      {"predict", "write predicted frames, GIFs and strips for held-out sequences"},
      {"evaluate", "write the metric report for held-out sequences"},
      {"corrupt-eval", "evaluate under each configured input corruption"},
      {"export-heatmaps", "write one heatmap per layer and frame"},
      {"generate-data", "write the synthetic dataset as PNG sequences"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "key=value config file");
    sub->add_option("--seed", opt.seed, "master seed, overrides the config");
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--set", opt.overrides, "extra key=value entries");
    sub->callback([&opt, name = name] { opt.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    return run(opt);
  } catch (const ConfigError& e) {
    std::cerr << "shrvq: config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "shrvq: error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
