#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "shrvq/image_io.hpp"
#include "shrvq/kv.hpp"
#include "shrvq/random.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// Frames of one video, each H x W x C in [0,1].
template <class T>
struct VideoSequence {
  std::string name;
  std::vector<Tensor<T>> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

template <class T>
using Dataset = std::vector<VideoSequence<T>>;

/// All windows of `length` consecutive frames, stepping by `stride`.
template <class T>
Dataset<T> sliding_windows(const Dataset<T>& data, int length, int stride = 1) {
  if (length < 1 || stride < 1) throw ParameterError("window length and stride must be positive");
  Dataset<T> out;
  for (const auto& s : data)
    for (int a = 0; a + length <= s.length(); a += stride) {
      VideoSequence<T> w;
      w.name = s.name + "@" + std::to_string(a);
      w.frames.assign(s.frames.begin() + a, s.frames.begin() + a + length);
      out.push_back(std::move(w));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scenes

enum class ShapeKind { kDisc, kSquare };

inline const char* to_string(ShapeKind k) { return k == ShapeKind::kDisc ? "disc" : "square"; }

inline ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "disc") return ShapeKind::kDisc;
  if (s == "square") return ShapeKind::kSquare;
  throw ConfigError("unknown shape kind '" + s + "'");
}

/// One moving shape. Positions are pixel-centre coordinates; `radius` is the
/// disc radius or the square half-side.
struct MovingShape {
  ShapeKind kind = ShapeKind::kDisc;
  double radius = 5.0;
  double y = 0.0, x = 0.0;
  double vy = 0.0, vx = 0.0;
  std::array<double, 3> colour = {1.0, 1.0, 1.0};
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int channels = 1;
  int length = 16;
  int num_shapes = 2;
  std::string kind = "mixed";  // disc, square or mixed
  double radius_min = 4.0;
  double radius_max = 7.0;
  double speed_min = 0.5;  // pixels per frame
  double speed_max = 2.0;
  double intensity_min = 0.5;
  double intensity_max = 1.0;
  std::string boundary = "reflect";
  std::uint64_t seed = 0;
  std::vector<MovingShape> shapes;  // explicit shapes override the random draw

  void validate() const {
    if (height < 1 || width < 1) throw ParameterError("canvas must be non-empty");
    if (channels != 1 && channels != 3) throw ParameterError("scenes have 1 or 3 channels");
    if (length < 1) throw ParameterError("scene length must be positive");
    if (boundary != "reflect") throw ParameterError("only the reflect boundary rule is supported");
    if (shapes.empty()) {
      if (num_shapes < 0) throw ParameterError("shape count must be non-negative");
      if (!(radius_min > 0) || radius_max < radius_min) throw ParameterError("bad radius range");
      if (speed_min < 0 || speed_max < speed_min) throw ParameterError("bad speed range");
      if (intensity_min < 0 || intensity_max > 1 || intensity_max < intensity_min)
        throw ParameterError("bad intensity range");
      if (kind != "disc" && kind != "square" && kind != "mixed") throw ParameterError("unknown shape kind " + kind);
      check_fits(radius_max);
    }
    for (const auto& s : shapes) {
      if (!(s.radius > 0)) throw ParameterError("shape radius must be positive");
      check_fits(s.radius);
    }
  }

  void check_fits(double r) const {
    if (2 * r + 1 > std::min(height, width))
      throw ParameterError("shape of radius " + format_double(r) + " does not fit a " + std::to_string(height) +
                           "x" + std::to_string(width) + " canvas");
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("height", height);
    kv.set("width", width);
    kv.set("channels", channels);
    kv.set("length", length);
    kv.set("num_shapes", num_shapes);
    kv.set("kind", kind);
    kv.set("radius_min", radius_min);
    kv.set("radius_max", radius_max);
    kv.set("speed_min", speed_min);
    kv.set("speed_max", speed_max);
    kv.set("intensity_min", intensity_min);
    kv.set("intensity_max", intensity_max);
    kv.set("boundary", boundary);
    kv.set("seed", seed);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      const auto& s = shapes[i];
      std::string v = std::string(to_string(s.kind));
      for (double d : {s.radius, s.y, s.x, s.vy, s.vx, s.colour[0], s.colour[1], s.colour[2]}) v += "," + format_double(d);
      kv.set("shape." + std::to_string(i), v);
    }
    return kv;
  }

  static SceneSpec from_kv(const KeyValues& kv) {
    const std::set<std::string> known = {"height", "width", "channels", "length", "num_shapes", "kind",
                                         "radius_min", "radius_max", "speed_min", "speed_max", "intensity_min",
                                         "intensity_max", "boundary", "seed", "shape.*"};
    const auto bad = kv.unknown_keys(known);
    if (!bad.empty()) throw ConfigError("unknown scene key '" + bad.front() + "'");
    SceneSpec s;
    s.height = static_cast<int>(kv.get_int("height", s.height));
    s.width = static_cast<int>(kv.get_int("width", s.width));
    s.channels = static_cast<int>(kv.get_int("channels", s.channels));
    s.length = static_cast<int>(kv.get_int("length", s.length));
    s.num_shapes = static_cast<int>(kv.get_int("num_shapes", s.num_shapes));
    s.kind = kv.get("kind", s.kind);
    s.radius_min = kv.get_double("radius_min", s.radius_min);
    s.radius_max = kv.get_double("radius_max", s.radius_max);
    s.speed_min = kv.get_double("speed_min", s.speed_min);
    s.speed_max = kv.get_double("speed_max", s.speed_max);
    s.intensity_min = kv.get_double("intensity_min", s.intensity_min);
    s.intensity_max = kv.get_double("intensity_max", s.intensity_max);
    s.boundary = kv.get("boundary", s.boundary);
    s.seed = kv.get_uint("seed", s.seed);
    for (int i = 0; kv.has("shape." + std::to_string(i)); ++i) {
      std::stringstream ss(kv.raw("shape." + std::to_string(i)));
      std::string item;
      std::vector<std::string> parts;
      while (std::getline(ss, item, ',')) parts.push_back(trim(item));
      if (parts.size() != 9) throw ConfigError("shape entries need kind and 8 numbers");
      MovingShape m;
      m.kind = parse_shape_kind(parts[0]);
      KeyValues tmp;
      std::vector<double> nums;
      for (std::size_t k = 1; k < parts.size(); ++k) {
        tmp.set("v", parts[k]);
        nums.push_back(tmp.get_double("v", 0));
      }
      m.radius = nums[0];
      m.y = nums[1];
      m.x = nums[2];
      m.vy = nums[3];
      m.vx = nums[4];
      m.colour = {nums[5], nums[6], nums[7]};
      s.shapes.push_back(m);
    }
    return s;
  }
};

/// Folds p into [lo, hi] as a point bouncing elastically between the walls.
inline double reflect_into(double p, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return lo;
  const double period = 2 * span;
  double u = std::fmod(p - lo, period);
  if (u < 0) u += period;
  if (u > span) u = period - u;
  return lo + u;
}

/// Shapes of the scene: the explicit list, or a seeded random draw.
inline std::vector<MovingShape> scene_shapes(const SceneSpec& spec) {
  spec.validate();
  if (!spec.shapes.empty()) return spec.shapes;
  Rng rng(spec.seed);
  std::vector<MovingShape> out;
  for (int i = 0; i < spec.num_shapes; ++i) {
    MovingShape s;
    if (spec.kind == "mixed")
      s.kind = rng.uniform() < 0.5 ? ShapeKind::kDisc : ShapeKind::kSquare;
    else
      s.kind = parse_shape_kind(spec.kind);
    s.radius = rng.uniform(spec.radius_min, spec.radius_max);
    s.y = rng.uniform(s.radius, spec.height - 1 - s.radius);
    s.x = rng.uniform(s.radius, spec.width - 1 - s.radius);
    const double speed = rng.uniform(spec.speed_min, spec.speed_max);
    const double angle = rng.uniform(0.0, 2 * std::numbers::pi);
    s.vy = speed * std::sin(angle);
    s.vx = speed * std::cos(angle);
    for (auto& c : s.colour) c = rng.uniform(spec.intensity_min, spec.intensity_max);
    if (spec.channels == 1) s.colour = {s.colour[0], s.colour[0], s.colour[0]};
    out.push_back(s);
  }
  return out;
}

/// Centre of `shape` at frame t: reflect(position_0 + t * velocity) in the
/// range that keeps the whole shape on the canvas.
inline std::pair<double, double> shape_position(const MovingShape& s, int t, int height, int width) {
  return {reflect_into(s.y + t * s.vy, s.radius, height - 1 - s.radius),
          reflect_into(s.x + t * s.vx, s.radius, width - 1 - s.radius)};
}

/// Anti-aliased coverage of pixel (py, px) by a shape centred at (cy, cx).
inline double shape_coverage(const MovingShape& s, double cy, double cx, int py, int px) {
  const double dy = py - cy, dx = px - cx;
  if (s.kind == ShapeKind::kDisc)
    return std::clamp(s.radius + 0.5 - std::sqrt(dy * dy + dx * dx), 0.0, 1.0);
  return std::clamp(s.radius + 0.5 - std::abs(dy), 0.0, 1.0) * std::clamp(s.radius + 0.5 - std::abs(dx), 0.0, 1.0);
}

/// Renders the scene. Overlapping shapes combine by per-channel maximum.
inline std::vector<Tensor<float>> generate_scene(const SceneSpec& spec) {
  const auto shapes = scene_shapes(spec);
  std::vector<Tensor<float>> frames;
  for (int t = 0; t < spec.length; ++t) {
    Tensor<float> f({spec.height, spec.width, spec.channels});
    for (const auto& s : shapes) {
      const auto [cy, cx] = shape_position(s, t, spec.height, spec.width);
      const int y0 = std::max(0, static_cast<int>(std::floor(cy - s.radius - 1)));
      const int y1 = std::min(spec.height - 1, static_cast<int>(std::ceil(cy + s.radius + 1)));
      const int x0 = std::max(0, static_cast<int>(std::floor(cx - s.radius - 1)));
      const int x1 = std::min(spec.width - 1, static_cast<int>(std::ceil(cx + s.radius + 1)));
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          const double cov = shape_coverage(s, cy, cx, y, x);
          if (cov <= 0) continue;
          for (int c = 0; c < spec.channels; ++c)
            f(y, x, c) = std::max(f(y, x, c), static_cast<float>(cov * s.colour[c]));
        }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

/// `count` scenes sharing `base` except for seeds derived from base.seed.
inline Dataset<float> synthetic_dataset(const SceneSpec& base, int count, const std::string& prefix = "scene") {
  Dataset<float> out;
  for (int i = 0; i < count; ++i) {
    SceneSpec s = base;
    s.seed = derive_seed(base.seed, static_cast<std::uint64_t>(i));
    char name[32];
    std::snprintf(name, sizeof name, "%s_%04d", prefix.c_str(), i);
    out.push_back({name, generate_scene(s)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading

struct LoadOptions {
  int height = 64;
  int width = 64;
  int channels = 1;
  int min_length = 1;  // sequences shorter than this are rejected
};

struct LoadResult {
  Dataset<float> sequences;
  std::vector<std::string> rejected;
  std::vector<std::string> warnings;
};

/// Loads every subdirectory of `root` as one sequence. Frames are the PNG
/// files of the directory in lexicographic filename order (zero-padded
/// numbering sorts numerically), resized and normalized to [0,1].
inline LoadResult load_sequences(const std::string& root, const LoadOptions& opt) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("dataset root " + root + " is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  LoadResult res;
  for (const auto& d : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(d)) {
      if (!e.is_regular_file()) continue;
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
      return a.filename().string() < b.filename().string();
    });
    const std::string name = d.filename().string();
    if (static_cast<int>(files.size()) < opt.min_length) {
      res.rejected.push_back(name);
      res.warnings.push_back("sequence " + name + " has " + std::to_string(files.size()) + " frames, needs " +
                             std::to_string(opt.min_length) + "; skipped");
      continue;
    }
    VideoSequence<float> seq;
    seq.name = name;
    for (const auto& f : files) {
      auto img = read_png(f.string(), opt.channels);
      seq.frames.push_back(resize_bilinear(img, opt.height, opt.width));
      for (auto& v : seq.frames.back().values()) v = std::clamp(v, 0.0f, 1.0f);
    }
    res.sequences.push_back(std::move(seq));
  }
  return res;
}

/// Writes each sequence as root/<name>/frame_0000.png ...
template <class T>
std::vector<std::string> save_sequences(const std::string& root, const Dataset<T>& data) {
  namespace fs = std::filesystem;
  std::vector<std::string> written;
  for (const auto& s : data) {
    const fs::path dir = fs::path(root) / s.name;
    fs::create_directories(dir);
    for (int t = 0; t < s.length(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04d.png", t);
      const auto p = (dir / name).string();
      write_png(p, s.frames[t]);
      written.push_back(p);
    }
  }
  return written;
}

// ---------------------------------------------------------------------------
// Corruptions

enum class CorruptionKind { kNone, kGaussianBlur, kFragmentBlur, kAdditiveNoise, kCompression };

inline const char* to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::kNone: return "none";
    case CorruptionKind::kGaussianBlur: return "gaussian_blur";
    case CorruptionKind::kFragmentBlur: return "fragment_blur";
    case CorruptionKind::kAdditiveNoise: return "additive_noise";
    case CorruptionKind::kCompression: return "compression";
  }
  return "none";
}

inline CorruptionKind parse_corruption_kind(const std::string& s) {
  for (auto k : {CorruptionKind::kNone, CorruptionKind::kGaussianBlur, CorruptionKind::kFragmentBlur,
                 CorruptionKind::kAdditiveNoise, CorruptionKind::kCompression})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown corruption kind '" + s + "'");
}

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kNone;
  double sigma = 1.0;        // blur standard deviation in pixels
  int fragments = 4;         // fragment blur patch count
  int fragment_size = 16;    // fragment blur patch side
  double snr_db = 20.0;      // additive noise target
  int quality = 100;         // compression quality, 1..100

  static constexpr int kHighQuality = 60;
  static constexpr int kLowQuality = 15;

  void validate() const {
    if (sigma < 0 || !std::isfinite(sigma)) throw ParameterError("blur sigma must be finite and >= 0");
    if (fragments < 0) throw ParameterError("fragment count must be >= 0");
    if (fragment_size < 1) throw ParameterError("fragment size must be positive");
    if (std::isnan(snr_db)) throw ParameterError("SNR must be a number");
    if (quality < 1 || quality > 100) throw ParameterError("compression quality must be in [1, 100]");
  }
};

/// Separable Gaussian blur with mirrored borders; sigma 0 is the identity.
template <class T>
Tensor<T> gaussian_blur(const Tensor<T>& in, double sigma) {
  if (sigma < 0) throw ParameterError("blur sigma must be >= 0");
  if (sigma == 0) return in;
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  auto mirror = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  Tensor<T> tmp(in.shape()), out(in.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * in(y, mirror(x + i, w), ch);
        tmp(y, x, ch) = static_cast<T>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp(mirror(y + i, h), x, ch);
        out(y, x, ch) = static_cast<T>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

/// 10 log10(mean(x^2) / mean((y - x)^2)).
template <class T>
double measured_snr_db(const Tensor<T>& clean, const Tensor<T>& noisy) {
  double ps = 0, pn = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ps += static_cast<double>(clean[i]) * clean[i];
    const double d = static_cast<double>(noisy[i]) - clean[i];
    pn += d * d;
  }
  if (pn == 0) return std::numeric_limits<double>::infinity();
  return 10 * std::log10(ps / pn);
}

namespace detail {

// Luminance quantization table of the IJG JPEG reference.
inline const std::array<int, 64>& jpeg_luma_table() {
  static const std::array<int, 64> t = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                                        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                                        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                                        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  return t;
}

template <class T>
Tensor<T> block_dct_compress(const Tensor<T>& in, int quality) {
  if (quality >= 100) return in;
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<double, 64> q;
  for (int i = 0; i < 64; ++i) q[i] = std::clamp((jpeg_luma_table()[i] * scale + 50) / 100, 1, 255);
  std::array<double, 64> basis;  // basis[u * 8 + x] = c(u) cos((2x+1) u pi / 16)
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x)
      basis[u * 8 + x] = (u == 0 ? std::sqrt(0.125) : 0.5) * std::cos((2 * x + 1) * u * std::numbers::pi / 16);
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  Tensor<T> out(in.shape());
  std::array<double, 64> blk, coef, tmp;
  for (int ch = 0; ch < c; ++ch)
    for (int by = 0; by < h; by += 8)
      for (int bx = 0; bx < w; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            blk[y * 8 + x] = 255.0 * in(std::min(by + y, h - 1), std::min(bx + x, w - 1), ch) - 128.0;
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double a = 0;
            for (int y = 0; y < 8; ++y) a += basis[u * 8 + y] * blk[y * 8 + x];
            tmp[u * 8 + x] = a;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double a = 0;
            for (int x = 0; x < 8; ++x) a += basis[v * 8 + x] * tmp[u * 8 + x];
            coef[u * 8 + v] = std::round(a / q[u * 8 + v]) * q[u * 8 + v];
          }
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double a = 0;
            for (int u = 0; u < 8; ++u) a += basis[u * 8 + y] * coef[u * 8 + v];
            tmp[y * 8 + v] = a;
          }
        for (int y = 0; y < 8 && by + y < h; ++y)
          for (int x = 0; x < 8 && bx + x < w; ++x) {
            double a = 0;
            for (int v = 0; v < 8; ++v) a += basis[v * 8 + x] * tmp[y * 8 + v];
            out(by + y, bx + x, ch) = static_cast<T>(std::clamp((a + 128.0) / 255.0, 0.0, 1.0));
          }
      }
  return out;
}

template <class T>
Tensor<T> add_noise_at_snr(const Tensor<T>& in, double snr_db, Rng& rng) {
  if (std::isinf(snr_db) && snr_db > 0) return in;
  double ps = 0;
  for (T v : in.values()) ps += static_cast<double>(v) * v;
  if (ps == 0) return in;  // SNR is undefined for an all-zero frame
  std::vector<double> n(in.size());
  for (auto& v : n) v = rng.normal();
  auto apply = [&](double s) {
    Tensor<T> out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i)
      out[i] = static_cast<T>(std::clamp(static_cast<double>(in[i]) + s * n[i], 0.0, 1.0));
    return out;
  };
  // Clamping removes part of the noise, so the scale is found by bisection
  // on the SNR measured after clamping.
  double lo = 0, hi = std::sqrt(ps / in.size() / std::pow(10.0, snr_db / 10));
  for (int k = 0; k < 60 && measured_snr_db(in, apply(hi)) > snr_db; ++k) hi *= 2;
  if (measured_snr_db(in, apply(hi)) > snr_db) throw ParameterError("target SNR not reachable for this frame");
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (measured_snr_db(in, apply(mid)) > snr_db ? lo : hi) = mid;
  }
  return apply(hi);
}

}  // namespace detail

/// Applies the corruption independently to each frame. Random draws
/// (noise, patch placement) come from `seed`.
template <class T>
std::vector<Tensor<T>> corrupt(const std::vector<Tensor<T>>& frames, const CorruptionSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Tensor<T>> out;
  for (const auto& f : frames) {
    switch (spec.kind) {
      case CorruptionKind::kNone:
        out.push_back(f);
        break;
      case CorruptionKind::kGaussianBlur:
        out.push_back(gaussian_blur(f, spec.sigma));
        break;
      case CorruptionKind::kFragmentBlur: {
        Tensor<T> g = f;
        if (spec.fragments > 0 && spec.sigma > 0) {
          const Tensor<T> blurred = gaussian_blur(f, spec.sigma);
          const int s = std::min({spec.fragment_size, f.dim(0), f.dim(1)});
          for (int k = 0; k < spec.fragments; ++k) {
            const int y0 = static_cast<int>(rng.integer(0, f.dim(0) - s));
            const int x0 = static_cast<int>(rng.integer(0, f.dim(1) - s));
            for (int y = y0; y < y0 + s; ++y)
              for (int x = x0; x < x0 + s; ++x)
                for (int ch = 0; ch < f.dim(2); ++ch) g(y, x, ch) = blurred(y, x, ch);
          }
        }
        out.push_back(std::move(g));
        break;
      }
      case CorruptionKind::kAdditiveNoise:
        out.push_back(detail::add_noise_at_snr(f, spec.snr_db, rng));
        break;
      case CorruptionKind::kCompression:
        out.push_back(detail::block_dct_compress(f, spec.quality));
        break;
    }
  }
  return out;
}

}  // namespace shrvq
