#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "shrvq/error.hpp"
#include "shrvq/kv.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

struct FrameMetrics {
  double psnr = 0;  // +inf when mse == 0
  double ssim = 0;
  double mse = 0;
  double mae = 0;
};

inline double psnr_from_mse(double mse) {
  if (mse <= 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over all fully contained windows of each channel, averaged
/// over channels. Images smaller than the window use their smaller side as
/// the window size (odd, with the same sigma).
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& opt = {}) {
  if (a.shape() != b.shape()) throw ShapeError("SSIM needs equal shapes, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.rank() != 3) throw ShapeError("SSIM expects H x W x C frames");
  const int h = a.dim(0), w = a.dim(1), c = a.dim(2);
  int win = std::min({opt.window, h, w});
  if (win % 2 == 0) --win;
  const int r = win / 2;
  std::vector<double> g(win);
  double gs = 0;
  for (int i = 0; i < win; ++i) gs += g[i] = std::exp(-0.5 * (i - r) * (i - r) / (opt.sigma * opt.sigma));
  for (auto& v : g) v /= gs;
  const double c1 = (opt.k1 * 1.0) * (opt.k1 * 1.0), c2 = (opt.k2 * 1.0) * (opt.k2 * 1.0);
  const int oh = h - win + 1, ow = w - win + 1;
  // Separable filtering of the five moment images.
  auto filter = [&](const std::vector<double>& img) {
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0;
        for (int i = 0; i < win; ++i) s += g[i] * img[static_cast<std::size_t>(y) * w + x + i];
        tmp[static_cast<std::size_t>(y) * ow + x] = s;
      }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0;
        for (int i = 0; i < win; ++i) s += g[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
        out[static_cast<std::size_t>(y) * ow + x] = s;
      }
    return out;
  };
  double total = 0;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < c; ++ch) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a[i * c + ch];
      y[i] = b[i * c + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x), my = filter(y), sxx = filter(xx), syy = filter(yy), sxy = filter(xy);
    double acc = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / c;
}

template <class T>
FrameMetrics compute_metrics(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape())
    throw ShapeError("metric inputs differ in shape: " + shape_str(pred.shape()) + " vs " + shape_str(gt.shape()));
  FrameMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    m.mse += d * d;
    m.mae += std::abs(d);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  m.psnr = psnr_from_mse(m.mse);
  m.ssim = ssim(pred, gt);
  return m;
}

/// Per-step and overall means over a set of predicted sequences.
struct MetricReport {
  std::vector<FrameMetrics> per_step;
  FrameMetrics mean;
  int sequences = 0;
  std::vector<std::string> names;
  std::vector<FrameMetrics> per_sequence;  // mean over steps for each sequence

  /// Adds one sequence's per-step metrics; every sequence has the same horizon.
  void add(const std::string& name, const std::vector<FrameMetrics>& steps) {
    if (steps.empty()) throw DataError("empty prediction for " + name);
    if (sequences == 0) per_step.assign(steps.size(), FrameMetrics{});
    if (steps.size() != per_step.size()) throw DataError("inconsistent horizon in report");
    FrameMetrics seq;
    for (std::size_t s = 0; s < steps.size(); ++s) {
      per_step[s].mse += steps[s].mse;
      per_step[s].mae += steps[s].mae;
      per_step[s].ssim += steps[s].ssim;
      per_step[s].psnr += steps[s].psnr;
      seq.mse += steps[s].mse / steps.size();
      seq.mae += steps[s].mae / steps.size();
      seq.ssim += steps[s].ssim / steps.size();
      seq.psnr += steps[s].psnr / steps.size();
    }
    names.push_back(name);
    per_sequence.push_back(seq);
    ++sequences;
  }

  /// Converts the running sums into means. PSNR means are means of the
  /// per-frame dB values.
  void finish() {
    if (sequences == 0) throw DataError("no sequences evaluated");
    mean = FrameMetrics{};
    for (auto& s : per_step) {
      s.mse /= sequences;
      s.mae /= sequences;
      s.ssim /= sequences;
      s.psnr /= sequences;
      mean.mse += s.mse / per_step.size();
      mean.mae += s.mae / per_step.size();
      mean.ssim += s.ssim / per_step.size();
      mean.psnr += s.psnr / per_step.size();
    }
  }

  std::string to_csv() const {
    std::string s = "step,psnr,ssim,mse,mae\n";
    for (std::size_t i = 0; i < per_step.size(); ++i)
      s += std::to_string(i + 1) + "," + format_double(per_step[i].psnr) + "," + format_double(per_step[i].ssim) +
           "," + format_double(per_step[i].mse) + "," + format_double(per_step[i].mae) + "\n";
    s += "mean," + format_double(mean.psnr) + "," + format_double(mean.ssim) + "," + format_double(mean.mse) + "," +
         format_double(mean.mae) + "\n";
    return s;
  }

  KeyValues to_kv() const {
    KeyValues kv;
    kv.set("sequences", sequences);
    kv.set("steps", static_cast<int>(per_step.size()));
    kv.set("mean.psnr", mean.psnr);
    kv.set("mean.ssim", mean.ssim);
    kv.set("mean.mse", mean.mse);
    kv.set("mean.mae", mean.mae);
    kv.set("mean.mse_x100", mean.mse * 100);
    kv.set("mean.mse_div10", mean.mse / 10);
    kv.set("mean.mae_div100", mean.mae / 100);
    for (std::size_t i = 0; i < per_step.size(); ++i) {
      const std::string p = "step." + std::to_string(i + 1) + ".";
      kv.set(p + "psnr", per_step[i].psnr);
      kv.set(p + "ssim", per_step[i].ssim);
      kv.set(p + "mse", per_step[i].mse);
      kv.set(p + "mae", per_step[i].mae);
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      const std::string p = "sequence." + names[i] + ".";
      kv.set(p + "psnr", per_sequence[i].psnr);
      kv.set(p + "ssim", per_sequence[i].ssim);
    }
    return kv;
  }
};

}  // namespace shrvq
