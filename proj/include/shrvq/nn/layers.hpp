#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "shrvq/random.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq::nn {

/// A trainable tensor with its gradient accumulator.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.set_zero(); }
};

template <class T>
using ParamList = std::vector<Param<T>*>;

template <class T>
void uniform_init(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

/// Kernel tap in offset form relative to the output anchor (stride 1 view).
struct Tap {
  int ky;
  int kx;
};

inline std::vector<Tap> full_taps(int k) {
  std::vector<Tap> taps;
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) taps.push_back({y, x});
  return taps;
}

struct ConvGeometry {
  int channels = 0;
  int in_h = 0, in_w = 0;
  int kernel = 1, stride = 1, pad = 0;
  int out_h = 0, out_w = 0;

  static ConvGeometry make(int c, int h, int w, int k, int s, int p) {
    ConvGeometry g{c, h, w, k, s, p, 0, 0};
    g.out_h = (h + 2 * p - k) / s + 1;
    g.out_w = (w + 2 * p - k) / s + 1;
    return g;
  }
};

/// Unfold a (C, H, W) image into (C * taps, out_h * out_w) columns.
template <class T>
void im2col(const T* img, const ConvGeometry& g, const std::vector<Tap>& taps, T* cols) {
  const int nt = static_cast<int>(taps.size());
  const int npos = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int t = 0; t < nt; ++t) {
      T* row = cols + (static_cast<std::size_t>(c) * nt + t) * npos;
      for (int oy = 0; oy < g.out_h; ++oy) {
        const int iy = oy * g.stride - g.pad + taps[t].ky;
        T* dst = row + oy * g.out_w;
        if (iy < 0 || iy >= g.in_h) {
          std::fill(dst, dst + g.out_w, T{});
          continue;
        }
        const T* src = plane + iy * g.in_w;
        for (int ox = 0; ox < g.out_w; ++ox) {
          const int ix = ox * g.stride - g.pad + taps[t].kx;
          dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T{};
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-add columns back into a zeroed (C, H, W) image.
template <class T>
void col2im(const T* cols, const ConvGeometry& g, const std::vector<Tap>& taps, T* img) {
  const int nt = static_cast<int>(taps.size());
  const int npos = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int t = 0; t < nt; ++t) {
      const T* row = cols + (static_cast<std::size_t>(c) * nt + t) * npos;
      for (int oy = 0; oy < g.out_h; ++oy) {
        const int iy = oy * g.stride - g.pad + taps[t].ky;
        if (iy < 0 || iy >= g.in_h) continue;
        T* dst = plane + iy * g.in_w;
        const T* src = row + oy * g.out_w;
        for (int ox = 0; ox < g.out_w; ++ox) {
          const int ix = ox * g.stride - g.pad + taps[t].kx;
          if (ix >= 0 && ix < g.in_w) dst[ix] += src[ox];
        }
      }
    }
  }
}

template <class T>
struct ConvCache {
  Tensor<T> cols;
  ConvGeometry geom;
};

/// 2-D convolution over (C, H, W) maps. A tap subset turns it into a masked
/// convolution: only the listed kernel positions carry weights.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
         std::vector<Tap> taps = {})
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad),
        taps_(taps.empty() ? full_taps(kernel) : std::move(taps)),
        weight_(name + ".weight", {out_ch, in_ch * static_cast<int>(taps_.size())}),
        bias_(name + ".bias", {out_ch}) {}

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(weight_.value.dim(1)));
    uniform_init(weight_.value, bound, rng);
    uniform_init(bias_.value, bound, rng);
  }

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }
  const std::vector<Tap>& taps() const { return taps_; }

  Tensor<T> forward(const Tensor<T>& in, ConvCache<T>* cache = nullptr) const {
    if (in.rank() != 3 || in.dim(0) != in_ch_) {
      throw ShapeError("conv " + weight_.name + " expects " + std::to_string(in_ch_) +
                       " input channels, got " + shape_str(in.shape()));
    }
    auto g = ConvGeometry::make(in_ch_, in.dim(1), in.dim(2), kernel_, stride_, pad_);
    const int npos = g.out_h * g.out_w;
    Tensor<T> cols({in_ch_ * static_cast<int>(taps_.size()), npos});
    im2col(in.data(), g, taps_, cols.data());
    Tensor<T> out({out_ch_, g.out_h, g.out_w});
    auto o = as_matrix(out, out_ch_);
    o.noalias() = as_matrix(weight_.value, out_ch_) * as_matrix(cols, cols.dim(0));
    o.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.data(), out_ch_);
    if (cache) {
      cache->cols = std::move(cols);
      cache->geom = g;
    }
    return out;
  }

  Tensor<T> backward(const ConvCache<T>& cache, const Tensor<T>& dout) {
    const auto& g = cache.geom;
    auto d = as_matrix(dout, out_ch_);
    const auto cols = as_matrix(cache.cols, cache.cols.dim(0));
    as_matrix(weight_.grad, out_ch_).noalias() += d * cols.transpose();
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.grad.data(), out_ch_) += d.rowwise().sum();
    Tensor<T> dcols(cache.cols.shape());
    as_matrix(dcols, dcols.dim(0)).noalias() = as_matrix(weight_.value, out_ch_).transpose() * d;
    Tensor<T> din({in_ch_, g.in_h, g.in_w});
    col2im(dcols.data(), g, taps_, din.data());
    return din;
  }

  ParamList<T> params() { return {&weight_, &bias_}; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  const Param<T>& weight() const { return weight_; }
  const Param<T>& bias() const { return bias_; }

 private:
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  std::vector<Tap> taps_;
  Param<T> weight_;
  Param<T> bias_;
};

template <class T>
struct ConvTCache {
  Tensor<T> input;
  ConvGeometry geom;  // geometry of the equivalent forward convolution
};

/// Transposed convolution (adjoint of a strided convolution).
template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad)
      : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad),
        taps_(full_taps(kernel)),
        weight_(name + ".weight", {in_ch, out_ch * kernel * kernel}),
        bias_(name + ".bias", {out_ch}) {}

  void init(Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch_ * kernel_ * kernel_) /
                                         (stride_ * stride_));
    uniform_init(weight_.value, bound, rng);
    uniform_init(bias_.value, bound, rng);
  }

  int out_channels() const { return out_ch_; }

  Tensor<T> forward(const Tensor<T>& in, ConvTCache<T>* cache = nullptr) const {
    if (in.rank() != 3 || in.dim(0) != in_ch_) {
      throw ShapeError("conv-transpose " + weight_.name + " expects " + std::to_string(in_ch_) +
                       " input channels, got " + shape_str(in.shape()));
    }
    const int oh = (in.dim(1) - 1) * stride_ - 2 * pad_ + kernel_;
    const int ow = (in.dim(2) - 1) * stride_ - 2 * pad_ + kernel_;
    auto g = ConvGeometry::make(out_ch_, oh, ow, kernel_, stride_, pad_);
    if (g.out_h != in.dim(1) || g.out_w != in.dim(2)) {
      throw ShapeError("conv-transpose geometry mismatch for " + shape_str(in.shape()));
    }
    Tensor<T> cols({out_ch_ * kernel_ * kernel_, in.dim(1) * in.dim(2)});
    as_matrix(cols, cols.dim(0)).noalias() =
        as_matrix(weight_.value, in_ch_).transpose() * as_matrix(in, in_ch_);
    Tensor<T> out({out_ch_, oh, ow});
    col2im(cols.data(), g, taps_, out.data());
    auto o = as_matrix(out, out_ch_);
    o.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.value.data(), out_ch_);
    if (cache) {
      cache->input = in;
      cache->geom = g;
    }
    return out;
  }

  Tensor<T> backward(const ConvTCache<T>& cache, const Tensor<T>& dout) {
    const auto& g = cache.geom;
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias_.grad.data(), out_ch_) +=
        as_matrix(dout, out_ch_).rowwise().sum();
    Tensor<T> dcols({out_ch_ * kernel_ * kernel_, g.out_h * g.out_w});
    im2col(dout.data(), g, taps_, dcols.data());
    const auto dc = as_matrix(dcols, dcols.dim(0));
    const auto x = as_matrix(cache.input, in_ch_);
    as_matrix(weight_.grad, in_ch_).noalias() += x * dc.transpose();
    Tensor<T> din(cache.input.shape());
    as_matrix(din, in_ch_).noalias() = as_matrix(weight_.value, in_ch_) * dc;
    return din;
  }

  ParamList<T> params() { return {&weight_, &bias_}; }

 private:
  int in_ch_ = 0, out_ch_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  std::vector<Tap> taps_;
  Param<T> weight_;
  Param<T> bias_;
};

template <class T>
Tensor<T> relu(Tensor<T> x) {
  for (auto& v : x.values()) v = v > T{} ? v : T{};
  return x;
}

/// Gradient of relu given its input.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& input, Tensor<T> dout) {
  for (std::size_t i = 0; i < dout.size(); ++i)
    if (!(input[i] > T{})) dout[i] = T{};
  return dout;
}

template <class T>
struct ResBlockCache {
  Tensor<T> input;
  Tensor<T> hidden_pre;
  ConvCache<T> c1, c2;
};

/// x + conv1x1(relu(conv3x3(relu(x)))).
template <class T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int channels, int hidden)
      : conv1_(name + ".conv1", channels, hidden, 3, 1, 1),
        conv2_(name + ".conv2", hidden, channels, 1, 1, 0) {}

  void init(Rng& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, ResBlockCache<T>* cache = nullptr) const {
    Tensor<T> h = conv1_.forward(relu(x), cache ? &cache->c1 : nullptr);
    Tensor<T> y = conv2_.forward(relu(h), cache ? &cache->c2 : nullptr);
    y += x;
    if (cache) {
      cache->input = x;
      cache->hidden_pre = std::move(h);
    }
    return y;
  }

  Tensor<T> backward(const ResBlockCache<T>& cache, const Tensor<T>& dout) {
    Tensor<T> dh = relu_backward(cache.hidden_pre, conv2_.backward(cache.c2, dout));
    Tensor<T> dx = relu_backward(cache.input, conv1_.backward(cache.c1, dh));
    dx += dout;
    return dx;
  }

  ParamList<T> params() {
    ParamList<T> p = conv1_.params();
    for (auto* q : conv2_.params()) p.push_back(q);
    return p;
  }

 private:
  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
};

template <class T>
void append(ParamList<T>& dst, const ParamList<T>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

template <class T>
std::size_t parameter_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (auto* p : params) n += p->value.size();
  return n;
}

}  // namespace shrvq::nn
