#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "shrvq/checksum.hpp"
#include "shrvq/codebook_tree.hpp"
#include "shrvq/nn/layers.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// Frame and latent geometry plus network widths. Frames are H_I x W_I x C_I
/// tensors in [0,1]; latents are (H_I / 2^stages) x (W_I / 2^stages) x D.
struct AutoencoderConfig {
  int in_channels = 3;
  int in_height = 128;
  int in_width = 128;
  int stages = 2;  // stride-2 convolutions; 2 maps 128 -> 32
  int width = 64;
  int res_blocks = 2;
  int res_hidden = 32;
  int latent_dim = 8;
  std::uint64_t seed = 0;

  int latent_height() const { return in_height >> stages; }
  int latent_width() const { return in_width >> stages; }

  void validate() const {
    if (in_channels < 1 || in_height < 1 || in_width < 1)
      throw ParameterError("frame dimensions must be positive");
    if (stages < 1) throw ParameterError("autoencoder needs at least one downsampling stage");
    if (in_height % (1 << stages) != 0 || in_width % (1 << stages) != 0)
      throw ParameterError("frame size must be divisible by 2^stages");
    if (width < 1 || res_hidden < 1 || latent_dim < 1 || res_blocks < 0)
      throw ParameterError("autoencoder widths must be positive");
  }

  /// Human-readable architecture descriptor stored alongside checkpoints.
  std::string descriptor() const {
    std::ostringstream os;
    os << "encoder=";
    for (int s = 0; s < stages; ++s) os << "conv4x4s2(" << width << "),relu,";
    os << "conv3x3(" << width << ")";
    for (int r = 0; r < res_blocks; ++r) os << ",res(" << res_hidden << ")";
    os << ",relu,conv1x1(" << latent_dim << ");decoder=conv3x3(" << width << ")";
    for (int r = 0; r < res_blocks; ++r) os << ",res(" << res_hidden << ")";
    os << ",relu";
    for (int s = 1; s < stages; ++s) os << ",convT4x4s2(" << width << "),relu";
    os << ",convT4x4s2(" << in_channels << ")";
    return os.str();
  }
};

template <class T>
struct EncoderCache {
  std::vector<nn::ConvCache<T>> stage;
  std::vector<Tensor<T>> stage_pre;
  nn::ConvCache<T> mid;
  std::vector<nn::ResBlockCache<T>> res;
  Tensor<T> pre_out;
  nn::ConvCache<T> out;
};

template <class T>
struct DecoderCache {
  nn::ConvCache<T> in;
  std::vector<nn::ResBlockCache<T>> res;
  Tensor<T> post_res;
  std::vector<nn::ConvTCache<T>> up;
  std::vector<Tensor<T>> up_pre;
  nn::ConvTCache<T> last;
};

/// Convolutional encoder E and decoder D.
template <class T>
class Autoencoder {
 public:
  Autoencoder() = default;
  explicit Autoencoder(const AutoencoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    int ch = cfg_.in_channels;
    for (int s = 0; s < cfg_.stages; ++s) {
      down_.emplace_back("enc.down" + std::to_string(s), ch, cfg_.width, 4, 2, 1);
      ch = cfg_.width;
    }
    enc_mid_ = nn::Conv2d<T>("enc.mid", cfg_.width, cfg_.width, 3, 1, 1);
    for (int r = 0; r < cfg_.res_blocks; ++r)
      enc_res_.emplace_back("enc.res" + std::to_string(r), cfg_.width, cfg_.res_hidden);
    enc_out_ = nn::Conv2d<T>("enc.out", cfg_.width, cfg_.latent_dim, 1, 1, 0);

    dec_in_ = nn::Conv2d<T>("dec.in", cfg_.latent_dim, cfg_.width, 3, 1, 1);
    for (int r = 0; r < cfg_.res_blocks; ++r)
      dec_res_.emplace_back("dec.res" + std::to_string(r), cfg_.width, cfg_.res_hidden);
    for (int s = 1; s < cfg_.stages; ++s)
      up_.emplace_back("dec.up" + std::to_string(s), cfg_.width, cfg_.width, 4, 2, 1);
    dec_last_ = nn::ConvTranspose2d<T>("dec.last", cfg_.width, cfg_.in_channels, 4, 2, 1);

    Rng rng(cfg_.seed);
    for (auto& c : down_) c.init(rng);
    enc_mid_.init(rng);
    for (auto& r : enc_res_) r.init(rng);
    enc_out_.init(rng);
    dec_in_.init(rng);
    for (auto& r : dec_res_) r.init(rng);
    for (auto& u : up_) u.init(rng);
    dec_last_.init(rng);
  }

  const AutoencoderConfig& config() const { return cfg_; }
  Shape frame_shape() const { return {cfg_.in_height, cfg_.in_width, cfg_.in_channels}; }
  Shape latent_shape() const { return {cfg_.latent_height(), cfg_.latent_width(), cfg_.latent_dim}; }

  /// z = E(x); x is H_I x W_I x C_I, z is H x W x D.
  Tensor<T> encode(const Tensor<T>& frame, EncoderCache<T>* cache = nullptr) const {
    if (frame.shape() != frame_shape()) {
      throw ShapeError("frame " + shape_str(frame.shape()) + " does not match configured " +
                       shape_str(frame_shape()));
    }
    Tensor<T> h = hwc_to_chw(frame);
    if (cache) {
      cache->stage.resize(down_.size());
      cache->stage_pre.resize(down_.size());
      cache->res.resize(enc_res_.size());
    }
    for (std::size_t s = 0; s < down_.size(); ++s) {
      Tensor<T> pre = down_[s].forward(h, cache ? &cache->stage[s] : nullptr);
      h = nn::relu(pre);
      if (cache) cache->stage_pre[s] = std::move(pre);
    }
    h = enc_mid_.forward(h, cache ? &cache->mid : nullptr);
    for (std::size_t r = 0; r < enc_res_.size(); ++r)
      h = enc_res_[r].forward(h, cache ? &cache->res[r] : nullptr);
    Tensor<T> z = enc_out_.forward(nn::relu(h), cache ? &cache->out : nullptr);
    if (cache) cache->pre_out = std::move(h);
    return chw_to_hwc(z);
  }

  /// Frame-space output clipped to [0,1], for everything shown or scored.
  Tensor<T> decode_frame(const Tensor<T>& e) const {
    Tensor<T> x = decode(e);
    for (auto& v : x.values()) v = std::clamp(v, T{}, T(1));
    return x;
  }

  /// x_hat = D(e) before clipping; e is H x W x D, output is H_I x W_I x C_I.
  /// The last layer is linear so the training loss keeps a gradient on
  /// saturated pixels.
  Tensor<T> decode(const Tensor<T>& e, DecoderCache<T>* cache = nullptr) const {
    if (e.shape() != latent_shape()) {
      throw ShapeError("embedding " + shape_str(e.shape()) + " does not match configured " +
                       shape_str(latent_shape()));
    }
    if (cache) {
      cache->res.resize(dec_res_.size());
      cache->up.resize(up_.size());
      cache->up_pre.resize(up_.size());
    }
    Tensor<T> h = dec_in_.forward(hwc_to_chw(e), cache ? &cache->in : nullptr);
    for (std::size_t r = 0; r < dec_res_.size(); ++r)
      h = dec_res_[r].forward(h, cache ? &cache->res[r] : nullptr);
    if (cache) cache->post_res = h;
    h = nn::relu(std::move(h));
    for (std::size_t s = 0; s < up_.size(); ++s) {
      Tensor<T> pre = up_[s].forward(h, cache ? &cache->up[s] : nullptr);
      h = nn::relu(pre);
      if (cache) cache->up_pre[s] = std::move(pre);
    }
    return chw_to_hwc(dec_last_.forward(h, cache ? &cache->last : nullptr));
  }

  /// Accumulates decoder gradients; returns dL/de (H x W x D).
  Tensor<T> backward_decoder(const DecoderCache<T>& cache, const Tensor<T>& dframe) {
    Tensor<T> g = dec_last_.backward(cache.last, hwc_to_chw(dframe));
    for (std::size_t s = up_.size(); s-- > 0;) {
      g = nn::relu_backward(cache.up_pre[s], std::move(g));
      g = up_[s].backward(cache.up[s], g);
    }
    g = nn::relu_backward(cache.post_res, std::move(g));
    for (std::size_t r = dec_res_.size(); r-- > 0;) g = dec_res_[r].backward(cache.res[r], g);
    g = dec_in_.backward(cache.in, g);
    return chw_to_hwc(g);
  }

  /// Accumulates encoder gradients from dL/dz (H x W x D).
  void backward_encoder(const EncoderCache<T>& cache, const Tensor<T>& dz) {
    Tensor<T> g = enc_out_.backward(cache.out, hwc_to_chw(dz));
    g = nn::relu_backward(cache.pre_out, std::move(g));
    for (std::size_t r = enc_res_.size(); r-- > 0;) g = enc_res_[r].backward(cache.res[r], g);
    g = enc_mid_.backward(cache.mid, g);
    for (std::size_t s = down_.size(); s-- > 0;) {
      g = nn::relu_backward(cache.stage_pre[s], std::move(g));
      g = down_[s].backward(cache.stage[s], g);
    }
  }

  nn::ParamList<T> encoder_params() {
    nn::ParamList<T> p;
    for (auto& c : down_) nn::append(p, c.params());
    nn::append(p, enc_mid_.params());
    for (auto& r : enc_res_) nn::append(p, r.params());
    nn::append(p, enc_out_.params());
    return p;
  }

  nn::ParamList<T> decoder_params() {
    nn::ParamList<T> p = dec_in_.params();
    for (auto& r : dec_res_) nn::append(p, r.params());
    for (auto& u : up_) nn::append(p, u.params());
    nn::append(p, dec_last_.params());
    return p;
  }

  nn::ParamList<T> params() {
    auto p = encoder_params();
    nn::append(p, decoder_params());
    return p;
  }

  std::string encoder_checksum() const { return checksum_of(const_cast<Autoencoder*>(this)->encoder_params()); }
  std::string decoder_checksum() const { return checksum_of(const_cast<Autoencoder*>(this)->decoder_params()); }

 private:
  static std::string checksum_of(const nn::ParamList<T>& ps) {
    Fnv1a h;
    for (auto* p : ps) h.update_values(p->value.values());
    return h.hex();
  }

  AutoencoderConfig cfg_;
  std::vector<nn::Conv2d<T>> down_;
  nn::Conv2d<T> enc_mid_;
  std::vector<nn::ResBlock<T>> enc_res_;
  nn::Conv2d<T> enc_out_;
  nn::Conv2d<T> dec_in_;
  std::vector<nn::ResBlock<T>> dec_res_;
  std::vector<nn::ConvTranspose2d<T>> up_;
  nn::ConvTranspose2d<T> dec_last_;
};

/// Forward value e_C, backward gradient routed unchanged to z.
template <class T>
struct StraightThrough {
  static Tensor<T> forward(const Tensor<T>& z, const Tensor<T>& combined) {
    z.check_same(combined, "straight-through");
    return combined;
  }
  /// Gradient w.r.t. z given the gradient w.r.t. the decoder input. The
  /// codebook side receives nothing along this path.
  static Tensor<T> backward(const Tensor<T>& d_decoder_input) { return d_decoder_input; }
};

template <class T>
struct LayerReconstruction {
  Tensor<T> frame;    // decode of the sum of the first k layers
  Tensor<T> heatmap;  // H_I x W_I x 1, values in [0,1]
};

/// Decodes every codeword prefix sum and the normalized change each layer
/// adds over the previous prefix.
template <class T>
std::vector<LayerReconstruction<T>> layer_reconstructions(const Autoencoder<T>& ae,
                                                          const QuantizationOutput<T>& quant) {
  std::vector<LayerReconstruction<T>> out;
  Tensor<T> prefix(quant.input.shape());
  Tensor<T> prev = ae.decode_frame(prefix);
  for (int k = 0; k < quant.layers(); ++k) {
    prefix += quant.codeword_grids[k];
    Tensor<T> cur = ae.decode_frame(prefix);
    const int h = cur.dim(0), w = cur.dim(1), c = cur.dim(2);
    Tensor<T> heat({h, w, 1});
    T peak{};
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T acc{};
        for (int ch = 0; ch < c; ++ch) acc += std::abs(cur(y, x, ch) - prev(y, x, ch));
        heat(y, x, 0) = acc / static_cast<T>(c);
        peak = std::max(peak, heat(y, x, 0));
      }
    if (peak > T{})
      for (auto& v : heat.values()) v = std::clamp(v / peak, T{}, T(1));
    out.push_back({cur, std::move(heat)});
    prev = std::move(cur);
  }
  return out;
}

}  // namespace shrvq
