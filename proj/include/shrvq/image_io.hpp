#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "shrvq/error.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// Reads an 8-bit PNG as an H x W x C tensor in [0,1]. `channels` selects
/// grayscale (1) or RGB (3) output regardless of the file's colour type.
inline Tensor<float> read_png(const std::string& path, int channels) {
  if (channels != 1 && channels != 3) throw ParameterError("PNG frames must have 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read PNG " + path + ": " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path + ": " + img.message);
  }
  Tensor<float> t({static_cast<int>(img.height), static_cast<int>(img.width), channels});
  for (std::size_t i = 0; i < buf.size(); ++i) t[i] = static_cast<float>(buf[i]) / 255.0f;
  return t;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Writes an H x W x C tensor (C = 1 or 3, values in [0,1]) as 8-bit PNG.
template <class T>
void write_png(const std::string& path, const Tensor<T>& frame) {
  if (frame.rank() != 3 || (frame.dim(2) != 1 && frame.dim(2) != 3))
    throw ShapeError("PNG output needs an H x W x 1 or H x W x 3 tensor, got " + shape_str(frame.shape()));
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(frame.dim(1));
  img.height = static_cast<png_uint_32>(frame.dim(0));
  img.format = frame.dim(2) == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<png_byte> buf(frame.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = to_byte(static_cast<double>(frame[i]));
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path + ": " + img.message);
}

/// Bilinear resampling with pixel-centre alignment.
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& in, int out_h, int out_w) {
  const int h = in.dim(0), w = in.dim(1), c = in.dim(2);
  if (h == out_h && w == out_w) return in;
  Tensor<T> out({out_h, out_w, c});
  const double sy = static_cast<double>(h) / out_h, sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double v = (1 - wy) * ((1 - wx) * in(y0, x0, ch) + wx * in(y0, x1, ch)) +
                         wy * ((1 - wx) * in(y1, x0, ch) + wx * in(y1, x1, ch));
        out(y, x, ch) = static_cast<T>(v);
      }
    }
  }
  return out;
}

/// Places frames side by side with a `gap`-pixel white separator.
template <class T>
Tensor<T> hstack(const std::vector<Tensor<T>>& frames, int gap = 2) {
  if (frames.empty()) throw ParameterError("nothing to stack");
  const int h = frames[0].dim(0), c = frames[0].dim(2);
  int w = 0;
  for (const auto& f : frames) {
    if (f.dim(0) != h || f.dim(2) != c) throw ShapeError("stacked frames must share height and channels");
    w += f.dim(1);
  }
  w += gap * (static_cast<int>(frames.size()) - 1);
  Tensor<T> out({h, w, c}, T(1));
  int x0 = 0;
  for (const auto& f : frames) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < f.dim(1); ++x)
        for (int ch = 0; ch < c; ++ch) out(y, x0 + x, ch) = f(y, x, ch);
    x0 += f.dim(1) + gap;
  }
  return out;
}

/// Vertical counterpart of hstack.
template <class T>
Tensor<T> vstack(const std::vector<Tensor<T>>& rows, int gap = 2) {
  if (rows.empty()) throw ParameterError("nothing to stack");
  const int w = rows[0].dim(1), c = rows[0].dim(2);
  int h = 0;
  for (const auto& r : rows) {
    if (r.dim(1) != w || r.dim(2) != c) throw ShapeError("stacked rows must share width and channels");
    h += r.dim(0);
  }
  h += gap * (static_cast<int>(rows.size()) - 1);
  Tensor<T> out({h, w, c}, T(1));
  int y0 = 0;
  for (const auto& r : rows) {
    std::copy(r.data(), r.data() + r.size(), out.data() + static_cast<std::size_t>(y0) * w * c);
    y0 += r.dim(0) + gap;
  }
  return out;
}

namespace detail {

class GifBitWriter {
 public:
  void put(unsigned code, int width) {
    acc_ |= static_cast<std::uint32_t>(code) << nbits_;
    nbits_ += width;
    while (nbits_ >= 8) {
      bytes.push_back(static_cast<char>(acc_ & 0xff));
      acc_ >>= 8;
      nbits_ -= 8;
    }
  }
  void flush() {
    if (nbits_ > 0) bytes.push_back(static_cast<char>(acc_ & 0xff));
    acc_ = 0;
    nbits_ = 0;
  }
  std::string bytes;

 private:
  std::uint32_t acc_ = 0;
  int nbits_ = 0;
};

}  // namespace detail

/// Animated GIF89a writer. Colours map to a fixed palette: 256 gray levels
/// for one-channel frames, 3-3-2 RGB otherwise. Pixel data uses LZW with
/// 9-bit literal codes and a clear code often enough that the code width
/// never grows, which every decoder accepts.
template <class T>
void write_gif(const std::string& path, const std::vector<Tensor<T>>& frames, int delay_cs = 25) {
  if (frames.empty()) throw ParameterError("GIF needs at least one frame");
  const int h = frames[0].dim(0), w = frames[0].dim(1), c = frames[0].dim(2);
  if (h > 65535 || w > 65535) throw ParameterError("GIF frame too large");
  std::string out = "GIF89a";
  auto u16 = [&](int v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
  };
  u16(w);
  u16(h);
  out.push_back(static_cast<char>(0xF7));  // global table, 8 bits, 256 entries
  out.push_back(0);
  out.push_back(0);
  for (int i = 0; i < 256; ++i) {
    if (c == 1) {
      out.append(3, static_cast<char>(i));
    } else {
      out.push_back(static_cast<char>(((i >> 5) & 7) * 255 / 7));
      out.push_back(static_cast<char>(((i >> 2) & 7) * 255 / 7));
      out.push_back(static_cast<char>((i & 3) * 255 / 3));
    }
  }
  const char loop[] = {'\x21', '\xFF', '\x0B', 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E', '2', '.', '0',
                       '\x03', '\x01', '\x00', '\x00', '\x00'};
  out.append(loop, sizeof loop);
  for (const auto& f : frames) {
    if (f.dim(0) != h || f.dim(1) != w || f.dim(2) != c) throw ShapeError("GIF frames must share a shape");
    out.append({'\x21', '\xF9', '\x04', '\x00'});
    u16(delay_cs);
    out.append({'\x00', '\x00'});
    out.push_back(0x2C);
    u16(0);
    u16(0);
    u16(w);
    u16(h);
    out.push_back(0);
    out.push_back(8);  // minimum code size
    detail::GifBitWriter bw;
    constexpr unsigned kClear = 256, kEnd = 257;
    int since_clear = 0;
    bw.put(kClear, 9);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        unsigned idx;
        if (c == 1) {
          idx = to_byte(static_cast<double>(f(y, x, 0)));
        } else {
          const unsigned r = to_byte(static_cast<double>(f(y, x, 0))) >> 5;
          const unsigned g = to_byte(static_cast<double>(f(y, x, 1))) >> 5;
          const unsigned b = to_byte(static_cast<double>(f(y, x, 2))) >> 6;
          idx = (r << 5) | (g << 2) | b;
        }
        if (since_clear == 250) {
          bw.put(kClear, 9);
          since_clear = 0;
        }
        bw.put(idx, 9);
        ++since_clear;
      }
    bw.put(kEnd, 9);
    bw.flush();
    for (std::size_t p = 0; p < bw.bytes.size(); p += 255) {
      const std::size_t n = std::min<std::size_t>(255, bw.bytes.size() - p);
      out.push_back(static_cast<char>(n));
      out.append(bw.bytes, p, n);
    }
    out.push_back(0);
  }
  out.push_back(0x3B);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write GIF " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing GIF " + path);
}

}  // namespace shrvq
