#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#include "shrvq/binary.hpp"
#include "shrvq/checksum.hpp"
#include "shrvq/pipeline.hpp"

namespace shrvq {

inline constexpr std::string_view kCheckpointMagic = "SHRVQ-CKPT-1\n";

/// Named sections, each followed by the FNV-1a hash of its payload.
class SectionFile {
 public:
  void add(const std::string& name, std::string payload) { sections_.emplace_back(name, std::move(payload)); }

  std::string encode() const {
    ByteWriter w;
    w.raw(kCheckpointMagic);
    w.u32(static_cast<std::uint32_t>(sections_.size()));
    for (const auto& [name, payload] : sections_) {
      w.str(name);
      w.u64(payload.size());
      w.raw(payload);
      Fnv1a h;
      h.update(payload);
      w.u64(h.digest());
    }
    return w.take();
  }

  static SectionFile decode(std::string_view bytes) {
    ByteReader r(bytes);
    if (bytes.size() < kCheckpointMagic.size() || r.raw(kCheckpointMagic.size()) != kCheckpointMagic)
      throw FormatError("not an SHRVQ-CKPT-1 checkpoint");
    SectionFile f;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      std::string name = r.str();
      const std::uint64_t len = r.u64();
      std::string payload(r.raw(len));
      Fnv1a h;
      h.update(payload);
      if (r.u64() != h.digest()) throw FormatError("checksum mismatch in checkpoint section " + name);
      f.add(name, std::move(payload));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after checkpoint sections");
    return f;
  }

  bool has(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.first == name) return true;
    return false;
  }

  const std::string& get(const std::string& name) const {
    for (const auto& s : sections_)
      if (s.first == name) return s.second;
    throw FormatError("checkpoint lacks section " + name);
  }

 private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

/// u32 count, then per parameter: name, u32 rank, i32 dims, f32 values.
template <class T>
std::string encode_params(const nn::ParamList<T>& ps) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(ps.size()));
  for (const auto* p : ps) {
    w.str(p->name);
    w.u32(static_cast<std::uint32_t>(p->value.rank()));
    for (int d : p->value.shape()) w.i32(d);
    for (T v : p->value.values()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

/// Loads values into an already-built parameter list; names and shapes
/// must match exactly.
template <class T>
void decode_params(std::string_view bytes, const nn::ParamList<T>& ps) {
  ByteReader r(bytes);
  if (r.u32() != ps.size()) throw FormatError("parameter count mismatch");
  for (auto* p : ps) {
    const std::string name = r.str();
    if (name != p->name) throw FormatError("expected parameter " + p->name + ", found " + name);
    Shape s(r.u32());
    for (auto& d : s) d = r.i32();
    if (s != p->value.shape()) throw FormatError("parameter " + name + " has shape " + shape_str(s));
    for (auto& v : p->value.values()) v = static_cast<T>(r.f32());
  }
  if (!r.at_end()) throw FormatError("trailing bytes after parameters");
}

template <class T>
std::string encode_checkpoint(Model<T>& m) {
  SectionFile f;
  f.add("config", m.config.to_kv().to_text());
  f.add("autoencoder.descriptor", m.config.autoencoder().descriptor());
  f.add("autoencoder", encode_params(m.ae.params()));
  f.add("tree", encode_tree(m.tree));
  for (int i = 0; i < m.config.layers; ++i) f.add("astpm." + std::to_string(i), encode_params(m.predictors[i].params()));
  f.add("meta", m.meta.to_text());
  return f.encode();
}

template <class T>
Model<T> decode_checkpoint(std::string_view bytes) {
  const auto f = SectionFile::decode(bytes);
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_kv(KeyValues::parse(f.get("config"), "checkpoint config"));
    cfg.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("bad checkpoint config: ") + e.what());
  }
  Model<T> m = build_model<T>(cfg);
  if (f.get("autoencoder.descriptor") != cfg.autoencoder().descriptor())
    throw FormatError("autoencoder descriptor does not match config");
  decode_params(f.get("autoencoder"), m.ae.params());
  m.tree = decode_tree<T>(f.get("tree"));
  if (m.tree.layers() != cfg.layers || m.tree.branch() != cfg.branch || m.tree.dim() != cfg.latent_dim)
    throw FormatError("tree structure does not match config");
  for (int i = 0; i < cfg.layers; ++i) decode_params(f.get("astpm." + std::to_string(i)), m.predictors[i].params());
  m.meta = KeyValues::parse(f.get("meta"), "checkpoint meta");
  return m;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

template <class T>
void save_checkpoint(const std::string& path, Model<T>& m) {
  write_file(path, encode_checkpoint(m));
}

template <class T>
Model<T> load_checkpoint(const std::string& path) {
  return decode_checkpoint<T>(read_file(path));
}

}  // namespace shrvq
