#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shrvq/binary.hpp"
#include "shrvq/checksum.hpp"
#include "shrvq/error.hpp"
#include "shrvq/nn/layers.hpp"
#include "shrvq/random.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// Ordered list of codewords (M rows of dimension D) borrowed from a tree.
template <class T>
struct CodebookView {
  std::span<const T> data;
  int size = 0;
  int dim = 0;

  std::span<const T> codeword(int k) const {
    return data.subspan(static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim));
  }
};

/// Per-layer codeword indices chosen at one latent position, layer 1 first.
using CodePath = std::vector<int>;

/// Index grid Q for one hierarchy layer; indices are zero-based.
struct CodeGrid {
  int layer = 0;
  int height = 0;
  int width = 0;
  std::vector<int> values;

  CodeGrid() = default;
  CodeGrid(int l, int h, int w, int fill = 0)
      : layer(l), height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  int& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  int at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return values.size(); }

  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

/// Hierarchy of codebooks: layer i (zero-based) holds M^i codebooks of M
/// codewords in R^D. The codebook used at layer i is addressed by the
/// mixed-radix value of the indices chosen at layers 0..i-1, the first
/// layer's digit being the most significant.
template <class T>
class CodebookTree {
 public:
  /// Upper bound on stored codewords per layer.
  static constexpr std::uint64_t kMaxCodewordsPerLayer = std::uint64_t{1} << 24;

  CodebookTree() = default;

  /// Builds a tree with codewords drawn from init_samples (with replacement)
  /// when given, otherwise from N(0, 0.02^2).
  static CodebookTree build(int layers, int branch, int dim, std::uint64_t seed,
                            std::span<const std::vector<T>> init_samples = {}) {
    if (layers < 1) throw ParameterError("codebook tree needs at least one layer");
    if (branch < 2) throw ParameterError("codebook size M must be at least 2");
    if (dim < 1) throw ParameterError("codeword dimension must be positive");
    for (const auto& s : init_samples) {
      if (static_cast<int>(s.size()) != dim) {
        throw ShapeError("init sample has dimension " + std::to_string(s.size()) +
                         ", tree dimension is " + std::to_string(dim));
      }
    }
    CodebookTree t;
    t.layers_ = layers;
    t.branch_ = branch;
    t.dim_ = dim;
    t.seed_ = seed;
    std::uint64_t books = 1;
    for (int i = 0; i < layers; ++i) {
      const std::uint64_t words = books * static_cast<std::uint64_t>(branch);
      if (words > kMaxCodewordsPerLayer) {
        throw ParameterError("codebook tree too large at layer " + std::to_string(i + 1));
      }
      t.book_counts_.push_back(books);
      t.words_.emplace_back("tree.layer" + std::to_string(i),
                            Shape{static_cast<int>(words), dim});
      books = words;
    }
    Rng rng(seed);
    for (auto& layer : t.words_) {
      auto& v = layer.value;
      if (!init_samples.empty()) {
        for (int w = 0; w < v.dim(0); ++w) {
          const auto& s = init_samples[rng.index(init_samples.size())];
          std::copy(s.begin(), s.end(), v.data() + static_cast<std::size_t>(w) * dim);
        }
      } else {
        for (auto& x : v.values()) x = static_cast<T>(rng.normal(0.0, 0.02));
      }
    }
    return t;
  }

  int layers() const { return layers_; }
  int branch() const { return branch_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  /// Number of codebooks at zero-based layer i (M^i).
  std::uint64_t codebook_count(int layer) const { return book_counts_.at(check_layer(layer)); }
  /// Number of codewords at zero-based layer i (M^(i+1)).
  std::uint64_t codeword_count(int layer) const {
    return codebook_count(layer) * static_cast<std::uint64_t>(branch_);
  }

  CodebookView<T> codebook(int layer, std::uint64_t book) const {
    check_layer(layer);
    if (book >= book_counts_[layer]) {
      throw IndexError("codebook " + std::to_string(book) + " out of range at layer " +
                       std::to_string(layer + 1));
    }
    const auto& v = words_[layer].value;
    const std::size_t stride = static_cast<std::size_t>(branch_) * dim_;
    return {std::span<const T>(v.data() + book * stride, stride), branch_, dim_};
  }

  /// Mixed-radix codebook address of a path at the layer following it.
  std::uint64_t codebook_index(std::span<const int> path) const {
    std::uint64_t idx = 0;
    for (int d : path) {
      if (d < 0 || d >= branch_) {
        throw IndexError("path digit " + std::to_string(d) + " outside [0, " +
                         std::to_string(branch_) + ")");
      }
      idx = idx * static_cast<std::uint64_t>(branch_) + static_cast<std::uint64_t>(d);
    }
    return idx;
  }

  /// Codebook selected at zero-based layer i by the i indices chosen before it.
  CodebookView<T> codebook_for_path(int layer, std::span<const int> path) const {
    check_layer(layer);
    if (static_cast<int>(path.size()) != layer) {
      throw PathError("layer " + std::to_string(layer + 1) + " needs a path of length " +
                      std::to_string(layer) + ", got " + std::to_string(path.size()));
    }
    return codebook(layer, codebook_index(path));
  }

  std::span<const T> codeword(int layer, std::uint64_t book, int k) const {
    return codebook(layer, book).codeword(k);
  }
  std::span<T> mutable_codeword(int layer, std::uint64_t book, int k) {
    check_layer(layer);
    auto& v = words_[layer].value;
    const std::size_t row = book * static_cast<std::size_t>(branch_) + static_cast<std::size_t>(k);
    return std::span<T>(v.data() + row * dim_, static_cast<std::size_t>(dim_));
  }

  /// Layer storage as a (M^(i+1), D) trainable tensor.
  nn::Param<T>& layer_param(int layer) { return words_.at(check_layer(layer)); }
  const nn::Param<T>& layer_param(int layer) const { return words_.at(check_layer(layer)); }

  nn::ParamList<T> params() {
    nn::ParamList<T> p;
    for (auto& l : words_) p.push_back(&l);
    return p;
  }

  bool all_finite_codewords() const {
    for (const auto& l : words_)
      if (!all_finite(l.value.values())) return false;
    return true;
  }

  /// Checksum over the structure and every codeword bit pattern.
  std::string checksum() const {
    Fnv1a h;
    const std::int64_t header[4] = {layers_, branch_, dim_, static_cast<std::int64_t>(seed_)};
    h.update(header, sizeof header);
    for (const auto& l : words_) h.update_values(l.value.values());
    return h.hex();
  }

  friend bool operator==(const CodebookTree& a, const CodebookTree& b) {
    if (a.layers_ != b.layers_ || a.branch_ != b.branch_ || a.dim_ != b.dim_ || a.seed_ != b.seed_)
      return false;
    for (int i = 0; i < a.layers_; ++i)
      if (!(a.words_[i].value == b.words_[i].value)) return false;
    return true;
  }

  template <class U>
  CodebookTree<U> cast() const {
    auto out = CodebookTree<U>::build(layers_, branch_, dim_, seed_);
    for (int i = 0; i < layers_; ++i) out.layer_param(i).value = words_[i].value.template cast<U>();
    return out;
  }

 private:
  int check_layer(int layer) const {
    if (layer < 0 || layer >= layers_) {
      throw IndexError("layer " + std::to_string(layer + 1) + " outside [1, " +
                       std::to_string(layers_) + "]");
    }
    return layer;
  }

  int layers_ = 0;
  int branch_ = 0;
  int dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint64_t> book_counts_;
  std::vector<nn::Param<T>> words_;
};

struct QuantizeResult {
  int index = -1;
  double distance2 = 0.0;
};

/// Nearest codeword in L2; ties go to the smallest index.
template <class T>
QuantizeResult quantize_element(std::span<const T> residual, const CodebookView<T>& book) {
  if (book.size <= 0) throw StructureError("cannot quantize against an empty codebook");
  if (static_cast<int>(residual.size()) != book.dim) {
    throw ShapeError("residual dimension " + std::to_string(residual.size()) +
                     " does not match codeword dimension " + std::to_string(book.dim));
  }
  for (T v : residual)
    if (!std::isfinite(v)) throw InputError("residual contains a non-finite value");
  QuantizeResult best;
  best.distance2 = std::numeric_limits<double>::infinity();
  for (int k = 0; k < book.size; ++k) {
    const auto cw = book.codeword(k);
    double d2 = 0.0;
    for (int j = 0; j < book.dim; ++j) {
      const double diff = static_cast<double>(residual[j]) - static_cast<double>(cw[j]);
      d2 += diff * diff;
    }
    if (d2 < best.distance2) {
      best.distance2 = d2;
      best.index = k;
    }
  }
  return best;
}

/// Result of quantizing a latent grid through every layer of the tree.
template <class T>
struct QuantizationOutput {
  Tensor<T> input;                          // z (xi^0), H x W x D
  std::vector<CodeGrid> code_grids;         // Q^i
  std::vector<std::vector<std::uint64_t>> codebook_grids;  // codebook used at each position
  std::vector<Tensor<T>> codeword_grids;    // e^i
  std::vector<Tensor<T>> residual_grids;    // xi^i for i = 1..n
  Tensor<T> combined;                       // e_C

  int layers() const { return static_cast<int>(code_grids.size()); }
  /// xi^i for i in [0, n]; xi^0 is the encoder output.
  const Tensor<T>& residual(int i) const { return i == 0 ? input : residual_grids.at(i - 1); }
};

namespace detail {

template <class T>
void check_latent(const CodebookTree<T>& tree, const Tensor<T>& z) {
  if (z.rank() != 3 || z.dim(2) != tree.dim()) {
    throw ShapeError("latent grid " + shape_str(z.shape()) + " does not match codeword dimension " +
                     std::to_string(tree.dim()));
  }
}

}  // namespace detail

/// Greedy residual quantization through the codebook hierarchy.
template <class T>
QuantizationOutput<T> hierarchical_quantize(const CodebookTree<T>& tree, const Tensor<T>& z) {
  detail::check_latent(tree, z);
  const int h = z.dim(0), w = z.dim(1), d = z.dim(2), n = tree.layers();
  QuantizationOutput<T> out;
  out.input = z;
  out.combined = Tensor<T>(z.shape());
  for (int i = 0; i < n; ++i) {
    out.code_grids.emplace_back(i, h, w);
    out.codebook_grids.emplace_back(static_cast<std::size_t>(h) * w, 0);
    out.codeword_grids.emplace_back(z.shape());
    out.residual_grids.emplace_back(z.shape());
  }
  std::vector<T> residual(static_cast<std::size_t>(d));
  for (int pos = 0; pos < h * w; ++pos) {
    const std::size_t off = static_cast<std::size_t>(pos) * d;
    std::copy(z.data() + off, z.data() + off + d, residual.begin());
    std::uint64_t book = 0;
    T* acc = out.combined.data() + off;
    for (int i = 0; i < n; ++i) {
      const auto view = tree.codebook(i, book);
      const auto q = quantize_element<T>(residual, view);
      const auto cw = view.codeword(q.index);
      out.code_grids[i].values[pos] = q.index;
      out.codebook_grids[i][pos] = book;
      T* e = out.codeword_grids[i].data() + off;
      T* xi = out.residual_grids[i].data() + off;
      for (int j = 0; j < d; ++j) {
        e[j] = cw[j];
        residual[j] -= cw[j];
        xi[j] = residual[j];
        acc[j] += cw[j];
      }
      book = book * static_cast<std::uint64_t>(tree.branch()) + static_cast<std::uint64_t>(q.index);
    }
  }
  return out;
}

/// Codebook addresses implied by a stack of code grids (one per layer).
template <class T>
std::vector<std::vector<std::uint64_t>> codebook_addresses(const CodebookTree<T>& tree,
                                                           std::span<const CodeGrid> grids) {
  if (static_cast<int>(grids.size()) != tree.layers()) {
    throw ShapeError("expected " + std::to_string(tree.layers()) + " code grids, got " +
                     std::to_string(grids.size()));
  }
  const int h = grids[0].height, w = grids[0].width;
  std::vector<std::vector<std::uint64_t>> books(grids.size(),
                                                std::vector<std::uint64_t>(static_cast<std::size_t>(h) * w));
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i].height != h || grids[i].width != w || grids[i].values.size() != static_cast<std::size_t>(h) * w) {
      throw ShapeError("code grids have inconsistent shapes");
    }
  }
  for (int pos = 0; pos < h * w; ++pos) {
    std::uint64_t book = 0;
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const int k = grids[i].values[pos];
      if (k < 0 || k >= tree.branch()) {
        throw IndexError("code index " + std::to_string(k) + " outside [0, " +
                         std::to_string(tree.branch()) + ") at layer " + std::to_string(i + 1));
      }
      books[i][pos] = book;
      book = book * static_cast<std::uint64_t>(tree.branch()) + static_cast<std::uint64_t>(k);
    }
  }
  return books;
}

/// Sum of the codewords addressed by the code grids at each position (e_C),
/// optionally restricted to the first `prefix` layers.
template <class T>
Tensor<T> lookup(const CodebookTree<T>& tree, std::span<const CodeGrid> grids,
                 std::optional<int> prefix = std::nullopt) {
  const auto books = codebook_addresses(tree, grids);
  const int use = prefix.value_or(tree.layers());
  if (use < 0 || use > tree.layers()) throw ParameterError("layer prefix out of range");
  const int h = grids[0].height, w = grids[0].width, d = tree.dim();
  Tensor<T> out({h, w, d});
  for (int pos = 0; pos < h * w; ++pos) {
    T* acc = out.data() + static_cast<std::size_t>(pos) * d;
    for (int i = 0; i < use; ++i) {
      const auto cw = tree.codeword(i, books[i][pos], grids[i].values[pos]);
      for (int j = 0; j < d; ++j) acc[j] += cw[j];
    }
  }
  return out;
}

/// Per-layer codeword usage, indexed like the layer storage rows.
using UsageCounts = std::vector<std::vector<std::uint64_t>>;

template <class T>
UsageCounts make_usage(const CodebookTree<T>& tree) {
  UsageCounts u;
  for (int i = 0; i < tree.layers(); ++i) u.emplace_back(tree.codeword_count(i), 0);
  return u;
}

template <class T>
void accumulate_usage(const QuantizationOutput<T>& q, int branch, UsageCounts& usage) {
  for (int i = 0; i < q.layers(); ++i)
    for (std::size_t pos = 0; pos < q.code_grids[i].size(); ++pos)
      ++usage[i][q.codebook_grids[i][pos] * branch + q.code_grids[i].values[pos]];
}

/// Candidate replacement for a dead codeword: a residual xi^(i-1) observed
/// at a position routed to `codebook` of its layer.
template <class T>
struct ReseedDonor {
  std::uint64_t codebook = 0;
  std::vector<T> vector;
};

template <class T>
using DonorPool = std::vector<std::vector<ReseedDonor<T>>>;

/// Collect residual donors for every layer from a quantization result.
template <class T>
void collect_donors(const QuantizationOutput<T>& q, DonorPool<T>& pool) {
  if (pool.size() < static_cast<std::size_t>(q.layers())) pool.resize(q.layers());
  const int d = q.input.dim(2);
  for (int i = 0; i < q.layers(); ++i) {
    const auto& xi = q.residual(i);
    for (std::size_t pos = 0; pos < q.code_grids[i].size(); ++pos) {
      const T* p = xi.data() + pos * d;
      pool[i].push_back({q.codebook_grids[i][pos], std::vector<T>(p, p + d)});
    }
  }
}

/// Replace every zero-usage codeword with a random donor. Donors routed to
/// the same codebook are preferred; otherwise any donor of that layer is used.
template <class T>
CodebookTree<T> reseed_dead_codewords(CodebookTree<T> tree, const UsageCounts& usage,
                                      const DonorPool<T>& donors, std::uint64_t seed) {
  if (static_cast<int>(usage.size()) != tree.layers()) {
    throw ShapeError("usage counts do not cover every layer");
  }
  Rng rng(seed);
  for (int i = 0; i < tree.layers(); ++i) {
    if (usage[i].size() != tree.codeword_count(i)) throw ShapeError("usage counts have wrong size");
    const std::vector<ReseedDonor<T>> empty;
    const auto& layer_donors = static_cast<std::size_t>(i) < donors.size() ? donors[i] : empty;
    std::vector<std::vector<std::size_t>> by_book;
    bool indexed = false;
    for (std::uint64_t row = 0; row < usage[i].size(); ++row) {
      if (usage[i][row] != 0) continue;
      if (layer_donors.empty()) {
        throw ReseedError("layer " + std::to_string(i + 1) +
                          " has dead codewords but no donor samples");
      }
      if (!indexed) {
        by_book.assign(tree.codebook_count(i), {});
        for (std::size_t k = 0; k < layer_donors.size(); ++k) {
          if (layer_donors[k].codebook < by_book.size()) by_book[layer_donors[k].codebook].push_back(k);
        }
        indexed = true;
      }
      const std::uint64_t book = row / tree.branch();
      const auto& local = by_book[book];
      const std::size_t pick = local.empty() ? rng.index(layer_donors.size()) : local[rng.index(local.size())];
      const auto& donor = layer_donors[pick].vector;
      if (static_cast<int>(donor.size()) != tree.dim()) throw ShapeError("donor has wrong dimension");
      auto cw = tree.mutable_codeword(i, book, static_cast<int>(row % tree.branch()));
      std::copy(donor.begin(), donor.end(), cw.begin());
    }
  }
  return tree;
}

/// Binary tree blob: u32 n, u32 M, u32 D, u64 seed, u64 count, then count
/// float32 values in layer-major, codebook-major, codeword-major order.
template <class T>
std::string encode_tree(const CodebookTree<T>& tree) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(tree.layers()));
  w.u32(static_cast<std::uint32_t>(tree.branch()));
  w.u32(static_cast<std::uint32_t>(tree.dim()));
  w.u64(tree.seed());
  std::uint64_t count = 0;
  for (int i = 0; i < tree.layers(); ++i) count += tree.layer_param(i).value.size();
  w.u64(count);
  for (int i = 0; i < tree.layers(); ++i)
    for (T v : tree.layer_param(i).value.values()) w.f32(static_cast<float>(v));
  return w.take();
}

template <class T>
CodebookTree<T> decode_tree(std::string_view blob) {
  ByteReader r(blob);
  const int n = static_cast<int>(r.u32());
  const int m = static_cast<int>(r.u32());
  const int d = static_cast<int>(r.u32());
  const std::uint64_t seed = r.u64();
  const std::uint64_t count = r.u64();
  auto tree = CodebookTree<T>::build(n, m, d, seed);
  std::uint64_t expected = 0;
  for (int i = 0; i < n; ++i) expected += tree.layer_param(i).value.size();
  if (count != expected) throw FormatError("tree blob codeword count does not match structure");
  for (int i = 0; i < n; ++i)
    for (auto& v : tree.layer_param(i).value.values()) v = static_cast<T>(r.f32());
  if (!r.at_end()) throw FormatError("trailing bytes after tree blob");
  return tree;
}

}  // namespace shrvq
