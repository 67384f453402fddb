#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "shrvq/codebook_tree.hpp"
#include "shrvq/tensor.hpp"

namespace shrvq {

/// Loss terms of the hierarchical objective. Index 0 of the term lists is
/// the combined-embedding pair (e_C against xi^0); index i >= 1 is layer i.
/// Every squared norm is averaged over the elements of its tensor.
struct LossBreakdown {
  double total = 0.0;
  double reconstruction = 0.0;
  std::vector<double> codebook_terms;
  std::vector<double> commitment_terms;

  std::size_t term_count() const { return 1 + codebook_terms.size() + commitment_terms.size(); }
};

template <class T>
struct LossGradients {
  Tensor<T> d_reconstruction;         // dL/dx_hat
  Tensor<T> d_latent;                 // dL/dz through the commitment terms
  std::vector<Tensor<T>> d_codewords; // dL/de^i per layer, H x W x D
};

namespace detail {

template <class T>
double mean_sq_diff(const T* a, const T* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

template <class T>
void check_betas(const QuantizationOutput<T>& q, const std::vector<double>& betas) {
  if (static_cast<int>(betas.size()) != q.layers() + 1) {
    throw ParameterError("expected " + std::to_string(q.layers() + 1) + " beta weights, got " +
                         std::to_string(betas.size()));
  }
}

}  // namespace detail

///   ||x - x_hat||^2 + ||sg[xi^0] - e_C||^2 + beta_0 ||sg[e_C] - xi^0||^2
///   + sum_i ( ||sg[xi^(i-1)] - e^i||^2 + beta_i ||sg[e^i] - xi^(i-1)||^2 )
template <class T>
LossBreakdown hrvqvae_loss(const Tensor<T>& x, const Tensor<T>& x_hat,
                           const QuantizationOutput<T>& q, const std::vector<double>& betas) {
  detail::check_betas(q, betas);
  x.check_same(x_hat, "reconstruction loss");
  q.input.check_same(q.combined, "combined-embedding loss");
  LossBreakdown lb;
  lb.reconstruction = detail::mean_sq_diff(x.data(), x_hat.data(), x.size());
  const std::size_t n = q.input.size();
  const double c0 = detail::mean_sq_diff(q.input.data(), q.combined.data(), n);
  lb.codebook_terms.push_back(c0);
  lb.commitment_terms.push_back(betas[0] * c0);
  for (int i = 0; i < q.layers(); ++i) {
    const double ci = detail::mean_sq_diff(q.residual(i).data(), q.codeword_grids[i].data(), n);
    lb.codebook_terms.push_back(ci);
    lb.commitment_terms.push_back(betas[i + 1] * ci);
  }
  lb.total = lb.reconstruction;
  for (double v : lb.codebook_terms) lb.total += v;
  for (double v : lb.commitment_terms) lb.total += v;
  return lb;
}

/// Analytic gradients under stop-gradient semantics. Residuals xi^(i-1) are
/// differentiated through z only; earlier codewords inside a residual are
/// treated as constants, so codewords learn solely from their own codebook
/// terms and the combined term.
template <class T>
LossGradients<T> hrvqvae_loss_gradients(const Tensor<T>& x, const Tensor<T>& x_hat,
                                        const QuantizationOutput<T>& q,
                                        const std::vector<double>& betas) {
  detail::check_betas(q, betas);
  x.check_same(x_hat, "reconstruction loss");
  LossGradients<T> g;
  g.d_reconstruction = Tensor<T>(x.shape());
  const double rx = 2.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    g.d_reconstruction[i] = static_cast<T>(rx * (static_cast<double>(x_hat[i]) - x[i]));

  const std::size_t n = q.input.size();
  const double rz = 2.0 / static_cast<double>(n);
  g.d_latent = Tensor<T>(q.input.shape());
  for (int i = 0; i < q.layers(); ++i) g.d_codewords.emplace_back(q.input.shape());
  for (std::size_t k = 0; k < n; ++k) {
    const double diff0 = static_cast<double>(q.combined[k]) - q.input[k];
    double dz = betas[0] * rz * (-diff0);
    for (int i = 0; i < q.layers(); ++i) {
      const double di = static_cast<double>(q.codeword_grids[i][k]) - q.residual(i)[k];
      g.d_codewords[i][k] = static_cast<T>(rz * (di + diff0));
      dz += betas[i + 1] * rz * (-di);
    }
    g.d_latent[k] = static_cast<T>(dz);
  }
  return g;
}

/// Scatter per-position codeword gradients into the tree's layer gradients.
template <class T>
void scatter_codeword_gradients(CodebookTree<T>& tree, const QuantizationOutput<T>& q,
                                const std::vector<Tensor<T>>& d_codewords) {
  const int d = tree.dim();
  for (int i = 0; i < q.layers(); ++i) {
    auto& grad = tree.layer_param(i).grad;
    for (std::size_t pos = 0; pos < q.code_grids[i].size(); ++pos) {
      const std::size_t row = q.codebook_grids[i][pos] * tree.branch() + q.code_grids[i].values[pos];
      const T* src = d_codewords[i].data() + pos * d;
      T* dst = grad.data() + row * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  }
}

}  // namespace shrvq
