#pragma once

#include <cmath>
#include <vector>

#include "shrvq/nn/layers.hpp"

namespace shrvq::nn {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam over a fixed parameter list. Moment buffers are indexed like the
/// list, so the list order must not change between steps.
template <class T>
class Adam {
 public:
  Adam(ParamList<T> params, AdamOptions opt) : params_(std::move(params)), opt_(opt) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.size(), 0.0);
      v_.emplace_back(p->value.size(), 0.0);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  /// Apply one update using grad * scale as the gradient.
  void step(double scale = 1.0) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double step_size = opt_.lr / c1;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& val = params_[k]->value;
      const auto& grad = params_[k]->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < val.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * scale;
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * g * g;
        val[i] -= static_cast<T>(step_size * m[i] / (std::sqrt(v[i] / c2) + opt_.eps));
      }
    }
  }

  long steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }

 private:
  ParamList<T> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace shrvq::nn
