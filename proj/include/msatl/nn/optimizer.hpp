#pragma once

#include "msatl/nn/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace msatl::nn {

// Adam with moment state kept in double regardless of the parameter scalar;
// state is keyed by registry order, which the model guarantees stable.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    if (lr <= 0) throw std::invalid_argument("Adam: learning_rate <= 0");
  }

  void step(ParamRegistry<T>& params) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i].size, 0.0);
        v_[i].assign(params[i].size, 0.0);
      }
    }
    if (m_.size() != params.size())
      throw std::invalid_argument("Adam: registry layout changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& pr = params[i];
      if (m_[i].size() != pr.size)
        throw std::invalid_argument("Adam: parameter size changed");
      for (std::size_t j = 0; j < pr.size; ++j) {
        const double g = static_cast<double>(pr.grad[j]);
        m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * g;
        v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * g * g;
        const double update =
            lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        pr.value[j] -= static_cast<T>(update);
      }
    }
  }

  long steps_taken() const { return t_; }

 private:
  double lr_ = 1e-3, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace msatl::nn
