#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace msatl::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;  // column-major

template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// C x H x W feature map, CHW layout. The buffer doubles as a column-major
// K x C matrix (K = H*W spatial positions, one column per channel), which is
// the view every matrix op in the network uses.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {
    v.assign(static_cast<std::size_t>(c) * h * w, T(0));
  }

  int k() const { return h * w; }
  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  void resize(int c_, int h_, int w_) {
    c = c_;
    h = h_;
    w = w_;
    v.assign(static_cast<std::size_t>(c) * h * w, T(0));
  }

  void set_zero() { std::fill(v.begin(), v.end(), T(0)); }

  T& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  T at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }

  // K x C view (position-major); shares the buffer
  Eigen::Map<Mat<T>> kxc() { return {v.data(), k(), c}; }
  Eigen::Map<const Mat<T>> kxc() const { return {v.data(), k(), c}; }

  bool all_finite() const {
    for (const T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.c != b.c || a.h != b.h || a.w != b.w)
    throw std::invalid_argument(std::string(what) + ": tensor shape mismatch");
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  check_same_shape(dst, src, "add_inplace");
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace msatl::nn
