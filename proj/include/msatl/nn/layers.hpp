#pragma once

#include "msatl/rng.hpp"
#include "msatl/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace msatl::nn {

template <typename T>
struct ParamRef {
  std::string name;
  T* value = nullptr;
  T* grad = nullptr;
  std::size_t size = 0;
};

template <typename T>
using ParamRegistry = std::vector<ParamRef<T>>;

template <typename T>
inline void he_uniform_fill(std::vector<T>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (T& x : w) x = static_cast<T>(rng.uniform(-limit, limit));
}

// --- 2d convolution, stride 1, SAME padding ---------------------------------
//
// Weights live in a (R x out_c) column-major buffer, R = in_c*k*k, so the
// whole forward pass is one GEMM against the im2col matrix: y = cols * W.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int out_c, int ksize, Rng& rng)
      : in_c_(in_c), out_c_(out_c), ksize_(ksize) {
    if (ksize != 1 && ksize != 3)
      throw std::invalid_argument("Conv2d: kernel size must be 1 or 3");
    w.resize(static_cast<std::size_t>(rows()) * out_c);
    b.assign(out_c, T(0));
    gw.assign(w.size(), T(0));
    gb.assign(out_c, T(0));
    he_uniform_fill(w, rows(), rng);
  }

  struct Cache {
    Mat<T> cols;  // K x R
    int h = 0, w = 0;
  };

  void forward(const Tensor<T>& x, Tensor<T>& y, Cache& c) const {
    if (x.c != in_c_) throw std::invalid_argument("Conv2d: channel mismatch");
    const int k = x.k();
    y.resize(out_c_, x.h, x.w);
    c.h = x.h;
    c.w = x.w;
    c.cols.resize(k, rows());
    im2col(x, c.cols);
    Eigen::Map<const Mat<T>> wm(w.data(), rows(), out_c_);
    Eigen::Map<const Vec<T>> bm(b.data(), out_c_);
    y.kxc().noalias() = c.cols * wm;
    y.kxc().rowwise() += bm.transpose();
  }

  // accumulates parameter gradients; accumulates into *dx when given
  void backward(const Cache& c, const Tensor<T>& dy, Tensor<T>* dx) {
    const int k = c.h * c.w;
    Eigen::Map<Mat<T>> gwm(gw.data(), rows(), out_c_);
    gwm.noalias() += c.cols.transpose() * dy.kxc();
    Eigen::Map<Vec<T>> gbm(gb.data(), out_c_);
    gbm.noalias() += dy.kxc().colwise().sum().transpose();
    if (!dx) return;
    Eigen::Map<const Mat<T>> wm(w.data(), rows(), out_c_);
    Mat<T> dcols(k, rows());
    dcols.noalias() = dy.kxc() * wm.transpose();
    dx->resize(in_c_, c.h, c.w);
    col2im(dcols, *dx);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + ".weight", w.data(), gw.data(), w.size()});
    reg.push_back({prefix + ".bias", b.data(), gb.data(), b.size()});
  }

  int in_channels() const { return in_c_; }
  int out_channels() const { return out_c_; }
  int rows() const { return in_c_ * ksize_ * ksize_; }

  std::vector<T> w, b, gw, gb;

 private:
  void im2col(const Tensor<T>& x, Mat<T>& cols) const {
    const int h = x.h, wd = x.w, pad = (ksize_ - 1) / 2;
    for (int ci = 0; ci < in_c_; ++ci)
      for (int dy = 0; dy < ksize_; ++dy)
        for (int dx = 0; dx < ksize_; ++dx) {
          T* col = cols.data() +
                   static_cast<std::size_t>((ci * ksize_ + dy) * ksize_ + dx) * h * wd;
          for (int y = 0; y < h; ++y) {
            const int sy = y + dy - pad;
            T* row = col + static_cast<std::size_t>(y) * wd;
            if (sy < 0 || sy >= h) {
              std::fill(row, row + wd, T(0));
              continue;
            }
            const T* src = &x.v[(static_cast<std::size_t>(ci) * h + sy) * wd];
            for (int xx = 0; xx < wd; ++xx) {
              const int sx = xx + dx - pad;
              row[xx] = (sx < 0 || sx >= wd) ? T(0) : src[sx];
            }
          }
        }
  }

  void col2im(const Mat<T>& dcols, Tensor<T>& dx) const {
    const int h = dx.h, wd = dx.w, pad = (ksize_ - 1) / 2;
    for (int ci = 0; ci < in_c_; ++ci)
      for (int dy = 0; dy < ksize_; ++dy)
        for (int dxo = 0; dxo < ksize_; ++dxo) {
          const T* col = dcols.data() +
                         static_cast<std::size_t>((ci * ksize_ + dy) * ksize_ + dxo) * h * wd;
          for (int y = 0; y < h; ++y) {
            const int sy = y + dy - pad;
            if (sy < 0 || sy >= h) continue;
            const T* row = col + static_cast<std::size_t>(y) * wd;
            T* dst = &dx.v[(static_cast<std::size_t>(ci) * h + sy) * wd];
            for (int xx = 0; xx < wd; ++xx) {
              const int sx = xx + dxo - pad;
              if (sx >= 0 && sx < wd) dst[sx] += row[xx];
            }
          }
        }
  }

  int in_c_ = 0, out_c_ = 0, ksize_ = 3;
};

// --- leaky ReLU ---------------------------------------------------------------
//
// Applied in place; the backward pass recovers the input sign from the output
// (the slope is positive, so signs agree).
template <typename T>
struct LeakyReLU {
  static constexpr T kSlope = T(0.01);

  static void forward_inplace(Tensor<T>& x) {
    for (T& v : x.v)
      if (v < T(0)) v *= kSlope;
  }

  static void backward_from_output(const Tensor<T>& y, Tensor<T>& d) {
    for (std::size_t i = 0; i < d.v.size(); ++i)
      if (y.v[i] < T(0)) d.v[i] *= kSlope;
  }
};

// --- 2x2 max pooling, stride 2 -------------------------------------------------
template <typename T>
struct MaxPool2x2 {
  struct Cache {
    std::vector<std::uint8_t> argmax;  // 0..3, first max wins
    int c = 0, h = 0, w = 0;           // input dims
  };

  static void forward(const Tensor<T>& x, Tensor<T>& y, Cache& cc) {
    if (x.h % 2 != 0 || x.w % 2 != 0)
      throw std::invalid_argument("MaxPool2x2: odd input size");
    const int oh = x.h / 2, ow = x.w / 2;
    y.resize(x.c, oh, ow);
    cc.c = x.c;
    cc.h = x.h;
    cc.w = x.w;
    cc.argmax.assign(static_cast<std::size_t>(x.c) * oh * ow, 0);
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          T best = x.at(c, 2 * yy, 2 * xx);
          std::uint8_t arg = 0;
          for (std::uint8_t idx = 1; idx < 4; ++idx) {
            const T v = x.at(c, 2 * yy + idx / 2, 2 * xx + idx % 2);
            if (v > best) {
              best = v;
              arg = idx;
            }
          }
          y.at(c, yy, xx) = best;
          cc.argmax[(static_cast<std::size_t>(c) * oh + yy) * ow + xx] = arg;
        }
  }

  static void backward(const Cache& cc, const Tensor<T>& dy, Tensor<T>& dx) {
    dx.resize(cc.c, cc.h, cc.w);
    const int oh = cc.h / 2, ow = cc.w / 2;
    for (int c = 0; c < cc.c; ++c)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          const std::uint8_t arg =
              cc.argmax[(static_cast<std::size_t>(c) * oh + yy) * ow + xx];
          dx.at(c, 2 * yy + arg / 2, 2 * xx + arg % 2) += dy.at(c, yy, xx);
        }
  }
};

// --- nearest-neighbour 2x upsampling -------------------------------------------
template <typename T>
struct UpsampleNearest2x {
  static void forward(const Tensor<T>& x, Tensor<T>& y) {
    y.resize(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx) {
          const T v = x.at(c, yy, xx);
          y.at(c, 2 * yy, 2 * xx) = v;
          y.at(c, 2 * yy, 2 * xx + 1) = v;
          y.at(c, 2 * yy + 1, 2 * xx) = v;
          y.at(c, 2 * yy + 1, 2 * xx + 1) = v;
        }
  }

  static void backward(const Tensor<T>& dy, Tensor<T>& dx) {
    dx.resize(dy.c, dy.h / 2, dy.w / 2);
    for (int c = 0; c < dx.c; ++c)
      for (int yy = 0; yy < dx.h; ++yy)
        for (int xx = 0; xx < dx.w; ++xx)
          dx.at(c, yy, xx) += dy.at(c, 2 * yy, 2 * xx) +
                              dy.at(c, 2 * yy, 2 * xx + 1) +
                              dy.at(c, 2 * yy + 1, 2 * xx) +
                              dy.at(c, 2 * yy + 1, 2 * xx + 1);
  }
};

// --- fully connected -----------------------------------------------------------
template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(int in_n, int out_n, Rng& rng) : in_n_(in_n), out_n_(out_n) {
    w.resize(static_cast<std::size_t>(in_n) * out_n);
    b.assign(out_n, T(0));
    gw.assign(w.size(), T(0));
    gb.assign(out_n, T(0));
    he_uniform_fill(w, in_n, rng);
  }

  struct Cache {
    Vec<T> x;
  };

  void forward(const Vec<T>& x, Vec<T>& y, Cache& c) const {
    c.x = x;
    Eigen::Map<const Mat<T>> wm(w.data(), in_n_, out_n_);  // stores W^T
    Eigen::Map<const Vec<T>> bm(b.data(), out_n_);
    y.noalias() = wm.transpose() * x;
    y += bm;
  }

  void backward(const Cache& c, const Vec<T>& dy, Vec<T>* dx) {
    Eigen::Map<Mat<T>> gwm(gw.data(), in_n_, out_n_);
    gwm.noalias() += c.x * dy.transpose();
    Eigen::Map<Vec<T>> gbm(gb.data(), out_n_);
    gbm += dy;
    if (!dx) return;
    Eigen::Map<const Mat<T>> wm(w.data(), in_n_, out_n_);
    dx->noalias() = wm * dy;
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + ".weight", w.data(), gw.data(), w.size()});
    reg.push_back({prefix + ".bias", b.data(), gb.data(), b.size()});
  }

  int in_features() const { return in_n_; }
  int out_features() const { return out_n_; }

  std::vector<T> w, b, gw, gb;

 private:
  int in_n_ = 0, out_n_ = 0;
};

// --- global average pooling ------------------------------------------------------
template <typename T>
struct GlobalAvgPool {
  static void forward(const Tensor<T>& x, Vec<T>& y) {
    y = x.kxc().colwise().mean().transpose();
  }

  static void backward(const Vec<T>& dy, Tensor<T>& dx) {
    // dx must already have the input shape
    const T scale = T(1) / static_cast<T>(dx.k());
    dx.kxc().rowwise() += (dy * scale).transpose();
  }
};

}  // namespace msatl::nn
