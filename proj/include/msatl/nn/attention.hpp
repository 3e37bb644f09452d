#pragma once

#include "msatl/nn/layers.hpp"

#include <stdexcept>

namespace msatl::nn {

// Self-attention over the K = h*w positions of a feature map (channels C).
// All four projection buffers store the transposed operator, so every product
// below runs on K-major matrices: F = X*Wf (K x C'), S = G*F^T, M = row
// softmax(S), Y = M*H, X' = Y*Wv, out = mu*X' + X.
template <typename T>
struct AttentionParams {
  int channels = 0;
  int reduced = 0;  // C' = max(1, C/8)
  std::vector<T> w_f, w_g;  // C x C'
  std::vector<T> w_h, w_v;  // C x C
  T mu = T(0);
  std::vector<T> gw_f, gw_g, gw_h, gw_v;
  T gmu = T(0);

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    reg.push_back({prefix + ".w_f", w_f.data(), gw_f.data(), w_f.size()});
    reg.push_back({prefix + ".w_g", w_g.data(), gw_g.data(), w_g.size()});
    reg.push_back({prefix + ".w_h", w_h.data(), gw_h.data(), w_h.size()});
    reg.push_back({prefix + ".w_v", w_v.data(), gw_v.data(), w_v.size()});
    reg.push_back({prefix + ".mu", &mu, &gmu, 1});
  }
};

template <typename T>
AttentionParams<T> init_attention(int channels, Rng& rng) {
  if (channels < 1) throw std::invalid_argument("init_attention: channels < 1");
  AttentionParams<T> p;
  p.channels = channels;
  p.reduced = std::max(1, channels / 8);
  const std::size_t cr = static_cast<std::size_t>(channels) * p.reduced;
  const std::size_t cc = static_cast<std::size_t>(channels) * channels;
  p.w_f.resize(cr);
  p.w_g.resize(cr);
  p.w_h.resize(cc);
  p.w_v.resize(cc);
  he_uniform_fill(p.w_f, channels, rng);
  he_uniform_fill(p.w_g, channels, rng);
  // Identity value path: with random W_h/W_v the output X' is noise and the
  // mu gradient <dL/dout, X'> is incoherent, so the gate may never open.
  // Starting at W_h = W_v = I makes X' = M X, a pure positional remix whose
  // alignment with dL/dout gives mu a meaningful signal from the first step.
  std::fill(p.w_h.begin(), p.w_h.end(), T(0));
  std::fill(p.w_v.begin(), p.w_v.end(), T(0));
  for (int i = 0; i < channels; ++i) {
    const std::size_t d = static_cast<std::size_t>(i) * channels + i;
    p.w_h[d] = T(1);
    p.w_v[d] = T(1);
  }
  p.mu = T(0);  // identity mapping at init
  p.gw_f.assign(cr, T(0));
  p.gw_g.assign(cr, T(0));
  p.gw_h.assign(cc, T(0));
  p.gw_v.assign(cc, T(0));
  return p;
}

template <typename T>
struct AttentionCache {
  Mat<T> x;        // K x C input copy
  Mat<T> f, g, h;  // K x C', K x C', K x C
  Mat<T> m;        // K x K attention map, rows sum to 1
  Mat<T> y;        // K x C, rows are tilde-x_b
  Mat<T> xp;       // K x C, rows are x'_b
};

// Row-b-over-a softmax of S = G * F^T; M(b, a) is the weight position a
// contributes to position b.
template <typename T>
Mat<T> attention_map(const Tensor<T>& x, const AttentionParams<T>& p) {
  if (x.c != p.channels)
    throw std::invalid_argument("attention_map: channel mismatch");
  if (!x.all_finite())
    throw std::invalid_argument("attention_map: non-finite input");
  const int k = x.k();
  Eigen::Map<const Mat<T>> wf(p.w_f.data(), p.channels, p.reduced);
  Eigen::Map<const Mat<T>> wg(p.w_g.data(), p.channels, p.reduced);
  Mat<T> f = x.kxc() * wf;
  Mat<T> g = x.kxc() * wg;
  Mat<T> s = g * f.transpose();
  Mat<T> m(k, k);
  for (int b = 0; b < k; ++b) {
    const T mx = s.row(b).maxCoeff();
    m.row(b) = (s.row(b).array() - mx).exp();
    m.row(b) /= m.row(b).sum();
  }
  return m;
}

template <typename T>
void apply_attention(const Tensor<T>& x, const AttentionParams<T>& p,
                     Tensor<T>& out, AttentionCache<T>& c) {
  if (x.c != p.channels)
    throw std::invalid_argument("apply_attention: channel mismatch");
  if (!x.all_finite())
    throw std::invalid_argument("apply_attention: non-finite input");
  Eigen::Map<const Mat<T>> wh(p.w_h.data(), p.channels, p.channels);
  Eigen::Map<const Mat<T>> wv(p.w_v.data(), p.channels, p.channels);
  c.x = x.kxc();
  c.m = attention_map(x, p);
  Eigen::Map<const Mat<T>> wf(p.w_f.data(), p.channels, p.reduced);
  Eigen::Map<const Mat<T>> wg(p.w_g.data(), p.channels, p.reduced);
  c.f.noalias() = c.x * wf;
  c.g.noalias() = c.x * wg;
  c.h.noalias() = c.x * wh;
  c.y.noalias() = c.m * c.h;
  c.xp.noalias() = c.y * wv;
  out.resize(x.c, x.h, x.w);
  out.kxc() = p.mu * c.xp + c.x;
}

// Accumulates parameter gradients into p and the input gradient into dx
// (dx must already have the input shape).
template <typename T>
void attention_backward(const AttentionCache<T>& c, const Tensor<T>& dout,
                        AttentionParams<T>& p, Tensor<T>& dx) {
  Eigen::Map<const Mat<T>> wf(p.w_f.data(), p.channels, p.reduced);
  Eigen::Map<const Mat<T>> wg(p.w_g.data(), p.channels, p.reduced);
  Eigen::Map<const Mat<T>> wh(p.w_h.data(), p.channels, p.channels);
  Eigen::Map<const Mat<T>> wv(p.w_v.data(), p.channels, p.channels);
  Eigen::Map<Mat<T>> gwf(p.gw_f.data(), p.channels, p.reduced);
  Eigen::Map<Mat<T>> gwg(p.gw_g.data(), p.channels, p.reduced);
  Eigen::Map<Mat<T>> gwh(p.gw_h.data(), p.channels, p.channels);
  Eigen::Map<Mat<T>> gwv(p.gw_v.data(), p.channels, p.channels);

  const auto dout_m = dout.kxc();
  p.gmu += (dout_m.array() * c.xp.array()).sum();
  Mat<T> dxp = p.mu * dout_m;
  gwv.noalias() += c.y.transpose() * dxp;
  Mat<T> dy = dxp * wv.transpose();
  Mat<T> dm = dy * c.h.transpose();
  Mat<T> dh = c.m.transpose() * dy;
  // softmax rows: dS = M .* (dM - rowdot(dM, M))
  Mat<T> ds(dm.rows(), dm.cols());
  for (int b = 0; b < dm.rows(); ++b) {
    const T dot = dm.row(b).dot(c.m.row(b));
    ds.row(b) = c.m.row(b).array() * (dm.row(b).array() - dot);
  }
  Mat<T> dg = ds * c.f;
  Mat<T> df = ds.transpose() * c.g;
  gwf.noalias() += c.x.transpose() * df;
  gwg.noalias() += c.x.transpose() * dg;
  gwh.noalias() += c.x.transpose() * dh;
  dx.kxc() += dout_m + df * wf.transpose() + dg * wg.transpose() +
              dh * wh.transpose();
}

}  // namespace msatl::nn
