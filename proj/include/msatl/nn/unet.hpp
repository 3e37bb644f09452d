#pragma once

#include "msatl/nn/layers.hpp"

#include <vector>

namespace msatl::nn {

// Downsampling path: depth levels of (conv3x3, relu) x2 + maxpool, then two
// bottleneck convs. Level l has base*2^l channels; the bottleneck doubles the
// deepest width. Skips are the pre-pool activations.
template <typename T>
class Encoder {
 public:
  Encoder() = default;
  Encoder(int in_channels, int depth, int base_width, Rng& rng)
      : depth_(depth) {
    int c = in_channels;
    int w = base_width;
    for (int l = 0; l < depth; ++l) {
      conv1_.emplace_back(c, w, 3, rng);
      conv2_.emplace_back(w, w, 3, rng);
      c = w;
      w *= 2;
    }
    bconv1_ = Conv2d<T>(c, w, 3, rng);
    bconv2_ = Conv2d<T>(w, w, 3, rng);
    bottleneck_channels_ = w;
  }

  struct Cache {
    struct Level {
      typename Conv2d<T>::Cache c1, c2;
      Tensor<T> a1, a2;  // post-activation; a2 is the skip
      typename MaxPool2x2<T>::Cache pool;
      Tensor<T> pooled;
    };
    std::vector<Level> levels;
    typename Conv2d<T>::Cache b1, b2;
    Tensor<T> ba1, ba2;  // ba2 is the bottleneck output
  };

  void forward(const Tensor<T>& x, Cache& c) const {
    c.levels.resize(depth_);
    const Tensor<T>* cur = &x;
    for (int l = 0; l < depth_; ++l) {
      auto& lv = c.levels[l];
      conv1_[l].forward(*cur, lv.a1, lv.c1);
      LeakyReLU<T>::forward_inplace(lv.a1);
      conv2_[l].forward(lv.a1, lv.a2, lv.c2);
      LeakyReLU<T>::forward_inplace(lv.a2);
      MaxPool2x2<T>::forward(lv.a2, lv.pooled, lv.pool);
      cur = &lv.pooled;
    }
    bconv1_.forward(*cur, c.ba1, c.b1);
    LeakyReLU<T>::forward_inplace(c.ba1);
    bconv2_.forward(c.ba1, c.ba2, c.b2);
    LeakyReLU<T>::forward_inplace(c.ba2);
  }

  // dskips[l] may be empty (no fusion contribution); dx optional.
  void backward(Cache& c, const Tensor<T>& dbottleneck,
                const std::vector<Tensor<T>>& dskips, Tensor<T>* dx) {
    Tensor<T> d = dbottleneck;
    LeakyReLU<T>::backward_from_output(c.ba2, d);
    Tensor<T> d2;
    bconv2_.backward(c.b2, d, &d2);
    LeakyReLU<T>::backward_from_output(c.ba1, d2);
    Tensor<T> dpool;
    bconv1_.backward(c.b1, d2, &dpool);
    for (int l = depth_ - 1; l >= 0; --l) {
      auto& lv = c.levels[l];
      Tensor<T> da2;
      MaxPool2x2<T>::backward(lv.pool, dpool, da2);
      if (l < static_cast<int>(dskips.size()) && !dskips[l].v.empty())
        add_inplace(da2, dskips[l]);
      LeakyReLU<T>::backward_from_output(lv.a2, da2);
      Tensor<T> da1;
      conv2_[l].backward(lv.c2, da2, &da1);
      LeakyReLU<T>::backward_from_output(lv.a1, da1);
      const bool want_dx = (l > 0) || (dx != nullptr);
      Tensor<T> din;
      conv1_[l].backward(lv.c1, da1, want_dx ? &din : nullptr);
      if (l > 0)
        dpool = std::move(din);
      else if (dx)
        *dx = std::move(din);
    }
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    for (int l = 0; l < depth_; ++l) {
      const std::string p = prefix + ".level" + std::to_string(l);
      conv1_[l].collect(reg, p + ".conv1");
      conv2_[l].collect(reg, p + ".conv2");
    }
    bconv1_.collect(reg, prefix + ".bottleneck.conv1");
    bconv2_.collect(reg, prefix + ".bottleneck.conv2");
  }

  int depth() const { return depth_; }
  int bottleneck_channels() const { return bottleneck_channels_; }
  int skip_channels(int l) const { return conv2_[l].out_channels(); }

 private:
  std::vector<Conv2d<T>> conv1_, conv2_;
  Conv2d<T> bconv1_, bconv2_;
  int depth_ = 0;
  int bottleneck_channels_ = 0;
};

// Upsampling path mirroring the encoder; skip features are ADDED after the
// first conv of each level. Final 1x1 conv emits 2-class logits.
template <typename T>
class Decoder {
 public:
  Decoder() = default;
  Decoder(int bottleneck_channels, int depth, int base_width, int num_classes,
          Rng& rng)
      : depth_(depth) {
    int c = bottleneck_channels;
    for (int l = depth - 1; l >= 0; --l) {
      const int w = base_width << l;
      conv1_.emplace_back(c, w, 3, rng);  // stored deepest-first
      conv2_.emplace_back(w, w, 3, rng);
      c = w;
    }
    head_ = Conv2d<T>(c, num_classes, 1, rng);
  }

  struct Cache {
    struct Level {
      Tensor<T> up;
      typename Conv2d<T>::Cache c1, c2;
      Tensor<T> a1, a2;
    };
    std::vector<Level> levels;  // deepest-first
    typename Conv2d<T>::Cache head;
  };

  // skips indexed by encoder level (0 = finest)
  void forward(const Tensor<T>& bottleneck, const std::vector<Tensor<T>>& skips,
               Tensor<T>& logits, Cache& c) const {
    if (static_cast<int>(skips.size()) != depth_)
      throw std::invalid_argument("Decoder: skip count mismatch");
    c.levels.resize(depth_);
    const Tensor<T>* cur = &bottleneck;
    for (int j = 0; j < depth_; ++j) {
      auto& lv = c.levels[j];
      const Tensor<T>& skip = skips[depth_ - 1 - j];
      UpsampleNearest2x<T>::forward(*cur, lv.up);
      conv1_[j].forward(lv.up, lv.a1, lv.c1);
      if (lv.a1.c != skip.c || lv.a1.h != skip.h || lv.a1.w != skip.w)
        throw std::invalid_argument("Decoder: skip shape mismatch");
      add_inplace(lv.a1, skip);
      LeakyReLU<T>::forward_inplace(lv.a1);
      conv2_[j].forward(lv.a1, lv.a2, lv.c2);
      LeakyReLU<T>::forward_inplace(lv.a2);
      cur = &lv.a2;
    }
    head_.forward(*cur, logits, c.head);
  }

  // dskips filled per encoder level; dbottleneck overwritten.
  void backward(Cache& c, const Tensor<T>& dlogits,
                std::vector<Tensor<T>>& dskips, Tensor<T>& dbottleneck) {
    dskips.assign(depth_, Tensor<T>());
    Tensor<T> d;
    head_.backward(c.head, dlogits, &d);
    for (int j = depth_ - 1; j >= 0; --j) {
      auto& lv = c.levels[j];
      LeakyReLU<T>::backward_from_output(lv.a2, d);
      Tensor<T> da1;
      conv2_[j].backward(lv.c2, d, &da1);
      LeakyReLU<T>::backward_from_output(lv.a1, da1);
      dskips[depth_ - 1 - j] = da1;  // the add fans out unchanged
      Tensor<T> dup;
      conv1_[j].backward(lv.c1, da1, &dup);
      Tensor<T> dprev;
      UpsampleNearest2x<T>::backward(dup, dprev);
      d = std::move(dprev);
    }
    dbottleneck = std::move(d);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    for (int j = 0; j < depth_; ++j) {
      const std::string p = prefix + ".level" + std::to_string(depth_ - 1 - j);
      conv1_[j].collect(reg, p + ".conv1");
      conv2_[j].collect(reg, p + ".conv2");
    }
    head_.collect(reg, prefix + ".head");
  }

 private:
  std::vector<Conv2d<T>> conv1_, conv2_;  // deepest-first
  Conv2d<T> head_;
  int depth_ = 0;
};

// Domain classifier head: global average pool over the attended bottleneck,
// two dense layers, one logit. The pooled vector is L2-normalized before the
// dense layers: the reversed gradients otherwise reward plain feature-norm
// inflation, and the resulting encoder/classifier arms race overflows float
// activations mid-training. On the unit sphere the adversarial gradient is
// orthogonal to the features and decays as 1/norm, so the min-max game stays
// bounded.
template <typename T>
class Classifier {
 public:
  // keeps 1/sqrt bounded at the all-zero feature corner
  static constexpr T kNormEps = T(1e-8);

  Classifier() = default;
  Classifier(int in_channels, Rng& rng)
      : hidden_(std::max(1, in_channels / 2)),
        fc1_(in_channels, std::max(1, in_channels / 2), rng),
        fc2_(std::max(1, in_channels / 2), 1, rng) {}

  struct Cache {
    int c = 0, h = 0, w = 0;  // bottleneck shape for GAP backward
    Vec<T> pn;                // normalized pooled vector
    T inv_norm = T(0);
    typename Dense<T>::Cache d1, d2;
    Vec<T> h1;  // post-activation hidden
  };

  T forward(const Tensor<T>& z, Cache& c) const {
    c.c = z.c;
    c.h = z.h;
    c.w = z.w;
    Vec<T> pooled;
    GlobalAvgPool<T>::forward(z, pooled);
    c.inv_norm = T(1) / std::sqrt(pooled.squaredNorm() + kNormEps);
    c.pn = pooled * c.inv_norm;
    fc1_.forward(c.pn, c.h1, c.d1);
    for (int i = 0; i < c.h1.size(); ++i)
      if (c.h1[i] < T(0)) c.h1[i] *= LeakyReLU<T>::kSlope;
    Vec<T> out;
    fc2_.forward(c.h1, out, c.d2);
    return out[0];
  }

  // dz accumulated (must have bottleneck shape already)
  void backward(Cache& c, T dlogit, Tensor<T>& dz) {
    Vec<T> dout(1);
    dout[0] = dlogit;
    Vec<T> dh1;
    fc2_.backward(c.d2, dout, &dh1);
    for (int i = 0; i < dh1.size(); ++i)
      if (c.h1[i] < T(0)) dh1[i] *= LeakyReLU<T>::kSlope;
    Vec<T> dpn;
    fc1_.backward(c.d1, dh1, &dpn);
    // d/dp of p/sqrt(|p|^2 + eps): project out the radial component
    Vec<T> dpooled = (dpn - c.pn * c.pn.dot(dpn)) * c.inv_norm;
    GlobalAvgPool<T>::backward(dpooled, dz);
  }

  void collect(ParamRegistry<T>& reg, const std::string& prefix) {
    fc1_.collect(reg, prefix + ".fc1");
    fc2_.collect(reg, prefix + ".fc2");
  }

 private:
  int hidden_ = 0;
  Dense<T> fc1_, fc2_;
};

}  // namespace msatl::nn
