#pragma once

#include "msatl/batcher.hpp"
#include "msatl/dataset.hpp"
#include "msatl/nn/attention.hpp"
#include "msatl/nn/unet.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace msatl::nn {

enum class SupervisionMode { target_only, per_sample_replicate };

struct ModelConfig {
  int image_size = 64;
  int in_channels = 3;
  int num_classes = 2;
  int depth = 4;
  int base_width = 8;
  int num_sources = 2;
  double lambda = 0.3;
  bool use_attention = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_sources < 1) throw std::invalid_argument("ModelConfig: N < 1");
    if (lambda < 0) throw std::invalid_argument("ModelConfig: lambda < 0");
    if (depth < 1) throw std::invalid_argument("ModelConfig: depth < 1");
    if (base_width < 1) throw std::invalid_argument("ModelConfig: base_width < 1");
    if (in_channels < 1) throw std::invalid_argument("ModelConfig: in_channels < 1");
    if (num_classes != 2)
      throw std::invalid_argument("ModelConfig: only 2-class segmentation is supported");
    const int stride = 1 << depth;
    if (image_size < stride || image_size % stride != 0)
      throw std::invalid_argument("ModelConfig: image_size not divisible by 2^depth");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"in_channels", c.in_channels},
                     {"num_classes", c.num_classes},
                     {"depth", c.depth},
                     {"base_width", c.base_width},
                     {"num_sources", c.num_sources},
                     {"lambda", c.lambda},
                     {"use_attention", c.use_attention},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("image_size").get_to(c.image_size);
  j.at("in_channels").get_to(c.in_channels);
  j.at("num_classes").get_to(c.num_classes);
  j.at("depth").get_to(c.depth);
  j.at("base_width").get_to(c.base_width);
  j.at("num_sources").get_to(c.num_sources);
  j.at("lambda").get_to(c.lambda);
  j.at("use_attention").get_to(c.use_attention);
  j.at("seed").get_to(c.seed);
}

struct LossBreakdown {
  double l_p = 0.0;
  std::vector<double> l_adv;  // one per sub-network
  double total = 0.0;         // l_p - lambda * sum(l_adv)
};

template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t(3, img.h, img.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t.at(c, y, x) = static_cast<T>(img.at(y, x, c)) / T(255);
  return t;
}

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  Tensor<T> p(logits.c, logits.h, logits.w);
  const int k = logits.k();
  for (int i = 0; i < k; ++i) {
    T mx = logits.v[i];
    for (int c = 1; c < logits.c; ++c)
      mx = std::max(mx, logits.v[static_cast<std::size_t>(c) * k + i]);
    T sum = T(0);
    for (int c = 0; c < logits.c; ++c) {
      const T e = std::exp(logits.v[static_cast<std::size_t>(c) * k + i] - mx);
      p.v[static_cast<std::size_t>(c) * k + i] = e;
      sum += e;
    }
    for (int c = 0; c < logits.c; ++c)
      p.v[static_cast<std::size_t>(c) * k + i] /= sum;
  }
  return p;
}

template <typename T>
struct FeatureSet {
  Tensor<T> bottleneck;
  std::vector<Tensor<T>> skips;
};

template <typename T>
struct SubNetwork {
  Encoder<T> encoder;
  AttentionParams<T> attention;
  Classifier<T> classifier;
};

// N adversarial sub-networks G_c^i(GRL(G_a^i(G_e^i(.)))) plus the shared
// fusion predictor G_p(sum_i G_a^i(G_e^i(.))).
template <typename T>
class MsatlModel {
 public:
  MsatlModel() = default;

  explicit MsatlModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    for (int i = 0; i < cfg_.num_sources; ++i) {
      SubNetwork<T> sn;
      Rng enc_rng(derive_seed(cfg_.seed, "init.encoder", i + 1));
      sn.encoder = Encoder<T>(cfg_.in_channels, cfg_.depth, cfg_.base_width, enc_rng);
      Rng att_rng(derive_seed(cfg_.seed, "init.attention", i + 1));
      sn.attention = init_attention<T>(sn.encoder.bottleneck_channels(), att_rng);
      Rng cls_rng(derive_seed(cfg_.seed, "init.classifier", i + 1));
      sn.classifier = Classifier<T>(sn.encoder.bottleneck_channels(), cls_rng);
      subs_.push_back(std::move(sn));
    }
    Rng dec_rng(derive_seed(cfg_.seed, "init.decoder"));
    decoder_ = Decoder<T>(subs_[0].encoder.bottleneck_channels(), cfg_.depth,
                          cfg_.base_width, cfg_.num_classes, dec_rng);
  }

  const ModelConfig& config() const { return cfg_; }
  int num_sources() const { return cfg_.num_sources; }
  SubNetwork<T>& sub_network(int i) { return subs_.at(i - 1); }  // i is 1-based
  const SubNetwork<T>& sub_network(int i) const { return subs_.at(i - 1); }

  // Stable-ordered registry; attention parameters are excluded when attention
  // is disabled (the no_attention ablation freezes them out of optimization).
  ParamRegistry<T> params() {
    ParamRegistry<T> reg;
    for (int i = 0; i < cfg_.num_sources; ++i) {
      const std::string p = "subnet." + std::to_string(i + 1);
      subs_[i].encoder.collect(reg, p + ".encoder");
      if (cfg_.use_attention) subs_[i].attention.collect(reg, p + ".attention");
      subs_[i].classifier.collect(reg, p + ".classifier");
    }
    decoder_.collect(reg, "decoder");
    return reg;
  }

  void zero_grads() {
    for (auto& pr : params()) std::fill(pr.grad, pr.grad + pr.size, T(0));
  }

  void clamp_mu() {
    for (auto& sn : subs_)
      if (sn.attention.mu < T(0)) sn.attention.mu = T(0);
  }

  // --- eval-mode forward API -------------------------------------------------

  // F_T^i: encoder features with attention applied at the bottleneck.
  FeatureSet<T> extract_features(int i, const Tensor<T>& x) const {
    check_input(x);
    check_index(i);
    const SubNetwork<T>& sn = subs_[i - 1];
    typename Encoder<T>::Cache ec;
    sn.encoder.forward(x, ec);
    FeatureSet<T> out;
    out.bottleneck = attended(sn, ec.ba2);
    out.skips.reserve(cfg_.depth);
    for (auto& lv : ec.levels) out.skips.push_back(lv.a2);
    return out;
  }

  // Domain logit of sub-network i on an (attended) bottleneck. The
  // gradient-reversal boundary sits between this input and the classifier;
  // forward is identity, so eval just runs the head.
  T domain_logit(int i, const Tensor<T>& bottleneck) const {
    check_index(i);
    typename Classifier<T>::Cache cc;
    return subs_[i - 1].classifier.forward(bottleneck, cc);
  }

  // G_p over elementwise-summed bottlenecks and per-resolution skips.
  Tensor<T> fuse_and_predict(const std::vector<FeatureSet<T>>& feats) const {
    if (feats.empty()) throw std::invalid_argument("fuse_and_predict: no features");
    Tensor<T> bn = feats[0].bottleneck;
    std::vector<Tensor<T>> skips = feats[0].skips;
    for (std::size_t i = 1; i < feats.size(); ++i) {
      add_inplace(bn, feats[i].bottleneck);
      if (feats[i].skips.size() != skips.size())
        throw std::invalid_argument("fuse_and_predict: skip count mismatch");
      for (std::size_t l = 0; l < skips.size(); ++l)
        add_inplace(skips[l], feats[i].skips[l]);
    }
    Tensor<T> logits;
    typename Decoder<T>::Cache dc;
    decoder_.forward(bn, skips, logits, dc);
    return logits;
  }

  // F_P: same image through all N sub-networks, fused, decoded,
  // per-pixel softmax.
  Tensor<T> infer(const Tensor<T>& x) const {
    check_input(x);
    std::vector<FeatureSet<T>> feats;
    feats.reserve(cfg_.num_sources);
    for (int i = 1; i <= cfg_.num_sources; ++i)
      feats.push_back(extract_features(i, x));
    return softmax_channels(fuse_and_predict(feats));
  }

  Tensor<T> infer(const ImageU8& img) const {
    return infer(image_to_tensor<T>(img));
  }

  // --- training forward/backward ----------------------------------------------
  //
  // Computes L = L_p - lambda * sum_i L_adv^i over one batch. L_adv^i is the mean domain BCE of
  // sub-network i over its sub-batch (source label 0, target label 1); L_p is
  // the mean per-pixel CE of the fused prediction over the supervised slots.
  // With with_grad, parameter gradients are accumulated: the classifier
  // descends on L_adv while the boundary feeds -lambda times its input
  // gradient back into attention and encoder.
  LossBreakdown compute_loss(const Batch& batch, SupervisionMode mode,
                             bool with_grad,
                             std::vector<Tensor<T>>* fused_probs = nullptr) {
    if (static_cast<int>(batch.sub_batches.size()) != cfg_.num_sources)
      throw std::invalid_argument("compute_loss: sub-batch count mismatch");
    if (batch.sub_batches[0].target_samples.empty())
      throw std::invalid_argument("compute_loss: empty target half");

    const int n = cfg_.num_sources;
    std::vector<std::vector<Forwarded>> fw(n);
    std::vector<std::unordered_map<const DomainSample*, int>> idx(n);

    LossBreakdown lb;
    lb.l_adv.assign(n, 0.0);

    // domain pass
    std::vector<std::vector<DomainSlot>> dslots(n);
    for (int i = 0; i < n; ++i) {
      const auto& sb = batch.sub_batches[i];
      auto add_slot = [&](const DomainSample* s, int label) {
        DomainSlot sl;
        sl.cache = ensure_forwarded(i, s, fw[i], idx[i]);
        sl.label = label;
        sl.logit = subs_[i].classifier.forward(fw[i][sl.cache].bn_att, sl.cls);
        dslots[i].push_back(std::move(sl));
      };
      for (const auto* s : sb.source_samples) add_slot(s, kSourceDomainLabel);
      for (const auto* s : sb.target_samples) add_slot(s, kTargetDomainLabel);
      double sum = 0.0;
      for (const auto& sl : dslots[i]) sum += bce_logit(sl.logit, sl.label);
      lb.l_adv[i] = sum / static_cast<double>(dslots[i].size());
    }

    // supervision pass: fused prediction per supervised slot, CE against its
    // mask, immediate decoder backward (the fusion sum fans the decoder input
    // gradient to every sub-network unchanged).
    std::vector<std::pair<const DomainSample*, const MaskU8*>> sup;
    for (const auto* s : batch.sub_batches[0].target_samples)
      sup.emplace_back(s, &s->mask);
    if (mode == SupervisionMode::per_sample_replicate)
      for (const auto& sb : batch.sub_batches)
        for (const auto* s : sb.source_samples) sup.emplace_back(s, &s->mask);

    const int k = cfg_.image_size * cfg_.image_size;
    const double slot_norm = 1.0 / static_cast<double>(sup.size());
    if (fused_probs) fused_probs->clear();

    for (const auto& [s, mask] : sup) {
      Tensor<T> bn;
      std::vector<Tensor<T>> skips;
      std::vector<int> cache_of(n);
      for (int i = 0; i < n; ++i) {
        const int ci = ensure_forwarded(i, s, fw[i], idx[i]);
        cache_of[i] = ci;
        const Forwarded& f = fw[i][ci];
        if (i == 0) {
          bn = f.bn_att;
          skips.clear();
          for (const auto& lv : f.enc.levels) skips.push_back(lv.a2);
        } else {
          add_inplace(bn, f.bn_att);
          for (int l = 0; l < cfg_.depth; ++l)
            add_inplace(skips[l], f.enc.levels[l].a2);
        }
      }
      Tensor<T> logits;
      typename Decoder<T>::Cache dc;
      decoder_.forward(bn, skips, logits, dc);
      Tensor<T> probs = softmax_channels(logits);
      lb.l_p += pixel_ce(logits, *mask) * slot_norm;
      if (fused_probs) fused_probs->push_back(probs);
      if (!with_grad) continue;

      Tensor<T> dlogits = probs;
      for (int p = 0; p < k; ++p) {
        if (mask->data[p])
          dlogits.v[static_cast<std::size_t>(k) + p] -= T(1);
        else
          dlogits.v[p] -= T(1);
      }
      const T scale = static_cast<T>(slot_norm / k);
      for (T& v : dlogits.v) v *= scale;
      std::vector<Tensor<T>> dskips;
      Tensor<T> dbn;
      decoder_.backward(dc, dlogits, dskips, dbn);
      for (int i = 0; i < n; ++i) {
        Forwarded& f = fw[i][cache_of[i]];
        add_inplace(f.d_bn_att, dbn);
        for (int l = 0; l < cfg_.depth; ++l) {
          if (f.d_skips[l].v.empty())
            f.d_skips[l].resize(dskips[l].c, dskips[l].h, dskips[l].w);
          add_inplace(f.d_skips[l], dskips[l]);
        }
      }
    }

    lb.total = lb.l_p;
    for (double a : lb.l_adv) lb.total -= cfg_.lambda * a;
    if (!with_grad) return lb;

    // classifier backward (unscaled), then the GRL boundary: -lambda into the
    // attended bottleneck of each slot
    const T neg_lambda = static_cast<T>(-cfg_.lambda);
    for (int i = 0; i < n; ++i) {
      const double inv = 1.0 / static_cast<double>(dslots[i].size());
      for (auto& sl : dslots[i]) {
        const T dlogit =
            static_cast<T>((sigmoid(static_cast<double>(sl.logit)) - sl.label) * inv);
        Forwarded& f = fw[i][sl.cache];
        Tensor<T> dz(f.bn_att.c, f.bn_att.h, f.bn_att.w);
        subs_[i].classifier.backward(sl.cls, dlogit, dz);
        f.d_bn_att.kxc() += neg_lambda * dz.kxc();
      }
    }

    // upstream: attention, then encoder, per forwarded slot
    for (int i = 0; i < n; ++i)
      for (Forwarded& f : fw[i]) {
        Tensor<T> draw;
        if (cfg_.use_attention) {
          draw.resize(f.bn_att.c, f.bn_att.h, f.bn_att.w);
          attention_backward(f.att, f.d_bn_att, subs_[i].attention, draw);
        } else {
          draw = std::move(f.d_bn_att);
        }
        subs_[i].encoder.backward(f.enc, draw, f.d_skips, nullptr);
      }
    return lb;
  }

 private:
  struct Forwarded {
    const DomainSample* sample = nullptr;
    typename Encoder<T>::Cache enc;
    AttentionCache<T> att;
    Tensor<T> bn_att;
    Tensor<T> d_bn_att;
    std::vector<Tensor<T>> d_skips;
  };
  struct DomainSlot {
    int cache = 0;
    int label = 0;
    T logit = T(0);
    typename Classifier<T>::Cache cls;
  };

  static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  // numerically stable BCE on a logit, computed in double
  static double bce_logit(T logit, int label) {
    const double l = static_cast<double>(logit);
    return std::max(l, 0.0) - l * label + std::log1p(std::exp(-std::abs(l)));
  }

  // mean per-pixel 2-class CE from logits via log-sum-exp, in double
  double pixel_ce(const Tensor<T>& logits, const MaskU8& mask) const {
    const int k = logits.k();
    if (static_cast<int>(mask.data.size()) != k)
      throw std::invalid_argument("compute_loss: mask shape mismatch");
    double sum = 0.0;
    for (int p = 0; p < k; ++p) {
      const double l0 = static_cast<double>(logits.v[p]);
      const double l1 = static_cast<double>(logits.v[static_cast<std::size_t>(k) + p]);
      const double m = std::max(l0, l1);
      const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
      sum += lse - (mask.data[p] ? l1 : l0);
    }
    return sum / k;
  }

  Tensor<T> attended(const SubNetwork<T>& sn, const Tensor<T>& raw) const {
    if (!cfg_.use_attention) return raw;
    Tensor<T> out;
    AttentionCache<T> ac;
    apply_attention(raw, sn.attention, out, ac);
    return out;
  }

  int ensure_forwarded(int i, const DomainSample* s,
                       std::vector<Forwarded>& fw,
                       std::unordered_map<const DomainSample*, int>& idx) {
    auto it = idx.find(s);
    if (it != idx.end()) return it->second;
    Forwarded f;
    f.sample = s;
    const Tensor<T> x = image_to_tensor<T>(s->image);
    check_input(x);
    subs_[i].encoder.forward(x, f.enc);
    if (cfg_.use_attention)
      apply_attention(f.enc.ba2, subs_[i].attention, f.bn_att, f.att);
    else
      f.bn_att = f.enc.ba2;
    f.d_bn_att.resize(f.bn_att.c, f.bn_att.h, f.bn_att.w);
    f.d_skips.assign(cfg_.depth, Tensor<T>());
    fw.push_back(std::move(f));
    const int ci = static_cast<int>(fw.size()) - 1;
    idx.emplace(s, ci);
    return ci;
  }

  void check_input(const Tensor<T>& x) const {
    if (x.c != cfg_.in_channels)
      throw std::invalid_argument("model: wrong channel count");
    if (x.h != cfg_.image_size || x.w != cfg_.image_size)
      throw std::invalid_argument("model: wrong image size");
  }
  void check_index(int i) const {
    if (i < 1 || i > cfg_.num_sources)
      throw std::out_of_range("model: sub-network index out of range");
  }

  ModelConfig cfg_;
  std::vector<SubNetwork<T>> subs_;
  Decoder<T> decoder_;
};

template <typename T>
MsatlModel<T> build_model(const ModelConfig& cfg) {
  return MsatlModel<T>(cfg);
}

}  // namespace msatl::nn
