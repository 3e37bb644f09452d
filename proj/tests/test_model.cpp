#include "msatl/model.hpp"
#include "msatl/checkpoint.hpp"
#include "msatl/rng.hpp"

#include <doctest/doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace msatl;
using namespace msatl::nn;

namespace {

// smallest legal model: 8x8 input, two levels, 8-channel bottleneck at 2x2
ModelConfig tiny_config(double lambda = 0.3) {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.depth = 2;
  cfg.base_width = 2;
  cfg.num_sources = 2;
  cfg.lambda = lambda;
  cfg.seed = 7;
  return cfg;
}

DomainSample random_sample(int size, DomainId id, const std::string& sid,
                           Rng& rng) {
  DomainSample s;
  s.domain_id = id;
  s.sample_id = sid;
  s.image = ImageU8(size, size);
  for (auto& v : s.image.data)
    v = static_cast<std::uint8_t>(rng.uniform_int(256));
  s.mask = MaskU8(size, size);
  for (auto& v : s.mask.data) v = static_cast<std::uint8_t>(rng.uniform_int(2));
  return s;
}

struct BatchFixture {
  std::vector<DomainSample> store;
  Batch batch;

  // one source per sub-batch plus one shared target
  explicit BatchFixture(int size, std::uint64_t seed = 101) {
    Rng rng(seed);
    store.push_back(random_sample(size, DomainId::source(1), "s1", rng));
    store.push_back(random_sample(size, DomainId::source(2), "s2", rng));
    store.push_back(random_sample(size, DomainId::target(), "t1", rng));
    for (int i = 0; i < 2; ++i) {
      SubBatch sb;
      sb.source_index = i + 1;
      sb.source_samples = {&store[i]};
      sb.target_samples = {&store[2]};
      batch.sub_batches.push_back(std::move(sb));
    }
  }
};

double hand_bce(double logit, int label) {
  return std::max(logit, 0.0) - logit * label +
         std::log1p(std::exp(-std::abs(logit)));
}

// mean per-pixel CE computed from probabilities, independent of pixel_ce
template <typename T>
double hand_ce(const Tensor<T>& probs, const MaskU8& mask) {
  const int k = probs.k();
  double sum = 0.0;
  for (int p = 0; p < k; ++p) {
    const double pr = static_cast<double>(
        probs.v[mask.data[p] ? static_cast<std::size_t>(k) + p : p]);
    sum -= std::log(pr);
  }
  return sum / k;
}

std::vector<double> grad_snapshot(MsatlModel<double>& model) {
  std::vector<double> g;
  for (const auto& pr : model.params())
    g.insert(g.end(), pr.grad, pr.grad + pr.size);
  return g;
}

}  // namespace

TEST_CASE("ModelConfig validation and JSON round-trip") {
  ModelConfig bad = tiny_config();
  bad.image_size = 10;  // not divisible by 2^depth
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.num_sources = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.lambda = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = tiny_config();
  bad.num_classes = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  const ModelConfig cfg = tiny_config(0.45);
  const nlohmann::json j = cfg;
  const auto back = j.get<ModelConfig>();
  CHECK(back == cfg);
}

TEST_CASE("image_to_tensor scales to [0,1]") {
  ImageU8 img(2, 2);
  img.at(0, 0, 0) = 255;
  img.at(1, 1, 2) = 51;
  const Tensor<double> t = image_to_tensor<double>(img);
  REQUIRE(t.c == 3);
  CHECK(t.at(0, 0, 0) == 1.0);
  CHECK(t.at(2, 1, 1) == doctest::Approx(0.2));
  CHECK(t.at(1, 0, 1) == 0.0);
}

TEST_CASE("softmax_channels normalizes per pixel") {
  Tensor<double> logits(2, 1, 2);
  logits.v = {1.0, -2.0,   // class 0
              3.0, -2.0};  // class 1
  const Tensor<double> p = softmax_channels(logits);
  CHECK(p.v[0] == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
  CHECK(p.v[2] == doctest::Approx(std::exp(2.0) / (1.0 + std::exp(2.0))).epsilon(1e-12));
  CHECK(p.v[1] == doctest::Approx(0.5));
  CHECK(p.v[3] == doctest::Approx(0.5));
}

TEST_CASE("default-sized model shapes") {
  ModelConfig cfg;  // 64x64, depth 4, base 8, N=2
  MsatlModel<float> model(cfg);
  Rng rng(2);
  const DomainSample s = random_sample(64, DomainId::target(), "t", rng);

  const auto feats = model.extract_features(1, image_to_tensor<float>(s.image));
  CHECK(feats.bottleneck.c == 128);
  CHECK(feats.bottleneck.h == 4);
  CHECK(feats.bottleneck.w == 4);
  REQUIRE(feats.skips.size() == 4);
  const int widths[4] = {8, 16, 32, 64};
  const int sizes[4] = {64, 32, 16, 8};
  for (int l = 0; l < 4; ++l) {
    CHECK(feats.skips[l].c == widths[l]);
    CHECK(feats.skips[l].h == sizes[l]);
  }

  const Tensor<float> probs = model.infer(s.image);
  REQUIRE(probs.c == 2);
  REQUIRE(probs.h == 64);
  const int k = probs.k();
  for (int p = 0; p < k; ++p)
    CHECK(probs.v[p] + probs.v[static_cast<std::size_t>(k) + p] ==
          doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("parameter registry is stable, seeded, and ablation-aware") {
  MsatlModel<double> a(tiny_config()), b(tiny_config());
  auto ra = a.params(), rb = b.params();
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].name == rb[i].name);
    REQUIRE(ra[i].size == rb[i].size);
    for (std::size_t j = 0; j < ra[i].size; ++j)
      REQUIRE(ra[i].value[j] == rb[i].value[j]);  // same seed, same init
  }

  CHECK(ra[0].name == "subnet.1.encoder.level0.conv1.weight");
  bool has_mu = false, has_decoder = false;
  for (const auto& pr : ra) {
    has_mu |= pr.name == "subnet.2.attention.mu";
    has_decoder |= pr.name == "decoder.head.weight";
  }
  CHECK(has_mu);
  CHECK(has_decoder);

  // sub-networks draw independent init streams
  const auto& e1 = a.sub_network(1).encoder;
  const auto& e2 = a.sub_network(2).encoder;
  (void)e1;
  (void)e2;
  bool differ = false;
  for (std::size_t i = 0; i < ra.size(); ++i)
    if (ra[i].name == "subnet.2.encoder.level0.conv1.weight")
      for (std::size_t j = 0; j < ra[i].size; ++j)
        differ |= ra[i].value[j] != ra[0].value[j];
  CHECK(differ);

  ModelConfig no_att = tiny_config();
  no_att.use_attention = false;
  MsatlModel<double> c(no_att);
  auto rc = c.params();
  CHECK(rc.size() == ra.size() - 2u * 5u);  // 5 attention tensors per subnet
  for (const auto& pr : rc)
    CHECK(pr.name.find(".attention.") == std::string::npos);

  ModelConfig other_seed = tiny_config();
  other_seed.seed = 8;
  MsatlModel<double> d(other_seed);
  auto rd = d.params();
  bool seed_differs = false;
  for (std::size_t j = 0; j < ra[0].size; ++j)
    seed_differs |= rd[0].value[j] != ra[0].value[j];
  CHECK(seed_differs);
}

TEST_CASE("fusion is the elementwise feature sum") {
  MsatlModel<double> model(tiny_config());
  Rng rng(5);
  const DomainSample s = random_sample(8, DomainId::target(), "t", rng);
  const Tensor<double> x = image_to_tensor<double>(s.image);

  auto f1 = model.extract_features(1, x);
  auto f2 = model.extract_features(2, x);

  FeatureSet<double> summed = f1;
  add_inplace(summed.bottleneck, f2.bottleneck);
  for (std::size_t l = 0; l < summed.skips.size(); ++l)
    add_inplace(summed.skips[l], f2.skips[l]);

  const Tensor<double> two = model.fuse_and_predict({f1, f2});
  const Tensor<double> one = model.fuse_and_predict({summed});
  REQUIRE(two.v.size() == one.v.size());
  for (std::size_t i = 0; i < two.v.size(); ++i)
    CHECK(two.v[i] == doctest::Approx(one.v[i]).epsilon(1e-12));

  CHECK_THROWS_AS(model.fuse_and_predict({}), std::invalid_argument);
}

TEST_CASE("loss bookkeeping matches the public forward API") {
  MsatlModel<double> model(tiny_config());
  BatchFixture fx(8);

  std::vector<Tensor<double>> fused;
  const LossBreakdown lb = model.compute_loss(
      fx.batch, SupervisionMode::target_only, /*with_grad=*/false, &fused);

  // total = l_p - lambda * sum(l_adv)
  REQUIRE(lb.l_adv.size() == 2);
  CHECK(lb.total ==
        doctest::Approx(lb.l_p - 0.3 * (lb.l_adv[0] + lb.l_adv[1]))
            .epsilon(1e-12));

  // l_adv[i]: mean BCE over the sub-batch, recomputed from domain_logit
  for (int i = 1; i <= 2; ++i) {
    const auto& sb = fx.batch.sub_batches[i - 1];
    double sum = 0.0;
    for (const auto* s : sb.source_samples) {
      const auto f = model.extract_features(i, image_to_tensor<double>(s->image));
      sum += hand_bce(model.domain_logit(i, f.bottleneck), kSourceDomainLabel);
    }
    for (const auto* s : sb.target_samples) {
      const auto f = model.extract_features(i, image_to_tensor<double>(s->image));
      sum += hand_bce(model.domain_logit(i, f.bottleneck), kTargetDomainLabel);
    }
    CHECK(lb.l_adv[i - 1] == doctest::Approx(sum / 2.0).epsilon(1e-12));
  }

  // l_p: CE of the fused prediction on the one supervised slot
  REQUIRE(fused.size() == 1);
  const DomainSample& t = fx.store[2];
  CHECK(lb.l_p == doctest::Approx(hand_ce(fused[0], t.mask)).epsilon(1e-9));

  // the fused training-path probabilities are bitwise the inference output
  const Tensor<double> probs = model.infer(t.image);
  REQUIRE(probs.v.size() == fused[0].v.size());
  for (std::size_t i = 0; i < probs.v.size(); ++i)
    REQUIRE(probs.v[i] == fused[0].v[i]);
}

TEST_CASE("GRL: forward is the identity, backward scales by -lambda") {
  // lambda enters nowhere in the forward pass and only as the boundary
  // factor in the backward pass, so grads are affine in lambda:
  // g(l) = g_sup - l * g_adv for every non-classifier parameter.
  BatchFixture fx(8);
  MsatlModel<double> m0(tiny_config(0.0));
  MsatlModel<double> m03(tiny_config(0.3));
  MsatlModel<double> m1(tiny_config(1.0));

  auto run = [&](MsatlModel<double>& m) {
    m.zero_grads();
    return m.compute_loss(fx.batch, SupervisionMode::target_only, true);
  };
  const LossBreakdown lb0 = run(m0);
  const LossBreakdown lb03 = run(m03);
  const LossBreakdown lb1 = run(m1);

  // forward bit-identity across lambdas
  REQUIRE(lb0.l_p == lb03.l_p);
  REQUIRE(lb0.l_p == lb1.l_p);
  for (int i = 0; i < 2; ++i) {
    REQUIRE(lb0.l_adv[i] == lb03.l_adv[i]);
    REQUIRE(lb0.l_adv[i] == lb1.l_adv[i]);
  }
  CHECK(lb0.total == lb0.l_p);

  const auto g0 = grad_snapshot(m0);
  const auto g03 = grad_snapshot(m03);
  const auto g1 = grad_snapshot(m1);
  auto reg = m03.params();

  std::size_t off = 0;
  int checked_boundary = 0, checked_cls = 0, checked_dec = 0;
  for (const auto& pr : reg) {
    const bool is_cls = pr.name.find(".classifier.") != std::string::npos;
    const bool is_dec = pr.name.rfind("decoder.", 0) == 0;
    for (std::size_t j = 0; j < pr.size; ++j, ++off) {
      if (is_cls) {
        // the classifier descends on L_adv unscaled, whatever lambda is
        REQUIRE(g03[off] == g0[off]);
        REQUIRE(g03[off] == g1[off]);
        ++checked_cls;
      } else if (is_dec) {
        // only L_p reaches the decoder
        REQUIRE(g03[off] == g0[off]);
        ++checked_dec;
      } else {
        // g(0.3) - g(0) == -0.3 * g_adv, with g_adv = g(0) - g(1)
        const double lhs = g03[off] - g0[off];
        const double rhs = -0.3 * (g0[off] - g1[off]);
        REQUIRE(std::abs(lhs - rhs) <=
                1e-9 * std::max(1.0, std::abs(rhs)));
        ++checked_boundary;
      }
    }
  }
  CHECK(checked_boundary > 0);
  CHECK(checked_cls > 0);
  CHECK(checked_dec > 0);
}

TEST_CASE("analytic gradients match finite differences end to end") {
  MsatlModel<double> model(tiny_config());
  BatchFixture fx(8);

  model.zero_grads();
  model.compute_loss(fx.batch, SupervisionMode::target_only, true);

  auto objective = [&](bool classifier_term) {
    const LossBreakdown lb =
        model.compute_loss(fx.batch, SupervisionMode::target_only, false);
    if (classifier_term) return lb.l_adv[0] + lb.l_adv[1];
    return lb.total;
  };

  const double h = 1e-5;
  auto reg = model.params();
  for (auto& pr : reg) {
    const bool is_cls = pr.name.find(".classifier.") != std::string::npos;
    std::vector<std::size_t> idx{0, pr.size / 2, pr.size - 1};
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    for (const std::size_t j : idx) {
      const double keep = pr.value[j];
      pr.value[j] = keep + h;
      const double up = objective(is_cls);
      pr.value[j] = keep - h;
      const double dn = objective(is_cls);
      pr.value[j] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double g = pr.grad[j];
      const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
      CAPTURE(pr.name);
      CAPTURE(j);
      CHECK(std::abs(fd - g) / denom < 1e-4);
    }
  }
}

TEST_CASE("duplicate samples in a sub-batch are counted per occurrence") {
  MsatlModel<double> model(tiny_config());
  BatchFixture fx(8);

  // duplicate the target in sub-batch 1's target half
  Batch dup = fx.batch;
  dup.sub_batches[0].target_samples.push_back(&fx.store[2]);
  dup.sub_batches[0].source_samples.push_back(&fx.store[0]);

  const LossBreakdown lb =
      model.compute_loss(dup, SupervisionMode::target_only, false);

  const auto ft = model.extract_features(1, image_to_tensor<double>(fx.store[2].image));
  const auto fs = model.extract_features(1, image_to_tensor<double>(fx.store[0].image));
  const double bt = hand_bce(model.domain_logit(1, ft.bottleneck), 1);
  const double bs = hand_bce(model.domain_logit(1, fs.bottleneck), 0);
  CHECK(lb.l_adv[0] == doctest::Approx((2 * bt + 2 * bs) / 4.0).epsilon(1e-12));
}

TEST_CASE("per_sample_replicate supervises the source slots too") {
  MsatlModel<double> model(tiny_config());
  BatchFixture fx(8);

  std::vector<Tensor<double>> fused;
  const LossBreakdown lb = model.compute_loss(
      fx.batch, SupervisionMode::per_sample_replicate, false, &fused);
  REQUIRE(fused.size() == 3);  // target + one source per sub-batch

  double expect = 0.0;
  const DomainSample* order[3] = {&fx.store[2], &fx.store[0], &fx.store[1]};
  for (int s = 0; s < 3; ++s)
    expect += hand_ce(fused[s], order[s]->mask);
  CHECK(lb.l_p == doctest::Approx(expect / 3.0).epsilon(1e-9));

  // target-only mode must give a different l_p on this batch
  const LossBreakdown only =
      model.compute_loss(fx.batch, SupervisionMode::target_only, false);
  CHECK(only.l_p != doctest::Approx(lb.l_p).epsilon(1e-12));
}

TEST_CASE("checkpoint round-trip preserves parameters bitwise") {
  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / ("msatl_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);

  SUBCASE("double model") {
    MsatlModel<double> model(tiny_config(0.25));
    // make the state distinctive
    auto reg = model.params();
    reg[0].value[0] = 0.123456789012345;
    save_checkpoint(dir / "ck", model);

    MsatlModel<double> back = load_checkpoint<double>(dir / "ck");
    CHECK(back.config() == model.config());
    auto rb = back.params();
    REQUIRE(rb.size() == reg.size());
    for (std::size_t i = 0; i < reg.size(); ++i)
      for (std::size_t j = 0; j < reg[i].size; ++j)
        REQUIRE(rb[i].value[j] == reg[i].value[j]);
  }
  SUBCASE("float model widens losslessly") {
    ModelConfig cfg = tiny_config();
    MsatlModel<float> model(cfg);
    save_checkpoint(dir / "ckf", model);
    MsatlModel<float> back = load_checkpoint<float>(dir / "ckf", cfg);
    auto ra = model.params(), rb = back.params();
    for (std::size_t i = 0; i < ra.size(); ++i)
      for (std::size_t j = 0; j < ra[i].size; ++j)
        REQUIRE(rb[i].value[j] == ra[i].value[j]);
  }
  SUBCASE("config mismatch is an error") {
    MsatlModel<double> model(tiny_config());
    save_checkpoint(dir / "ckm", model);
    ModelConfig other = tiny_config();
    other.base_width = 4;
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "ckm", other),
                    std::runtime_error);
  }
  SUBCASE("garbage file is rejected") {
    std::ofstream os(dir / "junk", std::ios::binary);
    os << "not a checkpoint at all";
    os.close();
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "junk"), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint<double>(dir / "missing"), std::runtime_error);
  }

  fs::remove_all(dir);
}

TEST_CASE("model input validation") {
  MsatlModel<double> model(tiny_config());
  Rng rng(3);
  const DomainSample wrong = random_sample(16, DomainId::target(), "w", rng);
  CHECK_THROWS_AS(model.infer(wrong.image), std::invalid_argument);

  Tensor<double> bad_c(2, 8, 8);
  CHECK_THROWS_AS(model.extract_features(1, bad_c), std::invalid_argument);

  const DomainSample ok = random_sample(8, DomainId::target(), "o", rng);
  CHECK_THROWS_AS(model.extract_features(3, image_to_tensor<double>(ok.image)),
                  std::out_of_range);

  BatchFixture fx(8);
  Batch short_batch = fx.batch;
  short_batch.sub_batches.pop_back();
  CHECK_THROWS_AS(
      model.compute_loss(short_batch, SupervisionMode::target_only, false),
      std::invalid_argument);

  Batch no_target = fx.batch;
  for (auto& sb : no_target.sub_batches) sb.target_samples.clear();
  CHECK_THROWS_AS(
      model.compute_loss(no_target, SupervisionMode::target_only, false),
      std::invalid_argument);
}

TEST_CASE("clamp_mu floors mu at zero") {
  MsatlModel<double> model(tiny_config());
  model.sub_network(1).attention.mu = -0.5;
  model.sub_network(2).attention.mu = 0.25;
  model.clamp_mu();
  CHECK(model.sub_network(1).attention.mu == 0.0);
  CHECK(model.sub_network(2).attention.mu == 0.25);
}
