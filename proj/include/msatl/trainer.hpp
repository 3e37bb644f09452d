#pragma once

#include "msatl/checkpoint.hpp"
#include "msatl/metrics.hpp"
#include "msatl/model.hpp"
#include "msatl/nn/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace msatl::train {

enum class Ablation { none, no_attention, independent_target };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double lambda = 0.3;
  int sub_batch_size = 2;  // n_sub_b, half sources / half targets
  Ablation ablation = Ablation::none;
  nn::SupervisionMode supervision = nn::SupervisionMode::target_only;
  std::filesystem::path out_dir;  // empty -> no artifacts written

  void validate() const;
};

// no_attention acts at build time: the attention module becomes the identity
// and its parameters leave the registry. independent_target acts in the
// batcher. none leaves both invariants intact.
nn::ModelConfig apply_ablation(nn::ModelConfig mc, Ablation a);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double l_p = 0.0;
  std::vector<double> l_adv;  // batch means per sub-network
  double total = 0.0;
  double val_dice = 0.0;
  double val_iou = 0.0;
  double wall_ms = 0.0;  // kept in memory only; never serialized
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_dice = -1.0;

  // one JSON object per epoch; wall_ms is excluded so reruns are
  // byte-identical
  void write_jsonl(const std::filesystem::path& path) const;
};

using PredictFn = std::function<MaskU8(const DomainSample&)>;

// Per-image metrics via a caller-supplied predictor; beta for F_beta.
MetricReport evaluate_with(const DomainDataset& ds,
                                    const PredictFn& predict, double beta = 1.0);

template <typename T>
MaskU8 threshold_probs(const nn::Tensor<T>& probs, double thr = 0.5) {
  MaskU8 m(probs.h, probs.w);
  const int k = probs.h * probs.w;
  for (int p = 0; p < k; ++p)
    m.data[p] = probs.v[static_cast<std::size_t>(k) + p] > thr ? 1 : 0;
  return m;
}

// Fused inference on every image, threshold at 0.5, metrics module rollup.
template <typename T>
MetricReport evaluate(const nn::MsatlModel<T>& model,
                               const DomainDataset& ds, double beta = 1.0) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  return evaluate_with(ds, [&](const DomainSample& s) {
    return threshold_probs(model.infer(s.image));
  }, beta);
}

// Aborts with a diagnostic naming the offending term; silent skipping would
// mask GRL sign bugs.
void check_finite(const nn::LossBreakdown& lb, int epoch, int batch);

// Per epoch: plan batches, per batch extract features, domain logits, fuse,
// predict, combined loss, backprop, Adam update, mu clamp; then validate and
// checkpoint the best-Dice model. Deterministic given cfg.seed.
template <typename T>
TrainHistory train(nn::MsatlModel<T>& model, const DomainDataset& target_train,
                   const std::vector<DomainDataset>& sources,
                   const DomainDataset& target_val, const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(sources.size()) != model.num_sources())
    throw std::invalid_argument("train: source count does not match model");
  if (cfg.lambda != model.config().lambda)
    throw std::invalid_argument("train: lambda differs between config and model");
  if ((cfg.ablation == Ablation::no_attention) == model.config().use_attention)
    throw std::invalid_argument("train: ablation does not match model attention flag");
  if (target_val.samples.empty())
    throw std::invalid_argument("train: empty validation set");

  const BatcherConfig bc = BatcherConfig::from_sub_batch(
      cfg.sub_batch_size, model.num_sources(), cfg.seed,
      cfg.ablation == Ablation::independent_target);

  nn::Adam<T> opt(cfg.learning_rate);
  TrainHistory hist;
  const bool emit = !cfg.out_dir.empty();
  if (emit) std::filesystem::create_directories(cfg.out_dir);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochPlan plan = plan_epoch(target_train, sources, bc, epoch - 1);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.l_adv.assign(model.num_sources(), 0.0);
    int batches = 0;
    while (auto batch = plan.next_batch()) {
      model.zero_grads();
      const nn::LossBreakdown lb =
          model.compute_loss(*batch, cfg.supervision, /*with_grad=*/true);
      check_finite(lb, epoch, batches);
      nn::ParamRegistry<T> reg = model.params();
      opt.step(reg);
      model.clamp_mu();
      rec.l_p += lb.l_p;
      rec.total += lb.total;
      for (int i = 0; i < model.num_sources(); ++i) rec.l_adv[i] += lb.l_adv[i];
      ++batches;
    }
    rec.l_p /= batches;
    rec.total /= batches;
    for (double& a : rec.l_adv) a /= batches;

    const MetricReport val = evaluate(model, target_val);
    rec.val_dice = val.dice.mean;
    rec.val_iou = val.iou.mean;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    hist.epochs.push_back(rec);

    if (rec.val_dice > hist.best_val_dice) {
      hist.best_val_dice = rec.val_dice;
      hist.best_epoch = epoch;
      if (emit) nn::save_checkpoint(cfg.out_dir / "checkpoint_best", model);
    }
  }

  if (emit) {
    nn::save_checkpoint(cfg.out_dir / "checkpoint_last", model);
    hist.write_jsonl(cfg.out_dir / "history.jsonl");
  }
  return hist;
}

// Convenience wrapper: builds the (possibly ablated) model from one seed and
// trains it. The acceptance runs and the CLI both go through here.
template <typename T>
struct RunResult {
  nn::MsatlModel<T> model;
  TrainHistory history;
};

template <typename T>
RunResult<T> run_training(nn::ModelConfig mc, const TrainConfig& cfg,
                          const DomainDataset& target_train,
                          const std::vector<DomainDataset>& sources,
                          const DomainDataset& target_val) {
  mc.seed = cfg.seed;
  mc.lambda = cfg.lambda;
  mc.num_sources = static_cast<int>(sources.size());
  mc = apply_ablation(mc, cfg.ablation);
  RunResult<T> r{nn::MsatlModel<T>(mc), TrainHistory{}};
  r.history = train(r.model, target_train, sources, target_val, cfg);
  return r;
}

}  // namespace msatl::train
