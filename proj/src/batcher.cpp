#include "msatl/batcher.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>

namespace msatl {

void BatcherConfig::validate() const {
  if (n_sources < 1)
    throw std::invalid_argument("batcher: need at least one source domain");
  if (n_b < 1 || n_b % n_sources != 0)
    throw std::invalid_argument("batcher: n_b must be a positive multiple of N");
  if (n_sub_b() % 2 != 0 || n_sub_b() < 2)
    throw std::invalid_argument(
        "batcher: sub-batch size must be even and >= 2 (half target, half source)");
}

EpochPlan::Cursor::Cursor(const DomainDataset* ds, std::uint64_t seed)
    : ds_(ds), rng_(seed) {
  order_.resize(ds->samples.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  rng_.shuffle(order_);
}

const DomainSample* EpochPlan::Cursor::next() {
  if (pos_ == order_.size()) {
    rng_.shuffle(order_);
    pos_ = 0;
  }
  return &ds_->samples[order_[pos_++]];
}

EpochPlan plan_epoch(const DomainDataset& target,
                     const std::vector<DomainDataset>& sources,
                     const BatcherConfig& cfg, int epoch) {
  cfg.validate();
  if (static_cast<int>(sources.size()) != cfg.n_sources)
    throw std::invalid_argument("batcher: source count does not match config");
  if (target.samples.empty())
    throw std::invalid_argument("batcher: target dataset is empty");
  for (const auto& s : sources)
    if (s.samples.empty())
      throw std::invalid_argument("batcher: a source dataset is empty");

  const auto ep = static_cast<std::uint64_t>(epoch);
  EpochPlan plan;
  plan.cfg_ = cfg;

  int max_source = 0;
  for (int i = 0; i < cfg.n_sources; ++i) {
    max_source = std::max(max_source, sources[i].size());
    plan.source_cursors_.emplace_back(
        &sources[i],
        derive_seed(cfg.seed, "batch.source", ep, static_cast<std::uint64_t>(i + 1)));
  }
  plan.batches_per_epoch_ = (max_source + cfg.half() - 1) / cfg.half();

  if (cfg.independent_target) {
    for (int i = 1; i <= cfg.n_sources; ++i)
      plan.target_cursors_.emplace_back(
          &target,
          derive_seed(cfg.seed, "batch.target", ep, static_cast<std::uint64_t>(i)));
  } else {
    plan.target_cursors_.emplace_back(&target,
                                      derive_seed(cfg.seed, "batch.target", ep));
  }
  return plan;
}

std::optional<Batch> EpochPlan::next_batch() {
  if (emitted_ == batches_per_epoch_) return std::nullopt;

  Batch batch;
  batch.batch_index = emitted_;

  // the shared target half is drawn once and reused in every sub-batch
  std::vector<const DomainSample*> shared_targets;
  if (!cfg_.independent_target) {
    shared_targets.reserve(cfg_.half());
    for (int k = 0; k < cfg_.half(); ++k)
      shared_targets.push_back(target_cursors_[0].next());
  }

  for (int i = 0; i < cfg_.n_sources; ++i) {
    SubBatch sub;
    sub.source_index = i + 1;
    for (int k = 0; k < cfg_.half(); ++k)
      sub.source_samples.push_back(source_cursors_[i].next());
    if (cfg_.independent_target) {
      for (int k = 0; k < cfg_.half(); ++k)
        sub.target_samples.push_back(target_cursors_[i].next());
    } else {
      sub.target_samples = shared_targets;
    }
    batch.sub_batches.push_back(std::move(sub));
  }

  ++emitted_;
  return batch;
}

std::string Batch::to_json_line() const {
  nlohmann::ordered_json j;
  j["batch"] = batch_index;
  auto subs = nlohmann::ordered_json::array();
  for (const auto& sub : sub_batches) {
    nlohmann::ordered_json s;
    s["source"] = sub.source_index;
    auto ids = [](const std::vector<const DomainSample*>& v) {
      auto a = nlohmann::ordered_json::array();
      for (const auto* p : v) a.push_back(p->sample_id);
      return a;
    };
    s["source_ids"] = ids(sub.source_samples);
    s["target_ids"] = ids(sub.target_samples);
    subs.push_back(std::move(s));
  }
  j["sub_batches"] = std::move(subs);
  return j.dump();
}

}  // namespace msatl
