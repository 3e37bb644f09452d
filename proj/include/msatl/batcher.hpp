#pragma once

#include "msatl/dataset.hpp"
#include "msatl/rng.hpp"

#include <optional>
#include <string>
#include <vector>

namespace msatl {

inline constexpr int kSourceDomainLabel = 0;
inline constexpr int kTargetDomainLabel = 1;

struct BatcherConfig {
  int n_b = 4;        // total batch size
  int n_sources = 2;  // N
  std::uint64_t seed = 0;
  // MSATL** ablation: draw the target half of each sub-batch independently,
  // breaking the cross-sub-batch identity on purpose.
  bool independent_target = false;

  int n_sub_b() const { return n_b / n_sources; }
  int half() const { return n_sub_b() / 2; }
  void validate() const;

  static BatcherConfig from_sub_batch(int sub_batch_size, int n_sources,
                                      std::uint64_t seed,
                                      bool independent_target = false) {
    return {sub_batch_size * n_sources, n_sources, seed, independent_target};
  }
};

// One slice of a batch: the samples feeding sub-network `source_index`.
// Sources carry domain label 0, targets label 1.
struct SubBatch {
  int source_index = 1;  // 1-based
  std::vector<const DomainSample*> source_samples;
  std::vector<const DomainSample*> target_samples;
};

struct Batch {
  int batch_index = 0;
  std::vector<SubBatch> sub_batches;

  // audit record: {"batch": m, "sub_batches": [{"source": i, "source_ids": [...], "target_ids": [...]}]}
  std::string to_json_line() const;
};

// Stateful batch iterator for one epoch. Every domain shuffles independently
// (seeded by cfg.seed, the epoch, and the domain); a cursor that runs out
// reshuffles and wraps, so smaller domains cycle. Datasets must outlive the
// plan; a plan has a single consumer.
class EpochPlan {
 public:
  int batches_per_epoch() const { return batches_per_epoch_; }
  int batches_emitted() const { return emitted_; }

  // nullopt signals end of epoch
  std::optional<Batch> next_batch();

 private:
  friend EpochPlan plan_epoch(const DomainDataset&,
                              const std::vector<DomainDataset>&,
                              const BatcherConfig&, int);

  class Cursor {
   public:
    Cursor(const DomainDataset* ds, std::uint64_t seed);
    const DomainSample* next();

   private:
    const DomainDataset* ds_;
    std::vector<int> order_;
    std::size_t pos_ = 0;
    Rng rng_;
  };

  BatcherConfig cfg_;
  std::vector<Cursor> source_cursors_;
  std::vector<Cursor> target_cursors_;  // one, or N when independent_target
  int batches_per_epoch_ = 0;
  int emitted_ = 0;
};

// batches_per_epoch = ceil(max_i |source_i| / (n_sub_b / 2))
EpochPlan plan_epoch(const DomainDataset& target,
                     const std::vector<DomainDataset>& sources,
                     const BatcherConfig& cfg, int epoch);

}  // namespace msatl
