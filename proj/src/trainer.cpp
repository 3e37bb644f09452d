#include "msatl/trainer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace msatl::train {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_attention: return "no_attention";
    case Ablation::independent_target: return "independent_target";
  }
  throw std::invalid_argument("unknown ablation");
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_attention") return Ablation::no_attention;
  if (s == "independent_target") return Ablation::independent_target;
  throw std::invalid_argument("unknown ablation \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs < 1");
  if (learning_rate <= 0) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
  if (lambda < 0) throw std::invalid_argument("TrainConfig: lambda < 0");
  if (sub_batch_size < 2 || sub_batch_size % 2 != 0)
    throw std::invalid_argument("TrainConfig: sub_batch_size must be even and >= 2");
}

nn::ModelConfig apply_ablation(nn::ModelConfig mc, Ablation a) {
  mc.use_attention = (a != Ablation::no_attention);
  return mc;
}

void TrainHistory::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const EpochRecord& r : epochs) {
    nlohmann::ordered_json j{{"epoch", r.epoch},
                             {"l_p", r.l_p},
                             {"l_adv", r.l_adv},
                             {"total", r.total},
                             {"val_dice", r.val_dice},
                             {"val_iou", r.val_iou}};
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

MetricReport evaluate_with(const DomainDataset& ds,
                                    const PredictFn& predict, double beta) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<ImageMetrics> rows;
  rows.reserve(ds.samples.size());
  for (const DomainSample& s : ds.samples) {
    const MaskU8 pred = predict(s);
    rows.push_back(image_metrics(s.sample_id, confusion(pred.data, s.mask.data), beta));
  }
  return aggregate(std::move(rows), beta);
}

void check_finite(const nn::LossBreakdown& lb, int epoch, int batch) {
  const auto bad = [&](const std::string& term) {
    throw std::runtime_error("non-finite loss term " + term + " at epoch " +
                             std::to_string(epoch) + " batch " + std::to_string(batch));
  };
  if (!std::isfinite(lb.l_p)) bad("l_p");
  for (std::size_t i = 0; i < lb.l_adv.size(); ++i)
    if (!std::isfinite(lb.l_adv[i])) bad("l_adv[" + std::to_string(i + 1) + "]");
  if (!std::isfinite(lb.total)) bad("total");
}

}  // namespace msatl::train
