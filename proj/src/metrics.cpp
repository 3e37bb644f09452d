#include "msatl/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>

namespace msatl {

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& gt,
                          std::uint8_t positive_class) {
  if (pred.size() != gt.size())
    throw std::invalid_argument("confusion: mask size mismatch");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == positive_class;
    const bool g = gt[i] == positive_class;
    if (p && g)
      ++c.tp;
    else if (p && !g)
      ++c.fp;
    else if (!p && g)
      ++c.fn;
    else
      ++c.tn;
  }
  return c;
}

double iou(const ConfusionCounts& c) {
  const std::int64_t denom = c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::pair<double, double> precision_recall(const ConfusionCounts& c) {
  const double p = (c.tp + c.fp == 0)
                       ? 1.0
                       : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double r = (c.tp + c.fn == 0)
                       ? 1.0
                       : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return {p, r};
}

double f_beta(double precision, double recall, double beta) {
  if (beta <= 0.0) throw std::invalid_argument("f_beta: beta must be > 0");
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

ImageMetrics image_metrics(std::string sample_id, const ConfusionCounts& c,
                           double beta) {
  ImageMetrics m;
  m.sample_id = std::move(sample_id);
  m.degenerate = (c.tp + c.fp + c.fn == 0);
  m.iou = iou(c);
  const auto [p, r] = precision_recall(c);
  m.precision = p;
  m.recall = r;
  m.f_beta = f_beta(p, r, beta);
  m.dice = f_beta(p, r, 1.0);
  return m;
}

namespace {

MetricStats stats_of(const std::vector<ImageMetrics>& rows,
                     double ImageMetrics::* field) {
  MetricStats s;
  const double n = static_cast<double>(rows.size());
  for (const auto& r : rows) s.mean += r.*field;
  s.mean /= n;
  if (rows.size() > 1) {
    double acc = 0.0;
    for (const auto& r : rows) {
      const double d = r.*field - s.mean;
      acc += d * d;
    }
    s.std_dev = std::sqrt(acc / (n - 1.0));
  }
  return s;
}

}  // namespace

MetricReport aggregate(std::vector<ImageMetrics> per_image, double beta) {
  if (per_image.empty())
    throw std::invalid_argument("aggregate: empty metric list");
  MetricReport rep;
  rep.beta = beta;
  rep.per_image = std::move(per_image);
  rep.iou = stats_of(rep.per_image, &ImageMetrics::iou);
  rep.precision = stats_of(rep.per_image, &ImageMetrics::precision);
  rep.recall = stats_of(rep.per_image, &ImageMetrics::recall);
  rep.f_beta = stats_of(rep.per_image, &ImageMetrics::f_beta);
  rep.dice = stats_of(rep.per_image, &ImageMetrics::dice);
  return rep;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["beta"] = beta;
  auto stats = [](const MetricStats& s) {
    return nlohmann::ordered_json{{"mean", s.mean}, {"std", s.std_dev}};
  };
  j["iou"] = stats(iou);
  j["precision"] = stats(precision);
  j["recall"] = stats(recall);
  j["f_beta"] = stats(f_beta);
  j["dice"] = stats(dice);
  nlohmann::ordered_json rows = nlohmann::ordered_json::object();
  for (const auto& m : per_image) {
    rows[m.sample_id] = {{"iou", m.iou},           {"precision", m.precision},
                         {"recall", m.recall},     {"f_beta", m.f_beta},
                         {"dice", m.dice},         {"degenerate", m.degenerate}};
  }
  j["per_image"] = rows;
  return j.dump(2);
}

}  // namespace msatl
