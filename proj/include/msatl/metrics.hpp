#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace msatl {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;
};

// Per-image scores. `degenerate` marks images where a 0/0 convention fired
// (empty prediction against empty ground truth); their scores are defined
// as 1.0 so aggregation stays total.
struct ImageMetrics {
  std::string sample_id;
  double iou = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_beta = 0.0;
  double dice = 0.0;
  bool degenerate = false;
};

struct MetricStats {
  double mean = 0.0;
  double std_dev = 0.0;  // sample std (n-1); 0 for a single image
};

struct MetricReport {
  double beta = 1.0;
  std::vector<ImageMetrics> per_image;
  MetricStats iou, precision, recall, f_beta, dice;

  std::string to_json() const;
};

// Exact pixel counting of pred vs gt for the given positive class.
// Masks are {0,1} arrays of equal size.
ConfusionCounts confusion(const std::vector<std::uint8_t>& pred,
                          const std::vector<std::uint8_t>& gt,
                          std::uint8_t positive_class = 1);

// tp / (tp + fp + fn); empty-vs-empty (0/0) is defined as 1.0
double iou(const ConfusionCounts& c);
// { tp/(tp+fp), tp/(tp+fn) }; each 0/0 is defined as 1.0
std::pair<double, double> precision_recall(const ConfusionCounts& c);
// (1+b^2) P R / (b^2 P + R); zero denominator -> 0.0
double f_beta(double precision, double recall, double beta);

ImageMetrics image_metrics(std::string sample_id, const ConfusionCounts& c,
                           double beta = 1.0);

// Mean and sample standard deviation per metric over a non-empty list.
MetricReport aggregate(std::vector<ImageMetrics> per_image, double beta = 1.0);

}  // namespace msatl
