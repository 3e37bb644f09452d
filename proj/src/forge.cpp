#include "msatl/forge.hpp"
#include "msatl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msatl {

DomainSample forge_source(const DomainSample& sample, const PartAnnotation& parts,
                          const std::string& keep_part, const NoiseSpec& noise,
                          DomainId forged_id) {
  const auto it = parts.part_masks.find(keep_part);
  if (it == parts.part_masks.end()) {
    std::string known;
    for (const auto& [name, _] : parts.part_masks)
      known += (known.empty() ? "" : ", ") + name;
    throw std::invalid_argument("forge_source: unknown part \"" + keep_part +
                                "\"; known parts: " + known);
  }
  if (noise.variance < 0.0)
    throw std::invalid_argument("forge_source: variance must be >= 0");

  const int h = sample.image.h, w = sample.image.w;
  for (const auto& [name, mask] : parts.part_masks)
    if (mask.h != h || mask.w != w)
      throw std::invalid_argument("forge_source: part \"" + name +
                                  "\" size mismatch");

  // union of all parts except keep_part
  MaskU8 occluded(h, w);
  for (const auto& [name, mask] : parts.part_masks) {
    if (name == keep_part) continue;
    for (std::size_t i = 0; i < occluded.data.size(); ++i)
      occluded.data[i] |= mask.data[i];
  }

  DomainSample out = sample;
  out.domain_id = forged_id;

  Rng rng(noise.seed);
  const double sd = std::sqrt(noise.variance);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!occluded.at(y, x)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        const long v = std::lround(rng.normal(noise.mean, sd));
        out.image.at(y, x, ch) =
            static_cast<std::uint8_t>(std::clamp(v, 0L, 255L));
      }
    }

  const MaskU8& keep = it->second;
  for (std::size_t i = 0; i < out.mask.data.size(); ++i)
    out.mask.data[i] = out.mask.data[i] & keep.data[i];
  return out;
}

DatasetSplit split_dataset(const DomainDataset& ds, const SplitRatios& ratios,
                           std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (ratios.train <= 0.0 || ratios.val <= 0.0 || ratios.test <= 0.0)
    throw std::invalid_argument("split_dataset: all ratios must be positive");
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_dataset: ratios must sum to 1");

  const int n = ds.size();
  const int n_train_floor = static_cast<int>(std::floor(n * ratios.train + 1e-9));
  const int n_val = static_cast<int>(std::floor(n * ratios.val + 1e-9));
  const int n_test = static_cast<int>(std::floor(n * ratios.test + 1e-9));
  const int n_train = n - n_val - n_test;  // remainder goes to train
  if (n_train < n_train_floor)
    throw std::logic_error("split_dataset: allocation overflow");
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw std::invalid_argument("split_dataset: split would leave an empty subset");

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  DatasetSplit split;
  split.train.domain_id = split.val.domain_id = split.test.domain_id = ds.domain_id;
  for (int i = 0; i < n; ++i) {
    const DomainSample& s = ds.samples[order[i]];
    if (i < n_train)
      split.train.samples.push_back(s);
    else if (i < n_train + n_val)
      split.val.samples.push_back(s);
    else
      split.test.samples.push_back(s);
  }
  return split;
}

}  // namespace msatl
