#pragma once

#include "msatl/dataset.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace msatl {

// --- disk layout -----------------------------------------------------------
// <root>/images/<stem>.png|.jpg and <root>/masks/<stem>.png, mask values in
// {0,255}. Samples are sorted by stem; the stem is the sample_id.

DomainDataset load_dataset(const std::filesystem::path& root, DomainId domain_id);
void save_dataset(const DomainDataset& ds, const std::filesystem::path& root);

// Part masks for a corpus: <root>/<part_name>/<stem>.png
PartAnnotation load_parts(const std::filesystem::path& root, const std::string& stem);
std::vector<std::string> list_part_names(const std::filesystem::path& root);
void save_parts(const PartAnnotation& parts, const std::filesystem::path& root,
                const std::string& stem);

// --- forging ----------------------------------------------------------------

// Cover every part other than keep_part with per-pixel, per-channel Gaussian
// noise clip(round(N(mean, variance)), 0, 255) and restrict the mask to
// keep_part. Deterministic given noise.seed.
DomainSample forge_source(const DomainSample& sample, const PartAnnotation& parts,
                          const std::string& keep_part, const NoiseSpec& noise,
                          DomainId forged_id);

// --- synthetic toy corpus ----------------------------------------------------

struct ToyConfig {
  int image_size = 64;
  int target_count = 40;
  int source_count = 80;  // per source
  int num_parts = 2;      // N; part 1 = "body", part 2 = "wheels", then "block_k"
  double noise_mean = 127.0;
  double noise_variance = 6400.0;  // std 80: occluded parts must be loud
                                   // enough to create real domain pressure
};

struct ToyScene {
  DomainSample sample;   // full image + full object mask (target-style)
  PartAnnotation parts;  // disjoint, union == sample.mask
};

std::vector<std::string> toy_part_names(int num_parts);

// One deterministic scene; `stream` selects the per-sample random stream.
ToyScene generate_toy_scene(const ToyConfig& cfg, std::uint64_t seed,
                            std::string_view domain_tag, int index);

struct ToyCorpus {
  DomainDataset target;
  std::vector<PartAnnotation> target_parts;  // aligned with target.samples
  std::vector<DomainDataset> sources;        // sources[i-1] keeps part i
};

ToyCorpus generate_toy_corpus(const ToyConfig& cfg, std::uint64_t seed);

// Writes <out>/target, <out>/source_1.., plus <out>/target/parts/<name>/.
void save_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& out);

// --- splitting ---------------------------------------------------------------

struct SplitRatios {
  double train = 0.6, val = 0.2, test = 0.2;
};

struct DatasetSplit {
  DomainDataset train, val, test;
};

// Random permutation by seed; floor allocation with the remainder assigned to
// train; every split must be non-empty.
DatasetSplit split_dataset(const DomainDataset& ds, const SplitRatios& ratios,
                           std::uint64_t seed);

}  // namespace msatl
