#include "msatl/forge.hpp"
#include "msatl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msatl {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

struct Circle {
  double cx, cy, r;
  bool contains(int x, int y) const {
    const double dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
  }
};

struct Rect {
  int x0, y0, x1, y1;  // half-open
  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void validate(const ToyConfig& cfg) {
  if (cfg.num_parts < 1)
    throw std::invalid_argument("toy corpus: num_parts must be >= 1");
  if (cfg.target_count < 1 || cfg.source_count < 1)
    throw std::invalid_argument("toy corpus: sample counts must be >= 1");
  if (cfg.image_size < 32)
    throw std::invalid_argument("toy corpus: image_size must be >= 32");
  const double s = cfg.image_size;
  const int extra = cfg.num_parts - 2;
  if (extra > 0 && 0.05 * s + extra * 0.12 * s > 0.93 * s)
    throw std::invalid_argument("toy corpus: num_parts too large for image_size");
}

}  // namespace

std::vector<std::string> toy_part_names(int num_parts) {
  std::vector<std::string> names;
  names.push_back("body");
  if (num_parts >= 2) names.push_back("wheels");
  for (int k = 3; k <= num_parts; ++k)
    names.push_back("block_" + std::to_string(k));
  return names;
}

// A car-like scene: body rectangle in the mid area, two wheels protruding
// from its bottom edge, optional small blocks above, all on a textured
// background. Object and background colors are drawn from overlapping
// ranges, so no per-pixel intensity rule separates them; the reliable cue is
// the absence of the low-frequency background texture, which takes spatial
// context to detect. Geometry and colors jitter per sample; the vertical
// layout (body above wheels) is stable so parts stay spatially separable.
ToyScene generate_toy_scene(const ToyConfig& cfg, std::uint64_t seed,
                            std::string_view domain_tag, int index) {
  validate(cfg);
  const int s = cfg.image_size;
  Rng rng(derive_seed(seed, domain_tag, static_cast<std::uint64_t>(index)));

  const double bw = rng.uniform(0.40, 0.52) * s;
  const double bh = rng.uniform(0.22, 0.30) * s;
  const double cx = rng.uniform(0.42, 0.58) * s;
  const double cy = rng.uniform(0.38, 0.46) * s;
  const double wheel_r = rng.uniform(0.10, 0.13) * s;

  const Rect body{static_cast<int>(cx - bw / 2), static_cast<int>(cy - bh / 2),
                  static_cast<int>(cx + bw / 2), static_cast<int>(cy + bh / 2)};
  // wheels tangent to the body's bottom edge: parts stay pixel-disjoint and
  // comparable in area, so neither per-part source dominates the other
  const double wheel_y = body.y1 + wheel_r;
  const Circle wheel_l{cx - 0.36 * bw, wheel_y, wheel_r};
  const Circle wheel_r_{cx + 0.36 * bw, wheel_y, wheel_r};

  std::vector<Rect> blocks;
  for (int k = 3; k <= cfg.num_parts; ++k) {
    const int x0 = static_cast<int>((0.05 + 0.12 * (k - 3)) * s);
    blocks.push_back(Rect{x0, static_cast<int>(0.04 * s),
                          x0 + static_cast<int>(0.08 * s),
                          static_cast<int>(0.14 * s)});
  }

  double bg[3], body_col[3], wheel_col[3];
  for (double& v : bg) v = rng.uniform(60, 170);
  for (double& v : body_col) v = rng.uniform(80, 190);
  for (double& v : wheel_col) v = rng.uniform(50, 160);
  std::vector<std::array<double, 3>> block_cols(blocks.size());
  for (auto& col : block_cols)
    for (double& v : col) v = rng.uniform(70, 190);

  const double amp_x = rng.uniform(8, 16), freq_x = rng.uniform(2, 4),
               phase_x = rng.uniform(0, kTwoPi);
  const double amp_y = rng.uniform(8, 16), freq_y = rng.uniform(2, 4),
               phase_y = rng.uniform(0, kTwoPi);

  ToyScene scene;
  scene.sample.image = ImageU8(s, s);
  scene.sample.mask = MaskU8(s, s);
  const auto names = toy_part_names(cfg.num_parts);
  for (const auto& n : names) scene.parts.part_masks[n] = MaskU8(s, s);

  MaskU8& body_mask = scene.parts.part_masks["body"];
  MaskU8* wheels_mask =
      cfg.num_parts >= 2 ? &scene.parts.part_masks["wheels"] : nullptr;

  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const bool in_wheel =
          wheels_mask && (wheel_l.contains(x, y) || wheel_r_.contains(x, y));
      const bool in_body = !in_wheel && body.contains(x, y);
      int block_idx = -1;
      if (!in_wheel && !in_body)
        for (std::size_t b = 0; b < blocks.size(); ++b)
          if (blocks[b].contains(x, y)) {
            block_idx = static_cast<int>(b);
            break;
          }

      const double* base = bg;
      if (in_wheel)
        base = wheel_col;
      else if (in_body)
        base = body_col;
      else if (block_idx >= 0)
        base = block_cols[block_idx].data();

      const bool on_object = in_wheel || in_body || block_idx >= 0;
      const double tex =
          on_object ? 0.0
                    : amp_x * std::sin(kTwoPi * freq_x * x / s + phase_x) +
                          amp_y * std::sin(kTwoPi * freq_y * y / s + phase_y);
      for (int ch = 0; ch < 3; ++ch) {
        const double jitter = rng.uniform(-9, 9);
        scene.sample.image.at(y, x, ch) = to_u8(base[ch] + tex + jitter);
      }

      if (in_wheel) wheels_mask->at(y, x) = 1;
      if (in_body) body_mask.at(y, x) = 1;
      if (block_idx >= 0)
        scene.parts.part_masks[names[2 + block_idx]].at(y, x) = 1;
      if (on_object) scene.sample.mask.at(y, x) = 1;
    }

  return scene;
}

ToyCorpus generate_toy_corpus(const ToyConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const auto part_names = toy_part_names(cfg.num_parts);

  ToyCorpus corpus;
  corpus.target.domain_id = DomainId::target();
  for (int j = 0; j < cfg.target_count; ++j) {
    ToyScene scene = generate_toy_scene(cfg, seed, "target", j);
    char stem[32];
    std::snprintf(stem, sizeof(stem), "target_%04d", j);
    scene.sample.sample_id = stem;
    scene.sample.domain_id = DomainId::target();
    corpus.target.samples.push_back(std::move(scene.sample));
    corpus.target_parts.push_back(std::move(scene.parts));
  }

  for (int i = 1; i <= cfg.num_parts; ++i) {
    DomainDataset src;
    src.domain_id = DomainId::source(i);
    for (int j = 0; j < cfg.source_count; ++j) {
      ToyScene scene = generate_toy_scene(
          cfg, seed, "source_" + std::to_string(i), j);
      char stem[32];
      std::snprintf(stem, sizeof(stem), "source%d_%04d", i, j);
      scene.sample.sample_id = stem;
      NoiseSpec noise{cfg.noise_mean, cfg.noise_variance,
                      derive_seed(seed, "noise", static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(j))};
      src.samples.push_back(forge_source(scene.sample, scene.parts,
                                         part_names[i - 1], noise,
                                         DomainId::source(i)));
    }
    corpus.sources.push_back(std::move(src));
  }
  return corpus;
}

}  // namespace msatl
