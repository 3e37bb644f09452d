#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace msatl {

// Interleaved RGB, 8 bits per channel.
struct ImageU8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;  // h*w*3, RGB

  ImageU8() = default;
  ImageU8(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_ * 3, 0) {}

  std::uint8_t& at(int y, int x, int ch) {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + ch];
  }
  std::uint8_t at(int y, int x, int ch) const {
    return data[(static_cast<std::size_t>(y) * w + x) * 3 + ch];
  }
};

// Per-pixel class indices, values in {0,1}.
struct MaskU8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;

  MaskU8() = default;
  MaskU8(int h_, int w_) : h(h_), w(w_), data(static_cast<std::size_t>(h_) * w_, 0) {}

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

struct DomainId {
  // index 0 is the target domain; source domains are 1..N
  int index = 0;
  bool is_target() const { return index == 0; }
  static DomainId target() { return {0}; }
  static DomainId source(int i) { return {i}; }
  bool operator==(const DomainId&) const = default;
};

std::string to_string(const DomainId& id);

struct DomainSample {
  ImageU8 image;
  MaskU8 mask;
  DomainId domain_id;
  std::string sample_id;
};

struct DomainDataset {
  DomainId domain_id;
  std::vector<DomainSample> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

// Named binary part masks of one sample; pairwise disjoint, union equals the
// sample's full object mask.
struct PartAnnotation {
  std::map<std::string, MaskU8> part_masks;
};

struct NoiseSpec {
  double mean = 127.0;
  double variance = 255.0;
  std::uint64_t seed = 0;
};

}  // namespace msatl
