#pragma once

#include "msatl/dataset.hpp"
#include "msatl/model.hpp"

#include <vector>

namespace msatl::viz {

// Scalar saliency grid; values are raw magnitudes until normalized.
struct Saliency {
  int h = 0, w = 0;
  std::vector<float> v;

  float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

// Channel-wise L2 norm per position of a feature map.
Saliency saliency_map(const nn::Tensor<float>& features);

// Bilinear resize (half-pixel centers) to the given size.
Saliency upsample_bilinear(const Saliency& s, int out_h, int out_w);

// Min-max normalize to [0,1]; a constant map becomes all zeros.
Saliency normalize(const Saliency& s);

// Mean saliency over the nonzero region of a {0,1} mask (0 if region empty).
double mean_over(const Saliency& s, const MaskU8& region);

// Red-high/blue-low colormap blended over the input image.
ImageU8 render_overlay(const ImageU8& base, const Saliency& normalized);

// Per-sub-network saliency of the attended bottleneck for one image,
// upsampled to input resolution. Index i is 1-based.
Saliency subnetwork_saliency(const nn::MsatlModel<float>& model, int i,
                             const ImageU8& image);

}  // namespace msatl::viz
