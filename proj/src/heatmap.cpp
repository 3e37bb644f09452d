#include "msatl/heatmap.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msatl::viz {

Saliency saliency_map(const nn::Tensor<float>& features) {
  Saliency s;
  s.h = features.h;
  s.w = features.w;
  const int k = features.k();
  s.v.assign(k, 0.0f);
  for (int c = 0; c < features.c; ++c)
    for (int p = 0; p < k; ++p) {
      const float f = features.v[static_cast<std::size_t>(c) * k + p];
      s.v[p] += f * f;
    }
  for (float& v : s.v) v = std::sqrt(v);
  return s;
}

Saliency upsample_bilinear(const Saliency& s, int out_h, int out_w) {
  cv::Mat src(s.h, s.w, CV_32F, const_cast<float*>(s.v.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  Saliency out;
  out.h = out_h;
  out.w = out_w;
  out.v.assign(dst.ptr<float>(), dst.ptr<float>() + static_cast<std::size_t>(out_h) * out_w);
  return out;
}

Saliency normalize(const Saliency& s) {
  Saliency out = s;
  const auto [mn, mx] = std::minmax_element(s.v.begin(), s.v.end());
  const float lo = *mn, hi = *mx;
  if (hi <= lo) {
    std::fill(out.v.begin(), out.v.end(), 0.0f);
    return out;
  }
  for (float& v : out.v) v = (v - lo) / (hi - lo);
  return out;
}

double mean_over(const Saliency& s, const MaskU8& region) {
  if (region.h != s.h || region.w != s.w)
    throw std::invalid_argument("mean_over: region shape mismatch");
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::size_t p = 0; p < s.v.size(); ++p)
    if (region.data[p]) {
      sum += s.v[p];
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

ImageU8 render_overlay(const ImageU8& base, const Saliency& normalized) {
  if (base.h != normalized.h || base.w != normalized.w)
    throw std::invalid_argument("render_overlay: shape mismatch");
  cv::Mat gray(base.h, base.w, CV_8U);
  for (int y = 0; y < base.h; ++y)
    for (int x = 0; x < base.w; ++x)
      gray.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(
          std::lround(std::clamp(normalized.at(y, x), 0.0f, 1.0f) * 255.0f));
  cv::Mat heat;
  cv::applyColorMap(gray, heat, cv::COLORMAP_JET);  // BGR, red = high
  ImageU8 out(base.h, base.w);
  for (int y = 0; y < base.h; ++y)
    for (int x = 0; x < base.w; ++x) {
      const cv::Vec3b h = heat.at<cv::Vec3b>(y, x);
      const float a = 0.45f;
      for (int c = 0; c < 3; ++c) {
        const float b = static_cast<float>(base.at(y, x, c));
        const float hv = static_cast<float>(h[2 - c]);  // BGR -> RGB
        out.at(y, x, c) = static_cast<std::uint8_t>(std::lround((1 - a) * b + a * hv));
      }
    }
  return out;
}

Saliency subnetwork_saliency(const nn::MsatlModel<float>& model, int i,
                             const ImageU8& image) {
  const nn::Tensor<float> x = nn::image_to_tensor<float>(image);
  const nn::FeatureSet<float> fs = model.extract_features(i, x);
  return upsample_bilinear(saliency_map(fs.bottleneck), image.h, image.w);
}

}  // namespace msatl::viz
