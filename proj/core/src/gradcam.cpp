#include "leuko/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "leuko/volume_prep.hpp"

namespace leuko {

GradcamDetail gradcam_detail(const CnnModel& model, const UnitSlice& input, std::string_view layer,
                             GradcamTarget target) {
  const auto& arch = model.architecture();
  const std::size_t layer_index = arch.layer_index(layer);
  if (!(target.scale > 0.0)) fail(Errc::BadConfig, "Grad-CAM target scale must be positive");

  const UnitSlice* one[] = {&input};
  const ForwardCache cache = forward(model, make_batch(one, arch.input_channels));
  const double sign = target.target == TargetClass::Positive ? 1.0 : -1.0;
  const double score_gradient[] = {sign * target.scale};
  const BackpropResult back = backprop(model, cache, score_gradient, layer_index);
  const Tensor4& grad = *back.activation_gradient;
  const Tensor4 activation = cache.activation(layer_index);

  GradcamDetail detail;
  const std::size_t plane = activation.plane_size();
  detail.channel_weights.resize(activation.c);
  for (std::size_t k = 0; k < activation.c; ++k) {
    const double* g = grad.plane(0, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += g[i];
    detail.channel_weights[k] = sum / static_cast<double>(plane);
  }

  detail.layer_map = UnitSlice(activation.h, activation.w);
  auto map = detail.layer_map.values();
  for (std::size_t k = 0; k < activation.c; ++k) {
    const double* a = activation.plane(0, k);
    for (std::size_t i = 0; i < plane; ++i) map[i] += detail.channel_weights[k] * a[i];
  }
  for (double& v : map) v = std::max(v, 0.0);

  UnitSlice up = resample_bilinear(detail.layer_map, input.rows(), input.cols());
  const double peak = *std::max_element(up.values().begin(), up.values().end());
  for (double& v : up.values()) v = peak > 0.0 ? v / peak : 0.0;
  detail.heatmap = {std::move(up), Architecture::layer_name(layer_index)};
  return detail;
}

Heatmap gradcam(const CnnModel& model, const UnitSlice& input, std::string_view layer,
                GradcamTarget target) {
  return gradcam_detail(model, input, layer, target).heatmap;
}

std::array<std::uint8_t, 3> heat_color(double h) noexcept {
  const double x = std::clamp(h, 0.0, 1.0) * 3.0;
  auto channel = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  return {channel(x), channel(x - 1.0), channel(x - 2.0)};
}

RgbImage overlay(const UnitSlice& slice, const Heatmap& heatmap, double alpha) {
  if (!slice.same_shape(heatmap.grid)) fail(Errc::ShapeMismatch, "overlay needs matching dimensions");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(Errc::BadConfig, "overlay alpha must lie in [0,1]");
  RgbImage image{slice.rows(), slice.cols(), std::vector<std::uint8_t>(slice.size() * 3)};
  for (std::size_t i = 0; i < slice.size(); ++i) {
    const double gray = std::lround(std::clamp(slice.values()[i], 0.0, 1.0) * 255.0);
    const auto color = heat_color(heatmap.grid.values()[i]);
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double blended = (1.0 - alpha) * gray + alpha * color[ch];
      image.pixels[3 * i + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(blended, 0.0, 255.0)));
    }
  }
  return image;
}

std::string encode_heatmap_csv(const Heatmap& heatmap) {
  std::string out;
  char cell[32];
  for (std::size_t r = 0; r < heatmap.grid.rows(); ++r) {
    const auto row = heatmap.grid.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      std::snprintf(cell, sizeof cell, c == 0 ? "%.17g" : ",%.17g", row[c]);
      out += cell;
    }
    out += '\n';
  }
  return out;
}

}  // namespace leuko
