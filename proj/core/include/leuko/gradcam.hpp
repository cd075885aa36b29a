#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "leuko/grid.hpp"
#include "leuko/tinycnn.hpp"

namespace leuko {

/// Relevance in [0,1] at input resolution; max is exactly 1 unless all zero.
struct Heatmap {
  UnitSlice grid;
  std::string source_layer;
};

enum class TargetClass { Positive, Negative };

/// The differentiated score is scale * logit for the positive class and
/// -scale * logit for the negative class.
struct GradcamTarget {
  TargetClass target = TargetClass::Positive;
  double scale = 1.0;
};

struct GradcamDetail {
  /// Spatial mean of d(score)/d(activation) per channel.
  std::vector<double> channel_weights;
  /// ReLU(sum_k weight_k * activation_k) at the layer's own resolution.
  UnitSlice layer_map;
  Heatmap heatmap;
};

inline constexpr std::string_view kDefaultGradcamLayer = "conv3";

GradcamDetail gradcam_detail(const CnnModel& model, const UnitSlice& input,
                             std::string_view layer = kDefaultGradcamLayer, GradcamTarget target = {});
Heatmap gradcam(const CnnModel& model, const UnitSlice& input,
                std::string_view layer = kDefaultGradcamLayer, GradcamTarget target = {});

struct RgbImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  bool operator==(const RgbImage&) const = default;
};

/// Black -> red -> yellow -> white; each channel non-decreasing in h.
std::array<std::uint8_t, 3> heat_color(double h) noexcept;

/// (1 - alpha) * grayscale(slice) + alpha * heat_color(heatmap), rounded.
RgbImage overlay(const UnitSlice& slice, const Heatmap& heatmap, double alpha);

std::string encode_heatmap_csv(const Heatmap& heatmap);
std::vector<std::uint8_t> encode_png(const RgbImage& image);
void save_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace leuko
