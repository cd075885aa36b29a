#pragma once

#include <cstddef>
#include <string_view>

#include "leuko/grid.hpp"

namespace leuko {

/// A: windowing only. B: band filter + grayscale opening.
/// C: mean filter + contrast stretch + saturation removal.
enum class Variant { A, B, C };

Variant parse_variant(std::string_view text);
char variant_name(Variant v) noexcept;

struct BandFilterParams {
  double low_cut = 0.18;
  double high_cut = 0.8;
  void validate() const;
};

struct ContrastParams {
  double low = 0.15;
  double high = 0.65;
  void validate() const;
};

/// Flat rectangular structuring element. The anchor is the element cell that
/// sits on the output pixel.
struct StructuringElement {
  std::size_t rows = 4;
  std::size_t cols = 4;
  std::size_t anchor_row = 1;
  std::size_t anchor_col = 1;

  StructuringElement reflected() const noexcept {
    return {rows, cols, rows - 1 - anchor_row, cols - 1 - anchor_col};
  }
};

/// Zeroes x <= low_cut and x >= high_cut, keeps values strictly between.
UnitSlice band_filter(const UnitSlice& slice, const BandFilterParams& params = {});

// Windowed min / max with replicate (edge clamp) padding.
UnitSlice erode(const UnitSlice& slice, const StructuringElement& se);
UnitSlice dilate(const UnitSlice& slice, const StructuringElement& se);

/// Erosion with se, then dilation with the reflected element.
UnitSlice morph_open(const UnitSlice& slice, const StructuringElement& se = {});

/// k x k box mean with replicate padding.
UnitSlice mean_filter(const UnitSlice& slice, std::size_t k = 3);

/// clamp((x - low) / (high - low), 0, 1)
UnitSlice contrast_stretch(const UnitSlice& slice, const ContrastParams& params = {});

/// Pixels exactly equal to 1.0 become 0.
UnitSlice saturation_zero(const UnitSlice& slice);

UnitSlice apply_variant(const UnitSlice& slice, Variant variant);
UnitVolume apply_variant(const UnitVolume& volume, Variant variant);

}  // namespace leuko
