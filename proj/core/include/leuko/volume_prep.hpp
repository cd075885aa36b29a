#pragma once

#include <cstddef>

#include "leuko/dicom.hpp"
#include "leuko/grid.hpp"

namespace leuko {

struct SliceSelectConfig {
  /// Fraction of the stack (counted from the vertex) where the window is centred.
  double center_position = 2.0 / 3.0;
  /// Number of slices kept per patient.
  std::size_t depth = 30;

  void validate() const;
};

struct ResizeConfig {
  std::size_t target_rows = 256;
  std::size_t target_cols = 256;
  std::size_t majority_rows = 512;
  std::size_t majority_cols = 512;

  void validate() const;
};

/// Contiguous block [first, first + count) of slice indices.
struct SliceRange {
  std::size_t first = 0;
  std::size_t count = 0;
  /// floor(n * center_position)
  std::size_t center = 0;

  std::size_t last() const noexcept { return first + count - 1; }
  bool operator==(const SliceRange&) const = default;
};

/// Exactly cfg.depth indices around p = floor(n * center_position), shifted
/// to fit inside [0, n) when the centred window would cross an end.
SliceRange select_slices(std::size_t n, const SliceSelectConfig& cfg);

/// Bilinear resampling with corner-aligned sample positions: output (i, j)
/// reads input (i * (rows_in - 1) / (rows_out - 1), j * ...).
UnitSlice resample_bilinear(const UnitSlice& slice, std::size_t rows, std::size_t cols);

/// Non-majority shapes go to the majority shape first, then everything is
/// resampled to the target shape; results are clamped to [0,1].
UnitSlice resize_slice(const UnitSlice& slice, const ResizeConfig& cfg);

/// raw_to_hu -> window_rescale -> select_slices -> resize_slice.
UnitVolume prepare_volume(const PatientRecord& record, const SliceSelectConfig& select,
                          const ResizeConfig& resize);

}  // namespace leuko
