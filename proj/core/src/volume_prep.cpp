#include "leuko/volume_prep.hpp"

#include <algorithm>
#include <cmath>

#include "leuko/hu_window.hpp"

namespace leuko {

void SliceSelectConfig::validate() const {
  if (!(center_position > 0.0 && center_position < 1.0)) {
    fail(Errc::BadConfig, "center_position must lie in (0,1)");
  }
  if (depth < 1) fail(Errc::BadConfig, "depth must be at least 1");
}

void ResizeConfig::validate() const {
  if (target_rows == 0 || target_cols == 0 || majority_rows == 0 || majority_cols == 0) {
    fail(Errc::BadConfig, "resize dimensions must be positive");
  }
}

SliceRange select_slices(std::size_t n, const SliceSelectConfig& cfg) {
  cfg.validate();
  if (n < cfg.depth) {
    fail(Errc::TooFewSlices,
         std::to_string(n) + " slices available, depth " + std::to_string(cfg.depth) + " required");
  }
  // The epsilon absorbs representation error, e.g. 90 * (2/3) must give 60.
  const auto center = static_cast<std::size_t>(std::floor(static_cast<double>(n) * cfg.center_position + 1e-9));
  const std::size_t half = cfg.depth / 2;
  std::size_t first = center >= half ? center - half : 0;
  first = std::min(first, n - cfg.depth);
  return {first, cfg.depth, center};
}

UnitSlice resample_bilinear(const UnitSlice& slice, std::size_t rows, std::size_t cols) {
  if (slice.rows() < 1 || slice.cols() < 1 || rows < 1 || cols < 1) {
    fail(Errc::DegenerateInput, "cannot resample an empty grid");
  }
  const std::size_t in_rows = slice.rows();
  const std::size_t in_cols = slice.cols();
  const double sy = rows > 1 ? static_cast<double>(in_rows - 1) / static_cast<double>(rows - 1) : 0.0;
  const double sx = cols > 1 ? static_cast<double>(in_cols - 1) / static_cast<double>(cols - 1) : 0.0;

  // Column taps are shared by every output row.
  std::vector<std::size_t> x0(cols);
  std::vector<double> fx(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const double x = static_cast<double>(j) * sx;
    x0[j] = std::min(static_cast<std::size_t>(x), in_cols - 1);
    fx[j] = x - static_cast<double>(x0[j]);
  }

  UnitSlice out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const double y = static_cast<double>(i) * sy;
    const std::size_t y0 = std::min(static_cast<std::size_t>(y), in_rows - 1);
    const std::size_t y1 = std::min(y0 + 1, in_rows - 1);
    const double fy = y - static_cast<double>(y0);
    const auto top = slice.row(y0);
    const auto bottom = slice.row(y1);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t a = x0[j];
      const std::size_t b = std::min(a + 1, in_cols - 1);
      const double upper = top[a] + fx[j] * (top[b] - top[a]);
      const double lower = bottom[a] + fx[j] * (bottom[b] - bottom[a]);
      dst[j] = upper + fy * (lower - upper);
    }
  }
  return out;
}

namespace {
void clamp_unit(UnitSlice& slice) {
  for (double& v : slice.values()) v = std::clamp(v, 0.0, 1.0);
}
}  // namespace

UnitSlice resize_slice(const UnitSlice& slice, const ResizeConfig& cfg) {
  cfg.validate();
  if (slice.rows() < 2 || slice.cols() < 2) {
    fail(Errc::DegenerateInput, "resize needs at least 2x2 input, got " +
                                    std::to_string(slice.rows()) + "x" + std::to_string(slice.cols()));
  }
  UnitSlice out;
  if (slice.rows() != cfg.majority_rows || slice.cols() != cfg.majority_cols) {
    out = resample_bilinear(resample_bilinear(slice, cfg.majority_rows, cfg.majority_cols),
                            cfg.target_rows, cfg.target_cols);
  } else {
    out = resample_bilinear(slice, cfg.target_rows, cfg.target_cols);
  }
  clamp_unit(out);
  return out;
}

UnitVolume prepare_volume(const PatientRecord& record, const SliceSelectConfig& select,
                          const ResizeConfig& resize) {
  if (record.slices.empty()) fail(Errc::NoSlices, "patient " + record.patient_id);
  // Windowing is pixelwise, so selecting first and converting only the kept
  // slices yields the same volume as converting the whole stack.
  const SliceRange range = select_slices(record.slices.size(), select);
  UnitVolume volume{record.patient_id, {}};
  volume.slices.reserve(range.count);
  for (std::size_t i = range.first; i <= range.last(); ++i) {
    volume.slices.push_back(resize_slice(window_rescale(raw_to_hu(record.slices[i])), resize));
  }
  return volume;
}

}  // namespace leuko
