#include "leuko/preprocess.hpp"

#include <algorithm>
#include <functional>
#include <string>

namespace leuko {

Variant parse_variant(std::string_view text) {
  if (text == "A" || text == "a") return Variant::A;
  if (text == "B" || text == "b") return Variant::B;
  if (text == "C" || text == "c") return Variant::C;
  fail(Errc::BadConfig, "unknown preprocessing variant '" + std::string(text) + "'");
}

char variant_name(Variant v) noexcept {
  switch (v) {
    case Variant::A: return 'A';
    case Variant::B: return 'B';
    case Variant::C: return 'C';
  }
  return '?';
}

void BandFilterParams::validate() const {
  if (!(0.0 <= low_cut && low_cut < high_cut && high_cut <= 1.0)) {
    fail(Errc::BadConfig, "band filter needs 0 <= low_cut < high_cut <= 1");
  }
}

void ContrastParams::validate() const {
  if (!(0.0 <= low && low < high && high <= 1.0)) {
    fail(Errc::BadConfig, "contrast stretch needs 0 <= low < high <= 1");
  }
}

UnitSlice band_filter(const UnitSlice& slice, const BandFilterParams& params) {
  params.validate();
  UnitSlice out = slice;
  for (double& v : out.values()) {
    if (v >= params.high_cut || v <= params.low_cut) v = 0.0;
  }
  return out;
}

namespace {

// A flat rectangle is separable: the window extremum is the extremum over
// rows of the per-row extremum. Offsets are relative to the anchor.
template <class Pick>
UnitSlice window_extremum(const UnitSlice& slice, const StructuringElement& se, Pick pick) {
  if (se.rows == 0 || se.cols == 0 || se.anchor_row >= se.rows || se.anchor_col >= se.cols) {
    fail(Errc::BadConfig, "invalid structuring element");
  }
  if (slice.rows() < se.rows || slice.cols() < se.cols) {
    fail(Errc::DegenerateInput, "slice smaller than structuring element");
  }
  const auto rows = static_cast<std::ptrdiff_t>(slice.rows());
  const auto cols = static_cast<std::ptrdiff_t>(slice.cols());
  const auto r_lo = -static_cast<std::ptrdiff_t>(se.anchor_row);
  const auto r_hi = static_cast<std::ptrdiff_t>(se.rows - 1 - se.anchor_row);
  const auto c_lo = -static_cast<std::ptrdiff_t>(se.anchor_col);
  const auto c_hi = static_cast<std::ptrdiff_t>(se.cols - 1 - se.anchor_col);

  UnitSlice horizontal(slice.rows(), slice.cols());
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto src = slice.row(static_cast<std::size_t>(r));
    auto dst = horizontal.row(static_cast<std::size_t>(r));
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
      double acc = src[static_cast<std::size_t>(c)];
      for (std::ptrdiff_t d = c_lo; d <= c_hi; ++d) {
        acc = pick(acc, src[static_cast<std::size_t>(std::clamp(c + d, std::ptrdiff_t{0}, cols - 1))]);
      }
      dst[static_cast<std::size_t>(c)] = acc;
    }
  }
  UnitSlice out(slice.rows(), slice.cols());
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    auto dst = out.row(static_cast<std::size_t>(r));
    std::copy(horizontal.row(static_cast<std::size_t>(r)).begin(),
              horizontal.row(static_cast<std::size_t>(r)).end(), dst.begin());
    for (std::ptrdiff_t d = r_lo; d <= r_hi; ++d) {
      const auto src = horizontal.row(static_cast<std::size_t>(std::clamp(r + d, std::ptrdiff_t{0}, rows - 1)));
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = pick(dst[c], src[c]);
    }
  }
  return out;
}

}  // namespace

UnitSlice erode(const UnitSlice& slice, const StructuringElement& se) {
  return window_extremum(slice, se, [](double a, double b) { return std::min(a, b); });
}

UnitSlice dilate(const UnitSlice& slice, const StructuringElement& se) {
  return window_extremum(slice, se, [](double a, double b) { return std::max(a, b); });
}

UnitSlice morph_open(const UnitSlice& slice, const StructuringElement& se) {
  return dilate(erode(slice, se), se.reflected());
}

UnitSlice mean_filter(const UnitSlice& slice, std::size_t k) {
  if (k == 0 || k % 2 == 0) fail(Errc::BadConfig, "mean filter kernel must be odd");
  if (slice.rows() < k || slice.cols() < k) {
    fail(Errc::DegenerateInput, "slice smaller than mean filter kernel");
  }
  const auto rows = static_cast<std::ptrdiff_t>(slice.rows());
  const auto cols = static_cast<std::ptrdiff_t>(slice.cols());
  const auto half = static_cast<std::ptrdiff_t>(k / 2);
  const double inv_area = 1.0 / static_cast<double>(k * k);
  UnitSlice out(slice.rows(), slice.cols());
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    for (std::ptrdiff_t c = 0; c < cols; ++c) {
      double sum = 0.0;
      for (std::ptrdiff_t dr = -half; dr <= half; ++dr) {
        const auto rr = static_cast<std::size_t>(std::clamp(r + dr, std::ptrdiff_t{0}, rows - 1));
        for (std::ptrdiff_t dc = -half; dc <= half; ++dc) {
          sum += slice(rr, static_cast<std::size_t>(std::clamp(c + dc, std::ptrdiff_t{0}, cols - 1)));
        }
      }
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sum * inv_area;
    }
  }
  return out;
}

UnitSlice contrast_stretch(const UnitSlice& slice, const ContrastParams& params) {
  params.validate();
  const double span = params.high - params.low;
  UnitSlice out = slice;
  for (double& v : out.values()) v = std::clamp((v - params.low) / span, 0.0, 1.0);
  return out;
}

UnitSlice saturation_zero(const UnitSlice& slice) {
  UnitSlice out = slice;
  for (double& v : out.values()) {
    if (v == 1.0) v = 0.0;
  }
  return out;
}

UnitSlice apply_variant(const UnitSlice& slice, Variant variant) {
  switch (variant) {
    case Variant::A:
      return slice;
    case Variant::B:
      return morph_open(band_filter(slice));
    case Variant::C:
      return saturation_zero(contrast_stretch(mean_filter(slice, 3)));
  }
  fail(Errc::BadConfig, "unknown variant");
}

UnitVolume apply_variant(const UnitVolume& volume, Variant variant) {
  UnitVolume out{volume.patient_id, {}};
  out.slices.reserve(volume.slices.size());
  for (const auto& s : volume.slices) out.slices.push_back(apply_variant(s, variant));
  return out;
}

}  // namespace leuko
