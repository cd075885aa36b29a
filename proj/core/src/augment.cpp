#include "leuko/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace leuko {

void AugmentConfig::validate() const {
  if (!(max_rotation_deg >= 0.0 && max_rotation_deg < 90.0)) {
    fail(Errc::BadConfig, "max_rotation_deg must lie in [0, 90)");
  }
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    fail(Errc::BadConfig, "flip_probability must lie in [0, 1]");
  }
}

UnitSlice hflip(const UnitSlice& slice) {
  UnitSlice out = slice;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    std::reverse(row.begin(), row.end());
  }
  return out;
}

UnitSlice vflip(const UnitSlice& slice) {
  UnitSlice out(slice.rows(), slice.cols());
  for (std::size_t r = 0; r < slice.rows(); ++r) {
    const auto src = slice.row(slice.rows() - 1 - r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

UnitSlice rotate(const UnitSlice& slice, double angle_deg) {
  if (angle_deg == 0.0) return slice;
  // Sample positions within this distance of the border are pulled onto it
  // so exact symmetries (e.g. 180 degrees) do not lose their edge pixels.
  constexpr double kEdgeSlack = 1e-9;
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double cy = (static_cast<double>(slice.rows()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(slice.cols()) - 1.0) / 2.0;
  const double max_y = static_cast<double>(slice.rows()) - 1.0;
  const double max_x = static_cast<double>(slice.cols()) - 1.0;

  UnitSlice out(slice.rows(), slice.cols());
  for (std::size_t r = 0; r < slice.rows(); ++r) {
    const double dy = static_cast<double>(r) - cy;
    for (std::size_t c = 0; c < slice.cols(); ++c) {
      const double dx = static_cast<double>(c) - cx;
      // Inverse rotation of the output position.
      double x = cos_t * dx + sin_t * dy + cx;
      double y = -sin_t * dx + cos_t * dy + cy;
      if (x < -kEdgeSlack || y < -kEdgeSlack || x > max_x + kEdgeSlack || y > max_y + kEdgeSlack) {
        continue;
      }
      x = std::clamp(x, 0.0, max_x);
      y = std::clamp(y, 0.0, max_y);
      const auto x0 = static_cast<std::size_t>(x);
      const auto y0 = static_cast<std::size_t>(y);
      const std::size_t x1 = std::min(x0 + 1, slice.cols() - 1);
      const std::size_t y1 = std::min(y0 + 1, slice.rows() - 1);
      const double fx = x - static_cast<double>(x0);
      const double fy = y - static_cast<double>(y0);
      const double upper = slice(y0, x0) + fx * (slice(y0, x1) - slice(y0, x0));
      const double lower = slice(y1, x0) + fx * (slice(y1, x1) - slice(y1, x0));
      out(r, c) = std::clamp(upper + fy * (lower - upper), 0.0, 1.0);
    }
  }
  return out;
}

UnitSlice augment_sample(const UnitSlice& slice, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  const bool flip = rng.bernoulli(cfg.flip_probability);
  UnitSlice out = rotate(slice, angle);
  return flip ? hflip(out) : out;
}

}  // namespace leuko
