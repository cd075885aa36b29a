#pragma once

#include <cstdint>

#include "leuko/grid.hpp"
#include "leuko/random.hpp"

namespace leuko {

struct AugmentConfig {
  double max_rotation_deg = 10.0;
  double flip_probability = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Reverses the column order.
UnitSlice hflip(const UnitSlice& slice);
UnitSlice vflip(const UnitSlice& slice);

/// Rotation by angle_deg (counter-clockwise in image coordinates with rows
/// growing downward) about the slice centre. Each output pixel is the
/// bilinear sample of the inversely rotated position; positions outside the
/// grid read 0.
UnitSlice rotate(const UnitSlice& slice, double angle_deg);

/// Draws an angle uniformly in [-max, +max] and a flip with flip_probability,
/// in that order, from rng.
UnitSlice augment_sample(const UnitSlice& slice, const AugmentConfig& cfg, Rng& rng);

}  // namespace leuko
