#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "leuko/error.hpp"

namespace leuko {

/// Row-major 2D grid of doubles. The tag distinguishes Hounsfield-unit grids
/// from windowed [0,1] grids at the type level.
template <class Tag>
class BasicGrid {
 public:
  BasicGrid() = default;

  BasicGrid(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  BasicGrid(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      fail(Errc::ShapeMismatch, "grid of " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                    " given " + std::to_string(values_.size()) + " values");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }

  bool same_shape(const BasicGrid& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool operator==(const BasicGrid&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct HuTag {};
struct UnitTag {};

/// Hounsfield units, real valued.
using HuGrid = BasicGrid<HuTag>;
/// Windowed intensities; every value lies in [0,1].
using UnitSlice = BasicGrid<UnitTag>;

struct HuVolume {
  std::string patient_id;
  std::vector<HuGrid> slices;
};

struct UnitVolume {
  std::string patient_id;
  std::vector<UnitSlice> slices;

  std::size_t depth() const noexcept { return slices.size(); }
  std::size_t rows() const noexcept { return slices.empty() ? 0 : slices.front().rows(); }
  std::size_t cols() const noexcept { return slices.empty() ? 0 : slices.front().cols(); }
};

}  // namespace leuko
