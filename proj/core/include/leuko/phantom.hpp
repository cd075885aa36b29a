#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "leuko/dicom.hpp"
#include "leuko/error.hpp"

namespace leuko {

struct PhantomConfig {
  std::size_t n_patients = 20;
  std::size_t slices_per_patient = 90;
  std::size_t image_size = 256;
  double hu_air = -1000.0;
  double hu_skull = 800.0;
  double hu_parenchyma = 35.0;
  double hu_ventricle = 8.0;
  double hu_lesion = 16.0;
  double noise_sigma = 3.0;
  /// Lesion radius range in pixels at image_size 256; scaled for other sizes.
  double lesion_radius_min = 20.0;
  double lesion_radius_max = 32.0;
  double positive_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inclusive pixel bounds.
struct BoundingBox {
  std::size_t row_min = 0, row_max = 0, col_min = 0, col_max = 0;

  bool contains(double row, double col) const noexcept {
    return row >= static_cast<double>(row_min) && row <= static_cast<double>(row_max) &&
           col >= static_cast<double>(col_min) && col <= static_cast<double>(col_max);
  }
  bool operator==(const BoundingBox&) const = default;
};

struct SliceLesions {
  /// One box per lesion blob visible on the slice.
  std::vector<BoundingBox> boxes;
  /// rows * cols flags; all zero on slices without lesions.
  std::vector<std::uint8_t> mask;

  bool empty() const noexcept { return boxes.empty(); }
};

struct LesionGroundTruth {
  std::string patient_id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// One entry per slice, in stack order.
  std::vector<SliceLesions> slices;
};

struct PhantomPatient {
  PatientRecord record;
  LesionGroundTruth truth;
};

/// Stack index range [first, first + count) that carries lesions on positive
/// patients: the n/3 slices centred on floor(2n/3).
struct LesionSpan {
  std::size_t first = 0;
  std::size_t count = 0;
};
LesionSpan lesion_span(std::size_t n_slices);

std::string phantom_patient_id(std::size_t index);
/// round(n * positive_fraction) ones, shuffled by the config seed.
std::vector<int> phantom_labels(const PhantomConfig& cfg);

/// Skull ring, parenchyma, two paracentral ventricles, Gaussian noise and,
/// for label 1, hypodense blobs lateral to the ventricles. Pixels are stored
/// as HU + 1024 in unsigned 16-bit with slope 1 and intercept -1024; slices
/// are 5 mm apart with the vertex first. Geometry and noise use separate
/// streams derived from (cfg.seed, index).
PhantomPatient gen_phantom_patient(const PhantomConfig& cfg, int label, std::size_t index);

/// Writes one directory per patient plus lesions.json (bounding boxes per
/// positive slice) under out_dir. Returns the ground truth without masks.
std::vector<LesionGroundTruth> write_phantom_dataset(const PhantomConfig& cfg,
                                                     const std::filesystem::path& out_dir);

}  // namespace leuko
