#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "leuko/dicom.hpp"
#include "leuko/grid.hpp"

namespace leuko {

/// Hounsfield value from absorption coefficients:
/// (mu - mu_water) / (mu_water - mu_air) * 1000.
/// Reference only; stored pixels are converted with raw_to_hu.
double hu_definition(double mu, double mu_water, double mu_air);

/// slope * raw + intercept for every pixel.
HuGrid raw_to_hu(const DicomSlice& slice);
HuVolume to_hu_volume(const PatientRecord& record);

/// Brain window <0,100> HU mapped onto [0,1].
inline constexpr double kWindowLowHu = 0.0;
inline constexpr double kWindowHighHu = 100.0;

double window_rescale(double hu) noexcept;
UnitSlice window_rescale(const HuGrid& hu);

// UVOL: "UVOL", u32 depth, u32 rows, u32 cols, then depth*rows*cols f64, all little endian.
void write_unit_volume(std::ostream& out, const UnitVolume& volume);
UnitVolume read_unit_volume(std::istream& in);
void save_unit_volume(const std::filesystem::path& path, const UnitVolume& volume);
/// patient_id of the result is the file stem.
UnitVolume load_unit_volume(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255); each value v becomes round(255 v), halves away from zero.
std::string encode_pgm(const UnitSlice& slice);
void save_pgm(const std::filesystem::path& path, const UnitSlice& slice);

}  // namespace leuko
