#include "leuko/hu_window.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "leuko/binary_io.hpp"

namespace leuko {

double hu_definition(double mu, double mu_water, double mu_air) {
  if (mu_water == mu_air) fail(Errc::DegenerateCalibration, "mu_water equals mu_air");
  return (mu - mu_water) / (mu_water - mu_air) * 1000.0;
}

HuGrid raw_to_hu(const DicomSlice& slice) {
  HuGrid hu(slice.rows, slice.cols);
  auto out = hu.values();
  if (slice.raw_pixels.size() != out.size()) {
    fail(Errc::ShapeMismatch, "raw pixel count does not match rows x cols");
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = slice.rescale_slope * slice.raw_pixels[i] + slice.rescale_intercept;
  }
  return hu;
}

HuVolume to_hu_volume(const PatientRecord& record) {
  HuVolume volume{record.patient_id, {}};
  volume.slices.reserve(record.slices.size());
  for (const auto& slice : record.slices) volume.slices.push_back(raw_to_hu(slice));
  return volume;
}

double window_rescale(double hu) noexcept {
  if (hu >= kWindowHighHu) return 1.0;
  if (hu < kWindowLowHu) return 0.0;
  return hu / 100.0;
}

UnitSlice window_rescale(const HuGrid& hu) {
  UnitSlice out(hu.rows(), hu.cols());
  std::transform(hu.values().begin(), hu.values().end(), out.values().begin(),
                 [](double v) { return window_rescale(v); });
  return out;
}

namespace {
constexpr char kUvolMagic[4] = {'U', 'V', 'O', 'L'};
}

void write_unit_volume(std::ostream& out, const UnitVolume& volume) {
  const std::size_t rows = volume.rows();
  const std::size_t cols = volume.cols();
  for (const auto& s : volume.slices) {
    if (s.rows() != rows || s.cols() != cols) {
      fail(Errc::ShapeMismatch, "UVOL requires equal slice dimensions");
    }
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + volume.depth() * rows * cols * 8);
  bytes.insert(bytes.end(), std::begin(kUvolMagic), std::end(kUvolMagic));
  le::put<std::uint32_t>(bytes, static_cast<std::uint32_t>(volume.depth()));
  le::put<std::uint32_t>(bytes, static_cast<std::uint32_t>(rows));
  le::put<std::uint32_t>(bytes, static_cast<std::uint32_t>(cols));
  for (const auto& s : volume.slices) {
    for (const double v : s.values()) le::put<double>(bytes, v);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::Io, "failed writing UVOL stream");
}

UnitVolume read_unit_volume(std::istream& in) {
  std::uint8_t header[16];
  if (!in.read(reinterpret_cast<char*>(header), sizeof header)) {
    fail(Errc::Malformed, "UVOL header truncated");
  }
  if (std::memcmp(header, kUvolMagic, 4) != 0) fail(Errc::Malformed, "bad UVOL magic");
  const std::span<const std::uint8_t> h(header, sizeof header);
  const std::size_t depth = le::get<std::uint32_t>(h, 4);
  const std::size_t rows = le::get<std::uint32_t>(h, 8);
  const std::size_t cols = le::get<std::uint32_t>(h, 12);

  UnitVolume volume;
  volume.slices.reserve(depth);
  std::vector<std::uint8_t> buffer(rows * cols * 8);
  for (std::size_t d = 0; d < depth; ++d) {
    if (!in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()))) {
      fail(Errc::Malformed, "UVOL payload truncated");
    }
    std::vector<double> values(rows * cols);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = le::get<double>(buffer, 8 * i);
    volume.slices.emplace_back(rows, cols, std::move(values));
  }
  return volume;
}

void save_unit_volume(const std::filesystem::path& path, const UnitVolume& volume) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  write_unit_volume(out, volume);
}

UnitVolume load_unit_volume(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  UnitVolume volume = read_unit_volume(in);
  volume.patient_id = path.stem().string();
  return volume;
}

std::string encode_pgm(const UnitSlice& slice) {
  std::string out = "P5\n" + std::to_string(slice.cols()) + " " + std::to_string(slice.rows()) + "\n255\n";
  out.reserve(out.size() + slice.size());
  for (const double v : slice.values()) {
    const long level = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(level)));
  }
  return out;
}

void save_pgm(const std::filesystem::path& path, const UnitSlice& slice) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out << encode_pgm(slice);
}

}  // namespace leuko
