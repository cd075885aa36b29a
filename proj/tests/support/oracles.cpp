#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include <unistd.h>

namespace leuko::testing {

namespace {

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

bool long_form(const std::string& vr) {
  return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" || vr == "UN";
}

void put_element(std::vector<std::uint8_t>& out, const DicomFixture::Element& e, bool explicit_vr) {
  put16(out, e.tag.group);
  put16(out, e.tag.element);
  const auto length = static_cast<std::uint32_t>(e.value.size());
  if (explicit_vr) {
    out.push_back(static_cast<std::uint8_t>(e.vr[0]));
    out.push_back(static_cast<std::uint8_t>(e.vr[1]));
    if (long_form(e.vr)) {
      put16(out, 0);
      put32(out, length);
    } else {
      put16(out, static_cast<std::uint16_t>(length));
    }
  } else {
    put32(out, length);
  }
  out.insert(out.end(), e.value.begin(), e.value.end());
}

std::vector<std::uint8_t> text_bytes(std::string text, char pad) {
  if (text.size() % 2 == 1) text.push_back(pad);
  return {text.begin(), text.end()};
}

std::string decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

DicomFixture DicomFixture::from_slice(const DicomSlice& slice) {
  DicomFixture f;
  f.set_text(tags::InstanceNumber, "IS", std::to_string(slice.instance_number));
  if (slice.slice_position) {
    f.set_text(tags::ImagePositionPatient, "DS", "0\\0\\" + decimal(*slice.slice_position));
  }
  f.set_us(tags::SamplesPerPixel, 1);
  f.set_us(tags::Rows, slice.rows);
  f.set_us(tags::Columns, slice.cols);
  f.set_us(tags::BitsAllocated, slice.bits_allocated);
  f.set_us(tags::PixelRepresentation, static_cast<std::uint16_t>(slice.pixel_representation));
  f.set_text(tags::RescaleIntercept, "DS", decimal(slice.rescale_intercept));
  f.set_text(tags::RescaleSlope, "DS", decimal(slice.rescale_slope));

  std::vector<std::uint8_t> pixels;
  for (const std::int32_t v : slice.raw_pixels) {
    if (slice.bits_allocated == 8) {
      pixels.push_back(static_cast<std::uint8_t>(v & 0xFF));
    } else {
      put16(pixels, static_cast<std::uint16_t>(v & 0xFFFF));
    }
  }
  if (pixels.size() % 2 == 1) pixels.push_back(0);
  f.set(tags::PixelData, slice.bits_allocated == 8 ? "OB" : "OW", std::move(pixels));
  return f;
}

void DicomFixture::set(Tag tag, std::string vr, std::vector<std::uint8_t> value) {
  remove(tag);
  elements_.push_back({tag, std::move(vr), std::move(value)});
  std::sort(elements_.begin(), elements_.end(),
            [](const Element& a, const Element& b) { return a.tag < b.tag; });
}

void DicomFixture::set_us(Tag tag, std::uint16_t value) {
  std::vector<std::uint8_t> bytes;
  put16(bytes, value);
  set(tag, "US", std::move(bytes));
}

void DicomFixture::set_text(Tag tag, std::string vr, const std::string& text) {
  set(tag, std::move(vr), text_bytes(text, ' '));
}

void DicomFixture::remove(Tag tag) {
  std::erase_if(elements_, [&](const Element& e) { return e.tag == tag; });
}

bool DicomFixture::has(Tag tag) const {
  return std::any_of(elements_.begin(), elements_.end(), [&](const Element& e) { return e.tag == tag; });
}

void DicomFixture::encode_dataset(std::vector<std::uint8_t>& out, bool explicit_vr) const {
  for (const Element& e : elements_) put_element(out, e, explicit_vr);
}

std::vector<std::uint8_t> DicomFixture::part10(bool explicit_vr) const {
  std::vector<std::uint8_t> out(128, 0);
  for (const char c : std::string("DICM")) out.push_back(static_cast<std::uint8_t>(c));

  const std::string uid = transfer_syntax_override.value_or(
      explicit_vr ? std::string(kExplicitVrLittleEndianUid) : std::string(kImplicitVrLittleEndianUid));
  std::vector<std::uint8_t> meta;
  put_element(meta, {{0x0002, 0x0001}, "OB", {0, 1}}, true);
  auto uid_bytes = uid;
  if (uid_bytes.size() % 2 == 1) uid_bytes.push_back('\0');
  put_element(meta, {tags::TransferSyntaxUid, "UI", {uid_bytes.begin(), uid_bytes.end()}}, true);

  std::vector<std::uint8_t> group_length;
  put32(group_length, static_cast<std::uint32_t>(meta.size()));
  put_element(out, {{0x0002, 0x0000}, "UL", group_length}, true);
  out.insert(out.end(), meta.begin(), meta.end());
  encode_dataset(out, explicit_vr);
  return out;
}

std::vector<std::uint8_t> DicomFixture::bare_implicit() const {
  std::vector<std::uint8_t> out;
  encode_dataset(out, false);
  return out;
}

DicomSlice random_dicom_slice(Rng& rng) {
  DicomSlice s;
  s.rows = static_cast<std::uint16_t>(1 + rng.below(24));
  s.cols = static_cast<std::uint16_t>(1 + rng.below(24));
  s.bits_allocated = rng.bernoulli(0.5) ? 16 : 8;
  s.pixel_representation = rng.bernoulli(0.5) ? PixelRepresentation::Signed : PixelRepresentation::Unsigned;
  // Calibration values with short exact decimal forms.
  s.rescale_slope = static_cast<double>(1 + rng.below(8)) / 4.0;
  s.rescale_intercept = -static_cast<double>(rng.below(2049));
  s.instance_number = static_cast<std::int32_t>(rng.below(100000)) - 500;
  if (rng.bernoulli(0.5)) s.slice_position = static_cast<double>(rng.below(4000)) / 8.0 - 250.0;

  const bool is_signed = s.pixel_representation == PixelRepresentation::Signed;
  const std::int64_t span = s.bits_allocated == 8 ? 256 : 65536;
  const std::int64_t lo = is_signed ? -span / 2 : 0;
  s.raw_pixels.resize(std::size_t{s.rows} * s.cols);
  for (auto& v : s.raw_pixels) {
    v = static_cast<std::int32_t>(lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(span))));
  }
  return s;
}

double bilinear_pixel(const UnitSlice& src, std::size_t rows, std::size_t cols, std::size_t i,
                      std::size_t j) {
  const double R = static_cast<double>(src.rows());
  const double C = static_cast<double>(src.cols());
  const double y = rows > 1 ? static_cast<double>(i) * (R - 1.0) / static_cast<double>(rows - 1) : 0.0;
  const double x = cols > 1 ? static_cast<double>(j) * (C - 1.0) / static_cast<double>(cols - 1) : 0.0;
  // Weighted sum over the four neighbours, each weight the product of the
  // tent functions max(0, 1 - |distance|).
  double acc = 0.0;
  for (std::size_t r = 0; r < src.rows(); ++r) {
    const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(r)));
    if (wy == 0.0) continue;
    for (std::size_t c = 0; c < src.cols(); ++c) {
      const double wx = std::max(0.0, 1.0 - std::abs(x - static_cast<double>(c)));
      acc += wy * wx * src(r, c);
    }
  }
  return acc;
}

double rotation_pixel(const UnitSlice& src, double angle_deg, std::size_t i, std::size_t j) {
  const double cy = (static_cast<double>(src.rows()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(src.cols()) - 1.0) / 2.0;
  // Positions are complex numbers x + iy; undoing the rotation multiplies by e^{-i theta}.
  const std::complex<double> offset(static_cast<double>(j) - cx, static_cast<double>(i) - cy);
  const std::complex<double> source =
      offset * std::polar(1.0, -angle_deg * std::numbers::pi / 180.0) + std::complex<double>(cx, cy);
  const double slack = 1e-9;
  const double x = source.real();
  const double y = source.imag();
  if (x < -slack || y < -slack || x > static_cast<double>(src.cols()) - 1.0 + slack ||
      y > static_cast<double>(src.rows()) - 1.0 + slack) {
    return 0.0;
  }
  double acc = 0.0;
  for (std::size_t r = 0; r < src.rows(); ++r) {
    const double wy = std::max(0.0, 1.0 - std::abs(y - static_cast<double>(r)));
    if (wy == 0.0) continue;
    for (std::size_t c = 0; c < src.cols(); ++c) {
      acc += wy * std::max(0.0, 1.0 - std::abs(x - static_cast<double>(c))) * src(r, c);
    }
  }
  return std::clamp(acc, 0.0, 1.0);
}

namespace {

double clamped(const UnitSlice& s, long r, long c) {
  r = std::clamp(r, 0L, static_cast<long>(s.rows()) - 1);
  c = std::clamp(c, 0L, static_cast<long>(s.cols()) - 1);
  return s(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
}

}  // namespace

UnitSlice open_oracle(const UnitSlice& slice) {
  const long R = static_cast<long>(slice.rows());
  const long C = static_cast<long>(slice.cols());
  UnitSlice eroded(slice.rows(), slice.cols());
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      double m = 2.0;
      for (long dr = -1; dr <= 2; ++dr)
        for (long dc = -1; dc <= 2; ++dc) m = std::min(m, clamped(slice, r + dr, c + dc));
      eroded(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m;
    }
  }
  UnitSlice opened(slice.rows(), slice.cols());
  for (long r = 0; r < R; ++r) {
    for (long c = 0; c < C; ++c) {
      double m = -1.0;
      for (long dr = -2; dr <= 1; ++dr)
        for (long dc = -2; dc <= 1; ++dc) m = std::max(m, clamped(eroded, r + dr, c + dc));
      opened(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = m;
    }
  }
  return opened;
}

UnitSlice mean_oracle(const UnitSlice& slice, std::size_t k) {
  const long half = static_cast<long>(k / 2);
  UnitSlice out(slice.rows(), slice.cols());
  for (long r = 0; r < static_cast<long>(slice.rows()); ++r) {
    for (long c = 0; c < static_cast<long>(slice.cols()); ++c) {
      double sum = 0.0;
      for (long dr = -half; dr < static_cast<long>(k) - half; ++dr)
        for (long dc = -half; dc < static_cast<long>(k) - half; ++dc) sum += clamped(slice, r + dr, c + dc);
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = sum / static_cast<double>(k * k);
    }
  }
  return out;
}

double naive_logit(const CnnModel& model, const UnitSlice& slice) {
  const Architecture& arch = model.architecture();
  // act[c][y][x]
  using Plane = std::vector<std::vector<double>>;
  std::vector<Plane> act(arch.input_channels, Plane(slice.rows(), std::vector<double>(slice.cols())));
  for (auto& plane : act)
    for (std::size_t y = 0; y < slice.rows(); ++y)
      for (std::size_t x = 0; x < slice.cols(); ++x) plane[y][x] = slice(y, x);

  for (std::size_t l = 0; l < arch.convs.size(); ++l) {
    const auto w = model.conv_weights(l);
    const auto b = model.conv_bias(l);
    const std::size_t O = arch.convs[l].filters;
    const std::size_t K = arch.convs[l].kernel;
    const std::size_t Cin = act.size();
    const std::size_t H = act[0].size();
    const std::size_t out_size = H - K + 1;
    std::vector<Plane> conv(O, Plane(out_size, std::vector<double>(out_size)));
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < out_size; ++y)
        for (std::size_t x = 0; x < out_size; ++x) {
          double s = b[o];
          for (std::size_t c = 0; c < Cin; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx)
                s += w[((o * Cin + c) * K + ky) * K + kx] * act[c][y + ky][x + kx];
          conv[o][y][x] = std::max(0.0, s);
        }
    const std::size_t pooled = out_size / 2;
    std::vector<Plane> next(O, Plane(pooled, std::vector<double>(pooled)));
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < pooled; ++y)
        for (std::size_t x = 0; x < pooled; ++x)
          next[o][y][x] = std::max({conv[o][2 * y][2 * x], conv[o][2 * y][2 * x + 1],
                                    conv[o][2 * y + 1][2 * x], conv[o][2 * y + 1][2 * x + 1]});
    act = std::move(next);
  }

  const auto dw = model.dense_weights();
  double logit = model.dense_bias();
  std::size_t i = 0;
  for (const auto& plane : act)
    for (const auto& row : plane)
      for (const double v : row) logit += dw[i++] * v;
  return logit;
}

double naive_mean_loss(const CnnModel& model, std::span<const UnitSlice> slices,
                       std::span<const double> labels) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const long double z = naive_logit(model, slices[i]);
    const long double y = labels[i];
    // log(1 + e^z) - y z, written to stay finite for large |z|.
    const long double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    total += softplus - y * z;
  }
  return static_cast<double>(total / static_cast<long double>(slices.size()));
}

int vote_by_enumeration(std::uint32_t bits, std::size_t k, std::size_t t) {
  std::size_t positives = 0;
  for (std::size_t i = 0; i < k; ++i) positives += (bits >> i) & 1U;
  return positives > t ? 1 : 0;
}

UnitSlice random_slice(Rng& rng, std::size_t rows, std::size_t cols) {
  UnitSlice s(rows, cols);
  for (double& v : s.values()) v = rng.uniform();
  return s;
}

TempDir::TempDir(const std::string& prefix) {
  static std::uint64_t counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          (prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(++counter));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace leuko::testing
