#include "leuko/dicom.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <nlohmann/json.hpp>

#include "leuko/binary_io.hpp"
#include "leuko/error.hpp"

namespace leuko {

std::string Tag::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "(%04X,%04X)", group, element);
  return buf;
}

namespace {

constexpr std::size_t kPreambleSize = 128;
constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;
constexpr std::string_view kCtImageStorageUid = "1.2.840.10008.5.1.4.1.1.2";

bool has_long_length(std::string_view vr) {
  static constexpr std::string_view kLong[] = {"OB", "OD", "OF", "OL", "OV", "OW", "SQ",
                                               "SV", "UC", "UN", "UR", "UT", "UV"};
  return std::find(std::begin(kLong), std::end(kLong), vr) != std::end(kLong);
}

bool looks_like_vr(std::uint8_t a, std::uint8_t b) {
  return a >= 'A' && a <= 'Z' && b >= 'A' && b <= 'Z';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\0')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.remove_suffix(1);
  return s;
}

std::string_view as_text(std::span<const std::uint8_t> value) {
  return {reinterpret_cast<const char*>(value.data()), value.size()};
}

struct Element {
  Tag tag;
  std::span<const std::uint8_t> value;
};

class DatasetReader {
 public:
  DatasetReader(std::span<const std::uint8_t> bytes, std::size_t pos, bool explicit_vr)
      : bytes_(bytes), pos_(pos), explicit_vr_(explicit_vr) {}

  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t position() const { return pos_; }

  std::uint16_t peek_group() const {
    require(2);
    return le::get<std::uint16_t>(bytes_, pos_);
  }

  /// Reads one element. Undefined-length sequences are skipped and returned
  /// with an empty value.
  Element next() {
    require(8);
    Tag tag{le::get<std::uint16_t>(bytes_, pos_), le::get<std::uint16_t>(bytes_, pos_ + 2)};
    std::uint32_t length = 0;
    std::string_view vr;
    if (tag.group == 0xFFFE) {
      length = le::get<std::uint32_t>(bytes_, pos_ + 4);
      pos_ += 8;
    } else if (explicit_vr_) {
      if (!looks_like_vr(bytes_[pos_ + 4], bytes_[pos_ + 5])) {
        fail(Errc::Malformed, "invalid VR at offset " + std::to_string(pos_ + 4));
      }
      vr = std::string_view(reinterpret_cast<const char*>(bytes_.data() + pos_ + 4), 2);
      if (has_long_length(vr)) {
        require(12);
        length = le::get<std::uint32_t>(bytes_, pos_ + 8);
        pos_ += 12;
      } else {
        length = le::get<std::uint16_t>(bytes_, pos_ + 6);
        pos_ += 8;
      }
    } else {
      length = le::get<std::uint32_t>(bytes_, pos_ + 4);
      pos_ += 8;
    }

    if (length == kUndefinedLength) {
      if (tag == tags::PixelData) {
        fail(Errc::UnsupportedTransferSyntax, "encapsulated (compressed) pixel data");
      }
      skip_undefined_sequence();
      return {tag, {}};
    }
    if (length > bytes_.size() - pos_) {
      fail(Errc::Malformed, "element " + tag.str() + " length " + std::to_string(length) +
                                " exceeds remaining " + std::to_string(bytes_.size() - pos_) +
                                " bytes");
    }
    Element element{tag, bytes_.subspan(pos_, length)};
    pos_ += length;
    return element;
  }

 private:
  void require(std::size_t n) const {
    if (bytes_.size() < pos_ || bytes_.size() - pos_ < n) {
      fail(Errc::Malformed, "truncated element header at offset " + std::to_string(pos_));
    }
  }

  // Items until the sequence delimiter; undefined-length items are walked
  // element by element (which recurses into nested sequences).
  void skip_undefined_sequence() {
    for (;;) {
      require(8);
      const Tag tag{le::get<std::uint16_t>(bytes_, pos_), le::get<std::uint16_t>(bytes_, pos_ + 2)};
      const std::uint32_t length = le::get<std::uint32_t>(bytes_, pos_ + 4);
      pos_ += 8;
      if (tag == tags::SequenceDelimitation) return;
      if (tag != tags::Item) fail(Errc::Malformed, "expected sequence item, found " + tag.str());
      if (length != kUndefinedLength) {
        if (length > bytes_.size() - pos_) fail(Errc::Malformed, "sequence item overruns file");
        pos_ += length;
        continue;
      }
      for (;;) {
        require(8);
        const Tag inner{le::get<std::uint16_t>(bytes_, pos_),
                        le::get<std::uint16_t>(bytes_, pos_ + 2)};
        if (inner == tags::ItemDelimitation) {
          pos_ += 8;
          break;
        }
        next();
      }
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_;
  bool explicit_vr_;
};

std::uint16_t decode_us(const Element& e) {
  if (e.value.size() < 2) fail(Errc::Malformed, e.tag.str() + " US value too short");
  return le::get<std::uint16_t>(e.value, 0);
}

std::string_view multi_value(std::string_view text, std::size_t index, const Tag& tag) {
  for (std::size_t i = 0; i < index; ++i) {
    const auto sep = text.find('\\');
    if (sep == std::string_view::npos) {
      fail(Errc::Malformed, tag.str() + " has fewer than " + std::to_string(index + 1) + " values");
    }
    text.remove_prefix(sep + 1);
  }
  return trim(text.substr(0, text.find('\\')));
}

double decode_ds(const Element& e, std::size_t index = 0) {
  std::string_view text = multi_value(as_text(e.value), index, e.tag);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    fail(Errc::Malformed, e.tag.str() + " is not a decimal string: '" + std::string(text) + "'");
  }
  return value;
}

std::int32_t decode_is(const Element& e) {
  std::string_view text = multi_value(as_text(e.value), 0, e.tag);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  std::int32_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    fail(Errc::Malformed, e.tag.str() + " is not an integer string: '" + std::string(text) + "'");
  }
  return value;
}

using ElementMap = std::map<std::uint32_t, Element>;

const Element& required(const ElementMap& elements, const Tag& tag) {
  const auto it = elements.find(tag.key());
  if (it == elements.end()) fail(Errc::MissingTag, tag.str());
  return it->second;
}

DicomSlice build_slice(const ElementMap& elements) {
  for (const Tag& tag : kRequiredTags) required(elements, tag);

  DicomSlice slice;
  slice.rows = decode_us(required(elements, tags::Rows));
  slice.cols = decode_us(required(elements, tags::Columns));
  slice.bits_allocated = decode_us(required(elements, tags::BitsAllocated));
  const std::uint16_t representation = decode_us(required(elements, tags::PixelRepresentation));
  slice.rescale_slope = decode_ds(required(elements, tags::RescaleSlope));
  slice.rescale_intercept = decode_ds(required(elements, tags::RescaleIntercept));
  slice.instance_number = decode_is(required(elements, tags::InstanceNumber));

  if (const auto it = elements.find(tags::ImagePositionPatient.key()); it != elements.end()) {
    slice.slice_position = decode_ds(it->second, 2);
  } else if (const auto loc = elements.find(tags::SliceLocation.key()); loc != elements.end()) {
    slice.slice_position = decode_ds(loc->second);
  }

  if (const auto it = elements.find(tags::SamplesPerPixel.key()); it != elements.end()) {
    if (decode_us(it->second) != 1) {
      fail(Errc::UnsupportedTransferSyntax, "only single-sample (grayscale) pixels are supported");
    }
  }
  if (slice.bits_allocated != 8 && slice.bits_allocated != 16) {
    fail(Errc::UnsupportedTransferSyntax,
         "unsupported BitsAllocated " + std::to_string(slice.bits_allocated));
  }
  if (representation > 1) {
    fail(Errc::Malformed, "PixelRepresentation " + std::to_string(representation));
  }
  slice.pixel_representation = static_cast<PixelRepresentation>(representation);
  if (slice.rows == 0 || slice.cols == 0) fail(Errc::Malformed, "zero image dimension");

  const auto& pixels = required(elements, tags::PixelData).value;
  const std::size_t count = std::size_t{slice.rows} * slice.cols;
  const std::size_t bytes_per = slice.bits_allocated / 8;
  const std::size_t expected = count * bytes_per;
  const bool padded = (expected % 2 == 1) && pixels.size() == expected + 1;
  if (pixels.size() != expected && !padded) {
    fail(Errc::Malformed, "PixelData holds " + std::to_string(pixels.size()) + " bytes, expected " +
                              std::to_string(expected));
  }

  slice.raw_pixels.resize(count);
  const bool is_signed = slice.pixel_representation == PixelRepresentation::Signed;
  for (std::size_t i = 0; i < count; ++i) {
    if (bytes_per == 1) {
      const std::uint8_t v = pixels[i];
      slice.raw_pixels[i] = is_signed ? static_cast<std::int8_t>(v) : v;
    } else {
      const std::uint16_t v = le::get<std::uint16_t>(pixels, 2 * i);
      slice.raw_pixels[i] = is_signed ? static_cast<std::int16_t>(v) : v;
    }
  }
  return slice;
}

void collect(DatasetReader& reader, ElementMap& elements) {
  while (!reader.at_end()) {
    const Element e = reader.next();
    elements.try_emplace(e.tag.key(), e);
  }
}

// ---- writer ----

void put_element(std::vector<std::uint8_t>& out, Tag tag, std::string_view vr,
                 std::span<const std::uint8_t> value, bool explicit_vr) {
  le::put<std::uint16_t>(out, tag.group);
  le::put<std::uint16_t>(out, tag.element);
  if (explicit_vr) {
    out.push_back(static_cast<std::uint8_t>(vr[0]));
    out.push_back(static_cast<std::uint8_t>(vr[1]));
    if (has_long_length(vr)) {
      le::put<std::uint16_t>(out, 0);
      le::put<std::uint32_t>(out, static_cast<std::uint32_t>(value.size()));
    } else {
      le::put<std::uint16_t>(out, static_cast<std::uint16_t>(value.size()));
    }
  } else {
    le::put<std::uint32_t>(out, static_cast<std::uint32_t>(value.size()));
  }
  out.insert(out.end(), value.begin(), value.end());
}

std::vector<std::uint8_t> text_value(std::string_view text, char pad) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  if (bytes.size() % 2 == 1) bytes.push_back(static_cast<std::uint8_t>(pad));
  return bytes;
}

std::vector<std::uint8_t> us_value(std::uint16_t v) {
  std::vector<std::uint8_t> bytes;
  le::put<std::uint16_t>(bytes, v);
  return bytes;
}

std::string format_ds(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  std::string text(buf, ptr);
  if (ec != std::errc() || text.size() > 16) {
    fail(Errc::BadConfig, "value " + text + " does not fit a 16-character decimal string");
  }
  return text;
}

std::string instance_uid(std::string_view patient_id, std::int32_t instance) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](std::uint8_t b) {
    h ^= b;
    h *= 1099511628211ULL;
  };
  for (char c : patient_id) feed(static_cast<std::uint8_t>(c));
  for (int i = 0; i < 4; ++i) feed(static_cast<std::uint8_t>(instance >> (8 * i)));
  return "2.25." + std::to_string(h);
}

struct OutElement {
  Tag tag;
  std::string vr;
  std::vector<std::uint8_t> value;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lowercase_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

DicomSlice parse_dicom(std::span<const std::uint8_t> bytes) {
  ElementMap elements;
  const bool part10 = bytes.size() >= kPreambleSize + 4 &&
                      as_text(bytes.subspan(kPreambleSize, 4)) == "DICM";
  if (part10) {
    DatasetReader meta(bytes, kPreambleSize + 4, /*explicit_vr=*/true);
    std::optional<std::string> syntax_uid;
    while (!meta.at_end() && meta.peek_group() == 0x0002) {
      const Element e = meta.next();
      if (e.tag == tags::TransferSyntaxUid) syntax_uid = std::string(trim(as_text(e.value)));
    }
    if (!syntax_uid) fail(Errc::MissingTag, tags::TransferSyntaxUid.str());
    bool explicit_vr = false;
    if (*syntax_uid == kExplicitVrLittleEndianUid) {
      explicit_vr = true;
    } else if (*syntax_uid != kImplicitVrLittleEndianUid) {
      fail(Errc::UnsupportedTransferSyntax, *syntax_uid);
    }
    DatasetReader body(bytes, meta.position(), explicit_vr);
    collect(body, elements);
  } else {
    const bool explicit_vr = bytes.size() >= 6 && looks_like_vr(bytes[4], bytes[5]);
    DatasetReader body(bytes, 0, explicit_vr);
    collect(body, elements);
  }
  return build_slice(elements);
}

DicomSlice read_dicom_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return parse_dicom(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.detail());
  }
}

std::vector<std::uint8_t> write_dicom(const DicomSlice& slice, TransferSyntax syntax,
                                      std::string_view patient_id) {
  const std::size_t count = std::size_t{slice.rows} * slice.cols;
  if (slice.raw_pixels.size() != count) {
    fail(Errc::BadConfig, "raw_pixels size does not match rows x cols");
  }
  if (slice.bits_allocated != 8 && slice.bits_allocated != 16) {
    fail(Errc::BadConfig, "BitsAllocated must be 8 or 16");
  }
  const bool is_signed = slice.pixel_representation == PixelRepresentation::Signed;
  const std::int64_t lo = is_signed ? -(std::int64_t{1} << (slice.bits_allocated - 1)) : 0;
  const std::int64_t hi = is_signed ? (std::int64_t{1} << (slice.bits_allocated - 1)) - 1
                                    : (std::int64_t{1} << slice.bits_allocated) - 1;

  std::vector<std::uint8_t> pixels;
  pixels.reserve(count * slice.bits_allocated / 8 + 1);
  for (const std::int32_t v : slice.raw_pixels) {
    if (v < lo || v > hi) fail(Errc::BadConfig, "pixel value out of range for representation");
    if (slice.bits_allocated == 8) {
      pixels.push_back(static_cast<std::uint8_t>(v));
    } else {
      le::put<std::uint16_t>(pixels, static_cast<std::uint16_t>(v));
    }
  }
  if (pixels.size() % 2 == 1) pixels.push_back(0);

  const bool explicit_vr = syntax == TransferSyntax::ExplicitVrLittleEndian;
  const std::string_view syntax_uid =
      explicit_vr ? kExplicitVrLittleEndianUid : kImplicitVrLittleEndianUid;
  const std::string sop_instance = instance_uid(patient_id, slice.instance_number);

  std::vector<OutElement> dataset;
  dataset.push_back({{0x0008, 0x0016}, "UI", text_value(kCtImageStorageUid, '\0')});
  dataset.push_back({{0x0008, 0x0018}, "UI", text_value(sop_instance, '\0')});
  dataset.push_back({{0x0008, 0x0060}, "CS", text_value("CT", ' ')});
  if (!patient_id.empty()) dataset.push_back({tags::PatientId, "LO", text_value(patient_id, ' ')});
  dataset.push_back(
      {tags::InstanceNumber, "IS", text_value(std::to_string(slice.instance_number), ' ')});
  if (slice.slice_position) {
    dataset.push_back({tags::ImagePositionPatient, "DS",
                       text_value("0\\0\\" + format_ds(*slice.slice_position), ' ')});
  }
  dataset.push_back({tags::SamplesPerPixel, "US", us_value(1)});
  dataset.push_back({{0x0028, 0x0004}, "CS", text_value("MONOCHROME2", ' ')});
  dataset.push_back({tags::Rows, "US", us_value(slice.rows)});
  dataset.push_back({tags::Columns, "US", us_value(slice.cols)});
  dataset.push_back({tags::BitsAllocated, "US", us_value(slice.bits_allocated)});
  dataset.push_back({{0x0028, 0x0101}, "US", us_value(slice.bits_allocated)});
  dataset.push_back({{0x0028, 0x0102}, "US", us_value(slice.bits_allocated - 1)});
  dataset.push_back({tags::PixelRepresentation, "US",
                     us_value(static_cast<std::uint16_t>(slice.pixel_representation))});
  dataset.push_back({tags::RescaleIntercept, "DS", text_value(format_ds(slice.rescale_intercept), ' ')});
  dataset.push_back({tags::RescaleSlope, "DS", text_value(format_ds(slice.rescale_slope), ' ')});
  dataset.push_back({tags::PixelData, slice.bits_allocated == 8 ? "OB" : "OW", std::move(pixels)});

  std::vector<std::uint8_t> meta;
  const std::uint8_t version[] = {0x00, 0x01};
  put_element(meta, {0x0002, 0x0001}, "OB", version, true);
  put_element(meta, {0x0002, 0x0002}, "UI", text_value(kCtImageStorageUid, '\0'), true);
  put_element(meta, {0x0002, 0x0003}, "UI", text_value(sop_instance, '\0'), true);
  put_element(meta, tags::TransferSyntaxUid, "UI", text_value(syntax_uid, '\0'), true);

  std::vector<std::uint8_t> out(kPreambleSize, 0);
  for (const char ch : std::string_view("DICM")) out.push_back(static_cast<std::uint8_t>(ch));
  std::vector<std::uint8_t> group_length;
  le::put<std::uint32_t>(group_length, static_cast<std::uint32_t>(meta.size()));
  put_element(out, {0x0002, 0x0000}, "UL", group_length, true);
  out.insert(out.end(), meta.begin(), meta.end());
  for (const auto& e : dataset) put_element(out, e.tag, e.vr, e.value, explicit_vr);
  return out;
}

void write_dicom_file(const std::filesystem::path& path, const DicomSlice& slice,
                      TransferSyntax syntax, std::string_view patient_id) {
  const auto bytes = write_dicom(slice, syntax, patient_id);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::Io, "short write to " + path.string());
}

Sidecar parse_sidecar(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Malformed, std::string("sidecar is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(Errc::Malformed, "sidecar must be a JSON object");
  Sidecar sidecar;
  if (!doc.contains("id")) fail(Errc::Malformed, "sidecar lacks 'id'");
  if (doc["id"].is_string()) {
    sidecar.id = doc["id"].get<std::string>();
  } else if (doc["id"].is_number_integer()) {
    sidecar.id = std::to_string(doc["id"].get<long long>());
  } else {
    fail(Errc::Malformed, "sidecar 'id' must be a string");
  }
  if (!doc.contains("label") || !doc["label"].is_number_integer()) {
    fail(Errc::Malformed, "sidecar lacks an integer 'label'");
  }
  const auto label = doc["label"].get<long long>();
  if (label != 0 && label != 1) fail(Errc::Malformed, "sidecar 'label' must be 0 or 1");
  sidecar.label = static_cast<int>(label);
  if (doc.contains("finding") && doc["finding"].is_string()) {
    sidecar.finding = doc["finding"].get<std::string>();
  }
  return sidecar;
}

std::string format_sidecar(const Sidecar& sidecar) {
  nlohmann::ordered_json doc;
  doc["id"] = sidecar.id;
  doc["label"] = sidecar.label;
  if (sidecar.finding) doc["finding"] = *sidecar.finding;
  return doc.dump(2) + "\n";
}

void order_slices(std::vector<DicomSlice>& slices) {
  const bool by_position = std::all_of(slices.begin(), slices.end(),
                                       [](const DicomSlice& s) { return s.slice_position.has_value(); });
  auto key_less = [by_position](const DicomSlice& a, const DicomSlice& b) {
    return by_position ? *a.slice_position < *b.slice_position
                       : a.instance_number < b.instance_number;
  };
  std::stable_sort(slices.begin(), slices.end(), key_less);
  for (std::size_t i = 1; i < slices.size(); ++i) {
    if (!key_less(slices[i - 1], slices[i])) {
      fail(Errc::AmbiguousOrdering,
           by_position ? "two slices share slice position " + std::to_string(*slices[i].slice_position)
                       : "two slices share instance number " +
                             std::to_string(slices[i].instance_number));
    }
  }
}

PatientRecord load_patient(const std::filesystem::path& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) {
    fail(Errc::Io, directory.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> dcm_files;
  std::vector<std::filesystem::path> sidecars;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = lowercase_extension(entry.path());
    if (ext == ".dcm") dcm_files.push_back(entry.path());
    if (ext == ".json") sidecars.push_back(entry.path());
  }
  if (dcm_files.empty()) fail(Errc::NoSlices, directory.string() + " contains no .dcm files");
  if (sidecars.empty()) fail(Errc::MissingSidecar, directory.string());
  if (sidecars.size() > 1) {
    fail(Errc::Malformed, directory.string() + " has " + std::to_string(sidecars.size()) +
                              " sidecar files, expected one");
  }
  std::sort(dcm_files.begin(), dcm_files.end());

  const auto sidecar_bytes = read_file(sidecars.front());
  Sidecar sidecar;
  try {
    sidecar = parse_sidecar(as_text(sidecar_bytes));
  } catch (const Error& e) {
    throw Error(e.code(), sidecars.front().string() + ": " + e.detail());
  }

  PatientRecord record;
  record.patient_id = sidecar.id;
  record.label = sidecar.label;
  record.finding = sidecar.finding;
  record.slices.reserve(dcm_files.size());
  for (const auto& file : dcm_files) record.slices.push_back(read_dicom_file(file));
  try {
    order_slices(record.slices);
  } catch (const Error& e) {
    throw Error(e.code(), directory.string() + ": " + e.detail());
  }
  return record;
}

void write_patient(const std::filesystem::path& directory, const PatientRecord& record) {
  std::filesystem::create_directories(directory);
  for (std::size_t i = 0; i < record.slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "IM%05zu.dcm", i + 1);
    write_dicom_file(directory / name, record.slices[i], TransferSyntax::ExplicitVrLittleEndian,
                     record.patient_id);
  }
  std::ofstream out(directory / (record.patient_id + ".json"), std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write sidecar in " + directory.string());
  out << format_sidecar({record.patient_id, record.label, record.finding});
}

std::vector<std::filesystem::path> find_patient_directories(const std::filesystem::path& root) {
  std::error_code ec;
  if (!std::filesystem::is_directory(root, ec)) fail(Errc::Io, root.string() + " is not a directory");
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    for (const auto& file : std::filesystem::directory_iterator(entry.path())) {
      if (file.is_regular_file() && lowercase_extension(file.path()) == ".dcm") {
        dirs.push_back(entry.path());
        break;
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace leuko
