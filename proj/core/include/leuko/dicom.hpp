#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace leuko {

/// DICOM (group, element) pair.
struct Tag {
  std::uint16_t group = 0;
  std::uint16_t element = 0;

  constexpr std::uint32_t key() const noexcept {
    return (static_cast<std::uint32_t>(group) << 16) | element;
  }
  constexpr auto operator<=>(const Tag&) const = default;
  std::string str() const;
};

namespace tags {
inline constexpr Tag TransferSyntaxUid{0x0002, 0x0010};
inline constexpr Tag PatientId{0x0010, 0x0020};
inline constexpr Tag InstanceNumber{0x0020, 0x0013};
inline constexpr Tag ImagePositionPatient{0x0020, 0x0032};
inline constexpr Tag SliceLocation{0x0020, 0x1041};
inline constexpr Tag SamplesPerPixel{0x0028, 0x0002};
inline constexpr Tag Rows{0x0028, 0x0010};
inline constexpr Tag Columns{0x0028, 0x0011};
inline constexpr Tag BitsAllocated{0x0028, 0x0100};
inline constexpr Tag PixelRepresentation{0x0028, 0x0103};
inline constexpr Tag RescaleIntercept{0x0028, 0x1052};
inline constexpr Tag RescaleSlope{0x0028, 0x1053};
inline constexpr Tag PixelData{0x7FE0, 0x0010};
inline constexpr Tag Item{0xFFFE, 0xE000};
inline constexpr Tag ItemDelimitation{0xFFFE, 0xE00D};
inline constexpr Tag SequenceDelimitation{0xFFFE, 0xE0DD};
}  // namespace tags

/// Tags parse_dicom insists on; a missing one raises Errc::MissingTag.
inline constexpr Tag kRequiredTags[] = {
    tags::Rows,         tags::Columns,          tags::BitsAllocated,  tags::PixelRepresentation,
    tags::RescaleSlope, tags::RescaleIntercept, tags::InstanceNumber, tags::PixelData,
};

enum class TransferSyntax { ExplicitVrLittleEndian, ImplicitVrLittleEndian };

inline constexpr std::string_view kExplicitVrLittleEndianUid = "1.2.840.10008.1.2.1";
inline constexpr std::string_view kImplicitVrLittleEndianUid = "1.2.840.10008.1.2";

enum class PixelRepresentation : std::uint16_t { Unsigned = 0, Signed = 1 };

struct DicomSlice {
  std::uint16_t rows = 0;
  std::uint16_t cols = 0;
  std::uint16_t bits_allocated = 16;
  PixelRepresentation pixel_representation = PixelRepresentation::Unsigned;
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  std::int32_t instance_number = 0;
  /// Position along the patient axis in mm, when the file carries one.
  std::optional<double> slice_position;
  /// Stored integer values, row-major, rows * cols entries.
  std::vector<std::int32_t> raw_pixels;

  bool operator==(const DicomSlice&) const = default;
};

/// Parse an uncompressed little-endian DICOM stream (Part 10 file with
/// preamble, or a bare implicit-VR dataset).
DicomSlice parse_dicom(std::span<const std::uint8_t> bytes);
DicomSlice read_dicom_file(const std::filesystem::path& path);

/// Serialise a slice as a Part 10 file. Output is a pure function of the
/// arguments. Throws BadConfig if a value cannot be stored (e.g. a DS string
/// longer than 16 characters).
std::vector<std::uint8_t> write_dicom(const DicomSlice& slice,
                                      TransferSyntax syntax = TransferSyntax::ExplicitVrLittleEndian,
                                      std::string_view patient_id = {});
void write_dicom_file(const std::filesystem::path& path, const DicomSlice& slice,
                      TransferSyntax syntax = TransferSyntax::ExplicitVrLittleEndian,
                      std::string_view patient_id = {});

struct PatientRecord {
  std::string patient_id;
  /// Ordered vertex first: ascending slice_position when every slice has one,
  /// otherwise ascending instance_number.
  std::vector<DicomSlice> slices;
  int label = 0;
  std::optional<std::string> finding;
};

struct Sidecar {
  std::string id;
  int label = 0;
  std::optional<std::string> finding;
};

Sidecar parse_sidecar(std::string_view json_text);
std::string format_sidecar(const Sidecar& sidecar);

/// Sorts slices in place by the ordering key; throws AmbiguousOrdering on ties.
void order_slices(std::vector<DicomSlice>& slices);

/// Load one patient directory: every *.dcm file plus exactly one *.json sidecar.
PatientRecord load_patient(const std::filesystem::path& directory);

/// Write a record in the on-disk layout load_patient reads back.
void write_patient(const std::filesystem::path& directory, const PatientRecord& record);

/// Subdirectories of root that contain at least one .dcm file, sorted by name.
std::vector<std::filesystem::path> find_patient_directories(const std::filesystem::path& root);

}  // namespace leuko
