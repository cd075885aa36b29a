#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "leuko/dicom.hpp"
#include "leuko/error.hpp"
#include "oracles.hpp"

namespace leuko {
namespace {

using testing::DicomFixture;

DicomSlice small_slice(std::int32_t instance, std::int32_t value = 1024) {
  DicomSlice s;
  s.rows = 4;
  s.cols = 4;
  s.rescale_slope = 1.0;
  s.rescale_intercept = -1024.0;
  s.instance_number = instance;
  s.raw_pixels.assign(16, value);
  return s;
}

Errc error_of(std::span<const std::uint8_t> bytes) {
  try {
    parse_dicom(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parse_dicom accepted the fixture";
  return Errc::Io;
}

TEST(Dicom, FourByFourFixtureDecodes) {
  const auto bytes = write_dicom(small_slice(1));
  const DicomSlice parsed = parse_dicom(bytes);
  EXPECT_EQ(parsed.rows, 4);
  EXPECT_EQ(parsed.cols, 4);
  EXPECT_EQ(parsed.rescale_slope, 1.0);
  EXPECT_EQ(parsed.rescale_intercept, -1024.0);
  ASSERT_EQ(parsed.raw_pixels.size(), 16u);
  for (const auto v : parsed.raw_pixels) EXPECT_EQ(v, 1024);
}

TEST(Dicom, IndependentFixtureMatchesWriterOutputFields) {
  const DicomSlice s = small_slice(7, 1024);
  const DicomSlice from_fixture = parse_dicom(DicomFixture::from_slice(s).part10());
  EXPECT_EQ(from_fixture, s);
  EXPECT_EQ(parse_dicom(DicomFixture::from_slice(s).part10(false)), s);
  EXPECT_EQ(parse_dicom(DicomFixture::from_slice(s).bare_implicit()), s);
}

TEST(Dicom, MissingPixelDataIsMissingTag) {
  auto f = DicomFixture::from_slice(small_slice(1));
  f.remove(tags::PixelData);
  EXPECT_EQ(error_of(f.part10()), Errc::MissingTag);
}

TEST(Dicom, TwelveBitAllocationRejected) {
  auto f = DicomFixture::from_slice(small_slice(1));
  f.set_us(tags::BitsAllocated, 12);
  const Errc code = error_of(f.part10());
  EXPECT_TRUE(code == Errc::UnsupportedTransferSyntax || code == Errc::Malformed);
}

TEST(Dicom, CompressedTransferSyntaxRejected) {
  auto f = DicomFixture::from_slice(small_slice(1));
  f.transfer_syntax_override = "1.2.840.10008.1.2.4.50";  // JPEG baseline
  EXPECT_EQ(error_of(f.part10()), Errc::UnsupportedTransferSyntax);
}

TEST(Dicom, PixelLengthDisagreementIsMalformed) {
  auto f = DicomFixture::from_slice(small_slice(1));
  f.set(tags::PixelData, "OW", std::vector<std::uint8_t>(30, 0));
  EXPECT_EQ(error_of(f.part10()), Errc::Malformed);
}

TEST(Dicom, TruncatedStreamIsMalformed) {
  auto bytes = write_dicom(small_slice(1));
  bytes.resize(bytes.size() - 5);
  EXPECT_EQ(error_of(bytes), Errc::Malformed);
}

TEST(Dicom, ParsingIsPure) {
  Rng rng(11);
  const auto bytes = write_dicom(testing::random_dicom_slice(rng));
  EXPECT_EQ(parse_dicom(bytes), parse_dicom(bytes));
}

TEST(Dicom, SignedAndEightBitRoundTrip) {
  DicomSlice s = small_slice(3);
  s.pixel_representation = PixelRepresentation::Signed;
  s.raw_pixels = {-32768, -1, 0, 1, 32767, -2000, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  EXPECT_EQ(parse_dicom(write_dicom(s)), s);
  s.bits_allocated = 8;
  s.raw_pixels = {-128, -1, 0, 1, 127, -20, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14};
  EXPECT_EQ(parse_dicom(write_dicom(s, TransferSyntax::ImplicitVrLittleEndian)), s);
}

TEST(Dicom, SidecarRoundTrip) {
  const Sidecar sc{"P0042", 1, "periventricular hypodensity"};
  const Sidecar back = parse_sidecar(format_sidecar(sc));
  EXPECT_EQ(back.id, "P0042");
  EXPECT_EQ(back.label, 1);
  EXPECT_EQ(back.finding, sc.finding);
  EXPECT_THROW(parse_sidecar(R"({"id":"x","label":2})"), Error);
  EXPECT_THROW(parse_sidecar(R"({"id":"x"})"), Error);
}

class PatientDir : public ::testing::Test {
 protected:
  testing::TempDir tmp{"leuko-dicom"};

  void write_slice(const std::string& name, const DicomSlice& s) {
    write_dicom_file(tmp.path() / name, s);
  }
  void write_sidecar(int label) {
    std::ofstream(tmp.path() / "meta.json") << format_sidecar({"P0001", label, std::nullopt});
  }
};

TEST_F(PatientDir, SlicesOrderedByInstanceNumber) {
  write_slice("a.dcm", small_slice(3));
  write_slice("b.dcm", small_slice(1));
  write_slice("c.dcm", small_slice(2));
  write_sidecar(0);
  const PatientRecord rec = load_patient(tmp.path());
  ASSERT_EQ(rec.slices.size(), 3u);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(rec.slices[i].instance_number, i + 1);
}

TEST_F(PatientDir, LabelFromSidecar) {
  write_slice("a.dcm", small_slice(1));
  write_sidecar(1);
  EXPECT_EQ(load_patient(tmp.path()).label, 1);
}

TEST_F(PatientDir, DuplicateInstanceIsAmbiguous) {
  write_slice("a.dcm", small_slice(2));
  write_slice("b.dcm", small_slice(2));
  write_sidecar(0);
  try {
    load_patient(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AmbiguousOrdering);
  }
}

TEST_F(PatientDir, PositionTakesPrecedenceOverInstance) {
  DicomSlice a = small_slice(1);
  DicomSlice b = small_slice(2);
  a.slice_position = 10.0;
  b.slice_position = -5.0;
  write_slice("a.dcm", a);
  write_slice("b.dcm", b);
  write_sidecar(0);
  const PatientRecord rec = load_patient(tmp.path());
  EXPECT_EQ(rec.slices[0].instance_number, 2);
  EXPECT_EQ(rec.slices[1].instance_number, 1);
}

TEST_F(PatientDir, MissingSidecarAndNoSlices) {
  try {
    load_patient(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoSlices);
  }
  write_slice("a.dcm", small_slice(1));
  try {
    load_patient(tmp.path());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MissingSidecar);
  }
}

TEST_F(PatientDir, WritePatientRoundTrip) {
  PatientRecord rec{"P0009", {small_slice(1), small_slice(2)}, 1, "finding"};
  write_patient(tmp.path() / "P0009", rec);
  const PatientRecord back = load_patient(tmp.path() / "P0009");
  EXPECT_EQ(back.patient_id, "P0009");
  EXPECT_EQ(back.slices, rec.slices);
  EXPECT_EQ(back.label, 1);
}

}  // namespace
}  // namespace leuko
