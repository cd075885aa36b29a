#include "leuko/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "leuko/random.hpp"

namespace leuko {

void PhantomConfig::validate() const {
  if (n_patients == 0) fail(Errc::BadConfig, "phantom needs at least one patient");
  if (slices_per_patient < 3) fail(Errc::BadConfig, "phantom needs at least 3 slices");
  if (image_size < 32 || image_size > 4096) fail(Errc::BadConfig, "phantom image_size must be in [32,4096]");
  if (!(hu_air < 0.0)) fail(Errc::BadConfig, "air anchor must be below the window");
  if (!(hu_skull > 100.0)) fail(Errc::BadConfig, "skull anchor must be above the window");
  for (const double hu : {hu_parenchyma, hu_ventricle, hu_lesion}) {
    if (!(hu > 0.0 && hu < 100.0)) fail(Errc::BadConfig, "soft tissue anchors must lie inside (0,100) HU");
  }
  if (!(hu_lesion < hu_parenchyma)) fail(Errc::BadConfig, "lesions must be hypodense to parenchyma");
  if (!(noise_sigma >= 0.0 && noise_sigma <= 50.0)) fail(Errc::BadConfig, "noise_sigma must be in [0,50]");
  if (!(lesion_radius_min > 0.0 && lesion_radius_min <= lesion_radius_max && lesion_radius_max <= 40.0)) {
    fail(Errc::BadConfig, "lesion radius range must satisfy 0 < min <= max <= 40");
  }
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    fail(Errc::BadConfig, "positive_fraction must be in [0,1]");
  }
  if (hu_air + 1024.0 < 0.0 || hu_skull + 1024.0 > 65535.0) fail(Errc::BadConfig, "HU anchors out of storage range");
}

LesionSpan lesion_span(std::size_t n) {
  const std::size_t count = std::max<std::size_t>(1, n / 3);
  const std::size_t center = 2 * n / 3;
  std::size_t first = center >= count / 2 ? center - count / 2 : 0;
  first = std::min(first, n - count);
  return {first, count};
}

std::string phantom_patient_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04zu", index + 1);
  return buf;
}

std::vector<int> phantom_labels(const PhantomConfig& cfg) {
  cfg.validate();
  const auto positives =
      static_cast<std::size_t>(std::llround(static_cast<double>(cfg.n_patients) * cfg.positive_fraction));
  std::vector<int> labels(cfg.n_patients, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
  Rng rng(derive_seed(cfg.seed, 0x1ABE1));
  rng.shuffle(std::span<int>(labels));
  return labels;
}

namespace {

struct Ellipse {
  double cy, cx, ry, rx;

  double norm(double y, double x) const noexcept {
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return dy * dy + dx * dx;
  }
  bool inside(double y, double x) const noexcept { return norm(y, x) <= 1.0; }
};

struct Blob {
  double cy, cx, r;
};

struct Anatomy {
  Ellipse head;
  double skull_thickness;
  Ellipse ventricle[2];
  std::vector<Blob> blobs;
};

// Whole-patient geometry; per-slice shapes scale from it.
Anatomy draw_anatomy(const PhantomConfig& cfg, int label, Rng& rng) {
  const double s = static_cast<double>(cfg.image_size);
  const double scale = s / 256.0;
  Anatomy a;
  const double cy = s / 2.0 + rng.uniform(-0.02, 0.02) * s;
  const double cx = s / 2.0 + rng.uniform(-0.02, 0.02) * s;
  a.head = {cy, cx, s * rng.uniform(0.40, 0.44), s * rng.uniform(0.33, 0.37)};
  a.skull_thickness = s * rng.uniform(0.03, 0.04);
  const double offset = s * rng.uniform(0.055, 0.07);
  const double vry = s * rng.uniform(0.10, 0.12);
  const double vrx = s * rng.uniform(0.028, 0.036);
  a.ventricle[0] = {cy, cx - offset, vry, vrx};
  a.ventricle[1] = {cy, cx + offset, vry, vrx};
  if (label == 1) {
    for (int side = 0; side < 2; ++side) {
      const Ellipse& v = a.ventricle[side];
      const double r = scale * rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
      const double dir = side == 0 ? -1.0 : 1.0;
      const double bx = v.cx + dir * (v.rx + 0.6 * r);
      const double by = v.cy + rng.uniform(-0.5, 0.5) * v.ry;
      a.blobs.push_back({by, bx, r});
    }
  }
  return a;
}

// Ventricles exist on the middle of the stack and swell towards its centre.
double ventricle_factor(double zf) {
  if (zf < 0.3 || zf > 0.9) return 0.0;
  return 0.6 + 0.4 * std::sin(std::numbers::pi * (zf - 0.3) / 0.6);
}

// Head cross-section shrinks towards the vertex.
double head_factor(double zf) { return 0.75 + 0.25 * std::sin(std::numbers::pi * std::min(zf, 0.95) / 1.9 + 0.5); }

}  // namespace

PhantomPatient gen_phantom_patient(const PhantomConfig& cfg, int label, std::size_t index) {
  cfg.validate();
  if (label != 0 && label != 1) fail(Errc::BadConfig, "phantom label must be 0 or 1");
  const std::uint64_t patient_seed = derive_seed(cfg.seed, index);
  Rng geometry(derive_seed(patient_seed, 1));
  Rng noise(derive_seed(patient_seed, 2));
  const Anatomy anatomy = draw_anatomy(cfg, label, geometry);

  const std::size_t n = cfg.slices_per_patient;
  const std::size_t size = cfg.image_size;
  const LesionSpan span = lesion_span(n);

  PhantomPatient out;
  out.record.patient_id = phantom_patient_id(index);
  out.record.label = label;
  out.record.finding = label == 1 ? "leukoencephalopathy" : "normal";
  out.truth.patient_id = out.record.patient_id;
  out.truth.rows = size;
  out.truth.cols = size;

  for (std::size_t z = 0; z < n; ++z) {
    const double zf = static_cast<double>(z) / static_cast<double>(n - 1);
    const double hf = head_factor(zf);
    const Ellipse outer{anatomy.head.cy, anatomy.head.cx, anatomy.head.ry * hf, anatomy.head.rx * hf};
    const Ellipse inner{outer.cy, outer.cx, outer.ry - anatomy.skull_thickness, outer.rx - anatomy.skull_thickness};
    const double vf = ventricle_factor(zf);
    const bool has_lesions = label == 1 && z >= span.first && z < span.first + span.count;

    SliceLesions lesions;
    lesions.mask.assign(size * size, 0);
    DicomSlice slice;
    slice.rows = static_cast<std::uint16_t>(size);
    slice.cols = static_cast<std::uint16_t>(size);
    slice.bits_allocated = 16;
    slice.pixel_representation = PixelRepresentation::Unsigned;
    slice.rescale_slope = 1.0;
    slice.rescale_intercept = -1024.0;
    slice.instance_number = static_cast<std::int32_t>(z + 1);
    slice.slice_position = 5.0 * static_cast<double>(z);
    slice.raw_pixels.resize(size * size);

    for (std::size_t r = 0; r < size; ++r) {
      for (std::size_t c = 0; c < size; ++c) {
        const double y = static_cast<double>(r);
        const double x = static_cast<double>(c);
        double hu = cfg.hu_air;
        if (inner.inside(y, x)) {
          hu = cfg.hu_parenchyma;
          bool in_ventricle = false;
          if (vf > 0.0) {
            for (const auto& v : anatomy.ventricle) {
              if (Ellipse{v.cy, v.cx, v.ry * vf, v.rx * vf}.inside(y, x)) in_ventricle = true;
            }
          }
          if (in_ventricle) {
            hu = cfg.hu_ventricle;
          } else if (has_lesions) {
            for (const auto& b : anatomy.blobs) {
              if ((y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx) <= b.r * b.r) {
                hu = cfg.hu_lesion;
                lesions.mask[r * size + c] = 1;
              }
            }
          }
        } else if (outer.inside(y, x)) {
          hu = cfg.hu_skull;
        }
        if (cfg.noise_sigma > 0.0) hu += cfg.noise_sigma * noise.normal();
        const double stored = std::clamp(std::round(hu + 1024.0), 0.0, 65535.0);
        slice.raw_pixels[r * size + c] = static_cast<std::int32_t>(stored);
      }
    }

    if (has_lesions) {
      for (const auto& b : anatomy.blobs) {
        BoundingBox box{size, 0, size, 0};
        bool any = false;
        for (std::size_t r = 0; r < size; ++r) {
          for (std::size_t c = 0; c < size; ++c) {
            const double y = static_cast<double>(r);
            const double x = static_cast<double>(c);
            if (!lesions.mask[r * size + c] || (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx) > b.r * b.r) {
              continue;
            }
            any = true;
            box.row_min = std::min(box.row_min, r);
            box.row_max = std::max(box.row_max, r);
            box.col_min = std::min(box.col_min, c);
            box.col_max = std::max(box.col_max, c);
          }
        }
        if (any) lesions.boxes.push_back(box);
      }
    }
    out.record.slices.push_back(std::move(slice));
    out.truth.slices.push_back(std::move(lesions));
  }
  return out;
}

std::vector<LesionGroundTruth> write_phantom_dataset(const PhantomConfig& cfg,
                                                     const std::filesystem::path& out_dir) {
  const std::vector<int> labels = phantom_labels(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(Errc::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<LesionGroundTruth> truths;
  nlohmann::ordered_json doc;
  doc["image_size"] = cfg.image_size;
  doc["slices_per_patient"] = cfg.slices_per_patient;
  doc["seed"] = cfg.seed;
  doc["patients"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < cfg.n_patients; ++i) {
    PhantomPatient p = gen_phantom_patient(cfg, labels[i], i);
    write_patient(out_dir / p.record.patient_id, p.record);
    nlohmann::ordered_json entry;
    entry["id"] = p.record.patient_id;
    entry["label"] = p.record.label;
    entry["slices"] = nlohmann::ordered_json::array();
    for (std::size_t z = 0; z < p.truth.slices.size(); ++z) {
      auto& s = p.truth.slices[z];
      if (!s.empty()) {
        nlohmann::ordered_json boxes = nlohmann::ordered_json::array();
        for (const auto& b : s.boxes) boxes.push_back({b.row_min, b.row_max, b.col_min, b.col_max});
        entry["slices"].push_back({{"index", z}, {"boxes", boxes}});
      }
      s.mask.clear();
      s.mask.shrink_to_fit();
    }
    doc["patients"].push_back(std::move(entry));
    truths.push_back(std::move(p.truth));
  }
  std::ofstream out(out_dir / "lesions.json", std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::Io, "cannot write lesions.json");
  out << doc.dump(1) << '\n';
  return truths;
}

}  // namespace leuko
