#pragma once

// Synthetic bilateral brain phantoms with planted T2-bright tumors.
//
// The brain is an ellipsoid centered on the grid; column j and column
// nx-1-j are mirror images. Tumors are ellipsoidal blobs confined to one
// hemisphere and spanning a contiguous run of slices inside the trimmed
// slice range.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mrtumor/image.hpp"
#include "mrtumor/nifti.hpp"

namespace mrtumor {

enum class Laterality { kLeft, kRight };

struct PhantomSpec {
  std::array<int, 3> dims{kGridSize, kGridSize, kResampledSlices};
  std::array<float, 3> pixdim{3.0f, 3.0f, 10.0f};
  /// Brain semi-axes in voxels along x (columns), y (rows), z (slices).
  std::array<double, 3> brain_semi_axes{26.0, 29.0, 8.5};
  double background = 0.0;
  double tissue = 0.4;
  double tumor = 0.8;
  double noise_sigma = 0.03;  // Gaussian, truncated at +-3 sigma

  bool has_tumor = false;
  Laterality laterality = Laterality::kLeft;
  int tumor_count = 1;              // 1 or 2 blobs
  double tumor_radius_min = 4.0;    // in-plane semi-axes, voxels
  double tumor_radius_max = 7.0;
  int tumor_span_min = 2;           // contiguous slices
  int tumor_span_max = 4;

  /// Rigid integer shift of the whole phantom (x, y, z), for registration tests.
  std::array<int, 3> shift{0, 0, 0};
};

/// Throws Error(kInvalidSpec) naming the first violated constraint.
void validate(const PhantomSpec& spec);

struct GroundTruth {
  bool has_tumor = false;
  /// Volume slice indices (z) that contain tumor voxels, ascending.
  std::vector<int> tumor_slices;
  /// One mask per volume slice (rows = ny, cols = nx).
  std::vector<Mask> masks;

  /// tumor_slices mapped into the 12-slice stack (z - 2), restricted to [0, 12).
  std::vector<int> stack_slices() const;
};

struct Patient {
  std::string id;
  Volume volume;
  GroundTruth truth;
  int label = -1;  // +1 tumor, -1 normal
};

Patient generate_patient(const PhantomSpec& spec, std::uint64_t seed, std::string id = "P0000");

/// Noise-free, tumor-free phantom used as the registration target.
Volume make_template(const PhantomSpec& spec);

struct CohortSpec {
  PhantomSpec base;
  int n_normal = 20;
  int n_tumor = 20;
  double contrast_min = 0.3;   // tumor intensity = tissue + U(contrast_min, contrast_max)
  double contrast_max = 0.5;
  double brain_scale_jitter = 0.05;  // +- relative in-plane size; aspect ratio is kept
  double tissue_jitter = 0.02;     // +- intensity
  double two_blob_probability = 0.25;
};

void validate(const CohortSpec& spec);

/// Patients are ordered normals first (P0000..), then tumor patients. Patient
/// k is generated from derive_seed(seed, k).
std::vector<Patient> generate_cohort(const CohortSpec& spec, std::uint64_t seed, int workers = 1);

}  // namespace mrtumor
