#pragma once

// Rigid NCC registration to a template, resampling onto the canonical
// 64x64x16 grid, slice trimming and per-slice intensity normalization.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "mrtumor/image.hpp"
#include "mrtumor/nifti.hpp"

namespace mrtumor {

/// Maps moving-volume coordinates into template (canonical grid) coordinates:
///   T(p) = R * (p - c) + c + translation
/// where rotation acts on millimetre offsets from the grid center c and the
/// translation is in canonical voxel units. Angles are radians, applied as
/// Rz * Ry * Rx.
struct RigidTransform {
  std::array<double, 3> angles{0.0, 0.0, 0.0};
  std::array<double, 3> translation{0.0, 0.0, 0.0};

  bool is_identity() const;
};

/// Normalized cross-correlation of two equally long samples (zero-mean,
/// unit self-correlation). Returns 0 if either side has zero variance.
/// Throws kInvalidArgument if lengths differ or are < 2.
double ncc(std::span<const double> f, std::span<const double> g);

struct RegistrationOptions {
  double max_translation = 4.0;     // voxels
  double translation_step = 1.0;
  double max_angle_deg = 10.0;
  double angle_step_deg = 2.0;
  double min_translation_step = 0.25;
  double min_angle_step_deg = 0.5;
  int coarse_stride = 4;            // in-plane sampling stride for the grid phase
  int refine_stride = 2;
  /// A refinement move must raise NCC by more than this to be accepted.
  double min_gain = 1e-6;
};

struct RegistrationResult {
  RigidTransform transform;
  double ncc = 0.0;           // full-resolution NCC at `transform`
  double identity_ncc = 0.0;  // full-resolution NCC at the identity
};

/// Finds the rigid transform maximizing NCC between the resampled moving
/// volume and the template over their overlap. The template defines the
/// canonical grid. The search scores candidates against an in-plane smoothed
/// copy of the template sampled at the moving voxels; the reported NCC values
/// are the plain overlap NCC, and the identity wins if it scores higher.
/// Throws kDegenerateInput for constant volumes.
RegistrationResult register_rigid(const Volume& moving, const Volume& templ,
                                  const RegistrationOptions& opts = {});

/// Resamples `v` onto a grid with `grid_dims` (default canonical 64x64x16)
/// by trilinear interpolation at T^-1(p). `v` is assumed to cover the same
/// field of view as the grid. Samples outside `v` are 0.
Volume resample(const Volume& v, const RigidTransform& t,
                std::array<int, 3> grid_dims = {kGridSize, kGridSize, kResampledSlices},
                std::array<float, 3> grid_pixdim = {3.0f, 3.0f, 10.0f});

/// Extracts slice z of a volume as an image (rows = y, cols = x).
Image volume_slice(const Volume& v, int z);

/// Keeps slices 2..13 of a 16-slice volume. Throws kWrongSliceCount.
std::vector<Image> trim_slices(const Volume& grid);
std::vector<Image> trim_slices(const std::vector<Image>& slices);

/// Divides every pixel by the slice maximum; returns the input unchanged if
/// the maximum is <= 0.
Image intensity_normalize(const Image& slice);

struct SliceStack {
  std::string patient_id;
  std::vector<Image> slices;  // kStackSlices slices of kGridSize x kGridSize
};

/// Throws kBadDims / kWrongSliceCount / kInvalidArgument when the stack
/// violates its shape or [0,1] range invariants.
void validate(const SliceStack& stack);

struct PreprocessResult {
  SliceStack stack;
  RegistrationResult registration;
};

/// register -> resample -> trim -> clamp negatives to 0 -> normalize.
PreprocessResult preprocess(const Volume& v, const Volume& templ, std::string patient_id,
                            const RegistrationOptions& opts = {});

/// Packs a stack into a 64x64x12 float volume.
Volume stack_to_volume(const SliceStack& stack, std::array<float, 3> pixdim = {3.0f, 3.0f, 10.0f});

}  // namespace mrtumor
