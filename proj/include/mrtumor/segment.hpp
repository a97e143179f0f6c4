#pragma once

// Contralateral tumor segmentation on the slices selected by the forest.

#include <set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mrtumor/image.hpp"
#include "mrtumor/nifti.hpp"
#include "mrtumor/preprocess.hpp"

namespace mrtumor {

inline constexpr int kPatchSize = 4;
inline constexpr int kNeighborWindow = 3;

struct SegConfig {
  double threshold = 0.2;  // intensity difference to the mirrored pixel
  int patch_min_count = 6; // flagged cells a 4x4 tile needs to survive
};

void validate(const SegConfig& cfg);
nlohmann::json to_json(const SegConfig& cfg);
SegConfig seg_config_from_json(const nlohmann::json& j, SegConfig defaults = {});

struct TumorMask {
  int slice = 0;
  Mask grid;
};

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
  auto operator<=>(const Pixel&) const = default;
};

struct Contour {
  int slice = 0;
  std::vector<Pixel> pixels;  // row-major order
};

/// Flags pixel (i, j) iff x(i, j) > x(i, n-1-j) + threshold. Applied to
/// every column, so whichever side is brighter gets flagged.
Mask contralateral_mask(const Image& slice, double threshold);

/// Clears every non-overlapping 4x4 tile holding fewer than `min_count`
/// flagged cells.
Mask patch_filter(const Mask& mask, int min_count);

/// Keeps a predicted slice if it or any slice within 3 of it has a non-empty
/// mask in `nonempty`, and adds those confirming slices.
std::set<int> verify_neighbors(const std::set<int>& predicted, const std::vector<bool>& nonempty);

/// Overload that computes the per-slice evidence from the stack.
std::set<int> verify_neighbors(const std::set<int>& predicted, const SliceStack& stack, const SegConfig& cfg);

/// Drops indices with neither neighbor present.
std::set<int> remove_stray(const std::set<int>& slices);

/// Fills [min, max].
std::set<int> make_continuous(const std::set<int>& slices);

/// Mask pixels with at least one 4-neighbor outside the mask or the image.
std::vector<Pixel> delineate(const Mask& mask);

/// patch_filter(contralateral_mask(approximation_image(slice))) for one slice.
Mask slice_tumor_mask(const Image& slice, const SegConfig& cfg);

struct Segmentation {
  std::set<int> verified;       // after verify_neighbors
  std::set<int> final_slices;   // after remove_stray + make_continuous
  std::vector<TumorMask> masks; // one per stack slice; empty outside final_slices
  std::vector<Contour> contours;// slices with a non-empty mask only
  Volume overlay;               // stack with contour pixels set to 1.0
  bool has_tumor = false;
};

Segmentation segment_patient(const SliceStack& stack, const std::set<int>& predicted, const SegConfig& cfg);

/// 64x64x12 uint8 0/1 volume of the masks.
Volume mask_volume(const Segmentation& seg, std::array<float, 3> pixdim = {3.0f, 3.0f, 10.0f});

}  // namespace mrtumor
