#pragma once

#include <string>
#include <vector>

#include "mrtumor/image.hpp"
#include "mrtumor/preprocess.hpp"

namespace mrtumor {

inline constexpr int kPooledSize = kGridSize / 2;
inline constexpr int kSliceFeatures = kPooledSize * kPooledSize;         // 1024
inline constexpr int kPatientFeatures = kSliceFeatures * kStackSlices;   // 12288

/// Identifies the flattening convention; stored in model files.
inline constexpr const char* kFeatureLayoutId = "pool2x2/row-major/slice-major/v1";

/// Mean of each non-overlapping 2x2 block. Throws kBadDims for odd dims.
Image pool2x2(const Image& slice);

/// pool2x2 of a 64x64 slice flattened row-major (index 32*row + col).
std::vector<double> slice_features(const Image& slice);

/// Concatenation of slice_features over the 12 stack slices, slice 0 first.
std::vector<double> patient_features(const SliceStack& stack);

struct FeatureMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

}  // namespace mrtumor
