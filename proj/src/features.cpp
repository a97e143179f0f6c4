#include "mrtumor/features.hpp"

#include "mrtumor/error.hpp"

namespace mrtumor {

Image pool2x2(const Image& slice) {
  if (slice.rows < 2 || slice.cols < 2 || slice.rows % 2 != 0 || slice.cols % 2 != 0)
    fail(ErrorCode::kBadDims, "pool2x2 needs even, non-zero dims");
  Image out(slice.rows / 2, slice.cols / 2);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      const double p = slice.at(2 * r, 2 * c), q = slice.at(2 * r, 2 * c + 1);
      const double s = slice.at(2 * r + 1, 2 * c), t = slice.at(2 * r + 1, 2 * c + 1);
      // Pairwise sums keep the result exactly mirror-symmetric.
      out.at(r, c) = ((p + q) + (s + t)) / 4.0;
    }
  return out;
}

std::vector<double> slice_features(const Image& slice) {
  if (slice.rows != kGridSize || slice.cols != kGridSize)
    fail(ErrorCode::kBadDims, "slice features need a 64x64 slice");
  return pool2x2(slice).px;
}

std::vector<double> patient_features(const SliceStack& stack) {
  if (stack.slices.size() != static_cast<std::size_t>(kStackSlices))
    fail(ErrorCode::kBadDims, "patient features need a 12-slice stack");
  std::vector<double> out;
  out.reserve(kPatientFeatures);
  for (const auto& s : stack.slices) {
    auto f = slice_features(s);
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

}  // namespace mrtumor
