#pragma once

// One-level 2-D Haar decomposition with averaging normalization. For each
// 2x2 block [p q; r s]:
//   cA = (p+q+r+s)/4   cH = (p-q+r-s)/4   cV = (p+q-r-s)/4   cD = (p-q-r+s)/4
// so cA stays in intensity units and equals 2x2 mean pooling.

#include "mrtumor/image.hpp"

namespace mrtumor {

struct Subbands {
  Image cA, cH, cV, cD;
};

Subbands dwt2(const Image& slice);
Image idwt2(const Subbands& s);

/// cA upsampled back to the input size by 2x2 pixel replication.
Image approximation_image(const Image& slice);

}  // namespace mrtumor
