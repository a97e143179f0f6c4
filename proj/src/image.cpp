#include "mrtumor/image.hpp"

namespace mrtumor {

Image mirror_columns(const Image& img) {
  Image out(img.rows, img.cols);
  for (int r = 0; r < img.rows; ++r)
    for (int c = 0; c < img.cols; ++c) out.at(r, c) = img.at(r, img.cols - 1 - c);
  return out;
}

Mask mirror_columns(const Mask& m) {
  Mask out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out.set(r, c, m.at(r, m.cols - 1 - c));
  return out;
}

}  // namespace mrtumor
