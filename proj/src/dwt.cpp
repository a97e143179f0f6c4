#include "mrtumor/dwt.hpp"

#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"

namespace mrtumor {

Subbands dwt2(const Image& x) {
  if (x.rows < 2 || x.cols < 2 || x.rows % 2 != 0 || x.cols % 2 != 0)
    fail(ErrorCode::kBadDims, "dwt2 needs even, non-zero dims");
  const int h = x.rows / 2, w = x.cols / 2;
  Subbands s{Image(h, w), Image(h, w), Image(h, w), Image(h, w)};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double p = x.at(2 * r, 2 * c), q = x.at(2 * r, 2 * c + 1);
      const double u = x.at(2 * r + 1, 2 * c), v = x.at(2 * r + 1, 2 * c + 1);
      s.cA.at(r, c) = ((p + q) + (u + v)) / 4.0;
      s.cH.at(r, c) = ((p - q) + (u - v)) / 4.0;
      s.cV.at(r, c) = ((p + q) - (u + v)) / 4.0;
      s.cD.at(r, c) = ((p - q) - (u - v)) / 4.0;
    }
  return s;
}

Image idwt2(const Subbands& s) {
  const int h = s.cA.rows, w = s.cA.cols;
  for (const Image* b : {&s.cH, &s.cV, &s.cD})
    if (b->rows != h || b->cols != w) fail(ErrorCode::kBadDims, "idwt2: subband shapes differ");
  Image x(2 * h, 2 * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double a = s.cA.at(r, c), hh = s.cH.at(r, c), vv = s.cV.at(r, c), d = s.cD.at(r, c);
      x.at(2 * r, 2 * c) = (a + hh) + (vv + d);
      x.at(2 * r, 2 * c + 1) = (a - hh) + (vv - d);
      x.at(2 * r + 1, 2 * c) = (a + hh) - (vv + d);
      x.at(2 * r + 1, 2 * c + 1) = (a - hh) - (vv - d);
    }
  return x;
}

Image approximation_image(const Image& slice) {
  const Image ca = pool2x2(slice);
  Image out(slice.rows, slice.cols);
  for (int r = 0; r < slice.rows; ++r)
    for (int c = 0; c < slice.cols; ++c) out.at(r, c) = ca.at(r / 2, c / 2);
  return out;
}

}  // namespace mrtumor
