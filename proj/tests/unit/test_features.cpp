#include "doctest.h"
#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "support.hpp"

using namespace mrtumor;

namespace {

Image brute_pool(const Image& s) {
  Image out(s.rows / 2, s.cols / 2);
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) {
      double total = 0.0;
      for (int dr = 0; dr < 2; ++dr) {
        double row = 0.0;
        for (int dc = 0; dc < 2; ++dc) row += s.at(2 * r + dr, 2 * c + dc);
        total += row;
      }
      out.at(r, c) = total / 4.0;
    }
  return out;
}

SliceStack zero_stack() {
  SliceStack s;
  s.slices.assign(kStackSlices, Image(kGridSize, kGridSize));
  return s;
}

}  // namespace

TEST_CASE("pool2x2 block example and constant input") {
  Image s(2, 2);
  s.px = {1, 2, 3, 4};
  CHECK(pool2x2(s).at(0, 0) == 2.5);
  const Image c = pool2x2(Image(64, 64, 0.3));
  CHECK(c.rows == 32);
  CHECK(c.cols == 32);
  for (double v : c.px) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("pool2x2 equals the brute-force block loop exactly") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Image s = testing::random_image(rng);
    CHECK(pool2x2(s) == brute_pool(s));
  }
}

TEST_CASE("pool2x2 rejects odd dims") {
  try {
    pool2x2(Image(63, 64));
    FAIL("expected BadDims");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadDims);
  }
}

TEST_CASE("pool2x2 preserves the mean and is monotone") {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Image s = testing::random_image(rng);
    const Image p = pool2x2(s);
    double a = 0.0, b = 0.0;
    for (double v : s.px) a += v;
    for (double v : p.px) b += v;
    CHECK(a / s.px.size() == doctest::Approx(b / p.px.size()).epsilon(1e-12));

    const int r = static_cast<int>(rng.below(64)), c = static_cast<int>(rng.below(64));
    s.at(r, c) += rng.uniform();
    const Image q = pool2x2(s);
    for (std::size_t i = 0; i < q.px.size(); ++i) CHECK(q.px[i] >= p.px[i]);
  }
}

TEST_CASE("slice features flatten row-major") {
  Rng rng(7);
  const Image s = testing::random_image(rng);
  const auto f = slice_features(s);
  REQUIRE(f.size() == static_cast<std::size_t>(kSliceFeatures));
  const Image p = brute_pool(s);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) CHECK(f[32 * r + c] == p.at(r, c));
  for (double v : slice_features(Image(64, 64, 0.6))) CHECK(v == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("patient features are slice-major") {
  auto zs = zero_stack();
  const auto z = patient_features(zs);
  CHECK(z.size() == static_cast<std::size_t>(kPatientFeatures));
  for (double v : z) CHECK(v == 0.0);

  Rng rng(8);
  auto s = zero_stack();
  s.slices[5] = testing::random_image(rng);
  const auto f = patient_features(s);
  CHECK(f.size() == 12288u);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const bool inside = i >= 5 * 1024 && i < 6 * 1024;
    if (!inside) CHECK(f[i] == 0.0);
  }
  const auto expected = slice_features(s.slices[5]);
  for (std::size_t i = 0; i < 1024; ++i) CHECK(f[5 * 1024 + i] == expected[i]);

  s.slices.pop_back();
  CHECK_THROWS_AS(patient_features(s), Error);
}
