#include <algorithm>

#include "doctest.h"
#include "mrtumor/dwt.hpp"
#include "mrtumor/error.hpp"
#include "mrtumor/phantom.hpp"
#include "mrtumor/segment.hpp"
#include "support.hpp"

using namespace mrtumor;

namespace {

Mask brute_contralateral(const Image& s, double theta) {
  Mask m(s.rows, s.cols);
  for (int i = 0; i < s.rows; ++i)
    for (int j = 0; j < s.cols; ++j) {
      const int mirror = s.cols - 1 - j;
      m.set(i, j, s.at(i, j) - s.at(i, mirror) > theta);
    }
  return m;
}

Mask tile_census(const Mask& m, int kappa) {
  Mask out(m.rows, m.cols);
  for (int tr = 0; tr < m.rows / 4; ++tr)
    for (int tc = 0; tc < m.cols / 4; ++tc) {
      int count = 0;
      for (int r = 4 * tr; r < 4 * tr + 4; ++r)
        for (int c = 4 * tc; c < 4 * tc + 4; ++c) count += m.at(r, c);
      if (count < kappa) continue;
      for (int r = 4 * tr; r < 4 * tr + 4; ++r)
        for (int c = 4 * tc; c < 4 * tc + 4; ++c) out.set(r, c, m.at(r, c));
    }
  return out;
}

bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.cells.size(); ++i)
    if (a.cells[i] && !b.cells[i]) return false;
  return true;
}

// Symmetric ellipse with an optional bright square on the left.
Image brain_slice(bool tumor, int r0 = 24, int c0 = 12, int size = 8) {
  Image img(64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const double dx = (c - 31.5) / 26.0, dy = (r - 31.5) / 29.0;
      if (dx * dx + dy * dy <= 1.0) img.at(r, c) = 0.4;
    }
  if (tumor)
    for (int r = r0; r < r0 + size; ++r)
      for (int c = c0; c < c0 + size; ++c) img.at(r, c) = 0.9;
  return img;
}

SliceStack symmetric_stack() {
  SliceStack s;
  s.patient_id = "S";
  for (int i = 0; i < kStackSlices; ++i) s.slices.push_back(intensity_normalize(brain_slice(false)));
  return s;
}

}  // namespace

TEST_CASE("contralateral mask on symmetric input, planted patch and theta = 1") {
  const Image sym = brain_slice(false);
  CHECK(contralateral_mask(sym, 0.2).empty());

  Image s(64, 64, 0.4);
  for (int r = 10; r < 16; ++r)
    for (int c = 5; c < 11; ++c) s.at(r, c) = 0.9;
  const Mask m = contralateral_mask(s, 0.2);
  CHECK(m == brute_contralateral(s, 0.2));
  CHECK(m.count() == 36);
  for (int r = 10; r < 16; ++r)
    for (int c = 5; c < 11; ++c) CHECK(m.at(r, c));

  Rng rng(1);
  CHECK(contralateral_mask(testing::random_image(rng), 1.0).empty());
}

TEST_CASE("contralateral mask matches the brute-force mirror pairs") {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Image s = testing::random_image(rng);
    const double theta = rng.uniform(0.0, 0.6);
    CHECK(contralateral_mask(s, theta) == brute_contralateral(s, theta));
  }
}

TEST_CASE("contralateral mask is monotone in theta") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Image s = testing::random_image(rng);
    double a = rng.uniform(0.0, 0.8), b = rng.uniform(0.0, 0.8);
    if (a > b) std::swap(a, b);
    CHECK(subset(contralateral_mask(s, b), contralateral_mask(s, a)));
  }
}

TEST_CASE("patch filter examples and tile census") {
  Mask single(64, 64);
  single.set(9, 9);
  CHECK(patch_filter(single, 6).empty());

  Mask tile(64, 64);
  for (int r = 8; r < 12; ++r)
    for (int c = 4; c < 8; ++c) tile.set(r, c);
  CHECK(patch_filter(tile, 6) == tile);

  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const Mask m = testing::random_mask(rng, rng.uniform(0.05, 0.6));
    const int kappa = 1 + static_cast<int>(rng.below(16));
    const Mask out = patch_filter(m, kappa);
    CHECK(out == tile_census(m, kappa));
    CHECK(subset(out, m));
  }
}

TEST_CASE("verify_neighbors") {
  std::vector<bool> nonempty(12, false);
  nonempty[5] = nonempty[6] = true;
  CHECK(verify_neighbors({5}, nonempty) == std::set<int>{5, 6});
  CHECK(verify_neighbors({}, nonempty).empty());
  CHECK(verify_neighbors({0}, nonempty).empty());  // nearest evidence is 5 slices away
  CHECK(verify_neighbors({2}, nonempty) == std::set<int>{2, 5});
  CHECK(verify_neighbors({11}, std::vector<bool>(12, false)).empty());

  // Constructed stack with the tumor on slices 5 and 6.
  SliceStack s = symmetric_stack();
  s.slices[5] = intensity_normalize(brain_slice(true));
  s.slices[6] = intensity_normalize(brain_slice(true));
  SegConfig cfg;
  CHECK(verify_neighbors({5}, s, cfg) == std::set<int>{5, 6});
  CHECK(verify_neighbors({9}, s, cfg) == std::set<int>{6, 9});
  CHECK(verify_neighbors({1}, symmetric_stack(), cfg).empty());
}

TEST_CASE("remove_stray and make_continuous") {
  CHECK(remove_stray({3, 7, 8}) == std::set<int>{7, 8});
  CHECK(remove_stray({5}).empty());
  CHECK(remove_stray({5, 6, 7}) == std::set<int>{5, 6, 7});
  CHECK(make_continuous({6, 7, 11, 12}) == std::set<int>{6, 7, 8, 9, 10, 11, 12});
  CHECK(make_continuous({4}) == std::set<int>{4});
  CHECK(make_continuous({}).empty());

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::set<int> s;
    for (int i = 0; i < 12; ++i)
      if (rng.uniform() < 0.3) s.insert(i);
    const auto kept = remove_stray(s);
    for (int i : kept) CHECK((kept.count(i - 1) || kept.count(i + 1)));
    const auto run = make_continuous(s);
    if (!s.empty()) CHECK(static_cast<int>(run.size()) == *s.rbegin() - *s.begin() + 1);
  }
}

TEST_CASE("delineate") {
  Mask sq(64, 64);
  for (int r = 10; r < 13; ++r)
    for (int c = 20; c < 23; ++c) sq.set(r, c);
  const auto contour = delineate(sq);
  CHECK(contour.size() == 8);
  CHECK(std::find(contour.begin(), contour.end(), Pixel{11, 21}) == contour.end());

  Mask one(64, 64);
  one.set(0, 63);
  CHECK(delineate(one) == std::vector<Pixel>{{0, 63}});
  CHECK(delineate(Mask(64, 64)).empty());

  Rng rng(6);
  const Mask m = testing::random_mask(rng, 0.5);
  for (const auto& p : delineate(m)) {
    CHECK(m.at(p.row, p.col));
    const bool edge = p.row == 0 || p.col == 0 || p.row == 63 || p.col == 63 || !m.at(p.row - 1, p.col) ||
                      !m.at(p.row + 1, p.col) || !m.at(p.row, p.col - 1) || !m.at(p.row, p.col + 1);
    CHECK(edge);
  }
}

TEST_CASE("symmetric stack misclassified upstream ends tumor free") {
  const SliceStack s = symmetric_stack();
  const auto seg = segment_patient(s, {3, 4, 5}, {});
  CHECK_FALSE(seg.has_tumor);
  CHECK(seg.final_slices.empty());
  for (const auto& m : seg.masks) CHECK(m.grid.empty());
  CHECK(seg.contours.empty());
  CHECK(seg.overlay.data == stack_to_volume(s).data);
}

TEST_CASE("empty prediction leaves everything empty") {
  SliceStack s = symmetric_stack();
  s.slices[4] = intensity_normalize(brain_slice(true));
  const auto seg = segment_patient(s, {}, {});
  CHECK_FALSE(seg.has_tumor);
  REQUIRE(seg.masks.size() == 12);
  for (const auto& m : seg.masks) CHECK(m.grid.empty());
  CHECK(seg.overlay.data == stack_to_volume(s).data);
}

TEST_CASE("planted tumor is segmented and the overlay differs only on the contour") {
  SliceStack s = symmetric_stack();
  for (int i : {4, 5, 6}) s.slices[i] = intensity_normalize(brain_slice(true));
  const auto seg = segment_patient(s, {5}, {});
  CHECK(seg.has_tumor);
  CHECK(seg.final_slices == std::set<int>{4, 5, 6});
  const Volume base = stack_to_volume(s);
  std::set<std::size_t> contour_idx;
  for (const auto& c : seg.contours)
    for (const auto& p : c.pixels) contour_idx.insert(base.index(p.col, p.row, c.slice));
  CHECK_FALSE(contour_idx.empty());
  for (std::size_t i = 0; i < base.data.size(); ++i) {
    if (contour_idx.count(i)) CHECK(seg.overlay.data[i] == 1.0f);
    else CHECK(seg.overlay.data[i] == base.data[i]);
  }
  // The 8x8 square at rows 24..31, cols 12..19 is block aligned.
  for (int i : {4, 5, 6}) {
    const Mask& m = seg.masks[i].grid;
    CHECK(m.count() == 64);
    CHECK(m.at(24, 12));
    CHECK(m.at(31, 19));
  }
  const Volume mv = mask_volume(seg);
  CHECK(mv.header.datatype == Datatype::kUint8);
  CHECK(mv.at(12, 24, 5) == 1.0f);
  CHECK(mv.at(12, 24, 3) == 0.0f);
}

TEST_CASE("final masks are mirror equivariant on phantoms") {
  PhantomSpec spec;
  spec.has_tumor = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.laterality = seed % 2 ? Laterality::kLeft : Laterality::kRight;
    const auto p = generate_patient(spec, seed);
    const SliceStack s = testing::stack_from_volume(p.volume);
    SliceStack m = s;
    for (auto& img : m.slices) img = mirror_columns(img);
    const auto truth = p.truth.stack_slices();
    const std::set<int> predicted(truth.begin(), truth.end());
    const auto a = segment_patient(s, predicted, {});
    const auto b = segment_patient(m, predicted, {});
    CHECK(a.final_slices == b.final_slices);
    for (int i = 0; i < kStackSlices; ++i) CHECK(mirror_columns(a.masks[i].grid) == b.masks[i].grid);
  }
}

TEST_CASE("config validation and json") {
  SegConfig c;
  c.threshold = 0.0;
  CHECK_THROWS_AS(validate(c), Error);
  c = SegConfig{};
  c.patch_min_count = 17;
  CHECK_THROWS_AS(validate(c), Error);
  c.patch_min_count = 3;
  c.threshold = 0.35;
  const auto back = seg_config_from_json(to_json(c));
  CHECK(back.threshold == 0.35);
  CHECK(back.patch_min_count == 3);
}
