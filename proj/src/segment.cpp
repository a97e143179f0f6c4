#include "mrtumor/segment.hpp"

#include <algorithm>
#include <cmath>

#include "mrtumor/dwt.hpp"
#include "mrtumor/error.hpp"

namespace mrtumor {

void validate(const SegConfig& cfg) {
  if (!(cfg.threshold > 0.0) || !std::isfinite(cfg.threshold))
    fail(ErrorCode::kInvalidArgument, "segment: threshold must be > 0");
  if (cfg.patch_min_count < 1 || cfg.patch_min_count > kPatchSize * kPatchSize)
    fail(ErrorCode::kInvalidArgument, "segment: patch_min_count must lie in [1, 16]");
}

nlohmann::json to_json(const SegConfig& cfg) {
  return {{"threshold", cfg.threshold}, {"patch_min_count", cfg.patch_min_count}};
}

SegConfig seg_config_from_json(const nlohmann::json& j, SegConfig cfg) {
  try {
    if (j.contains("threshold")) cfg.threshold = j.at("threshold").get<double>();
    if (j.contains("patch_min_count")) cfg.patch_min_count = j.at("patch_min_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigInvalid, std::string("segment config: ") + e.what());
  }
  return cfg;
}

Mask contralateral_mask(const Image& slice, double threshold) {
  Mask m(slice.rows, slice.cols);
  const int n = slice.cols;
  for (int i = 0; i < slice.rows; ++i)
    for (int j = 0; j < n; ++j)
      if (slice.at(i, j) > slice.at(i, n - 1 - j) + threshold) m.set(i, j);
  return m;
}

Mask patch_filter(const Mask& mask, int min_count) {
  Mask out = mask;
  for (int tr = 0; tr < mask.rows; tr += kPatchSize)
    for (int tc = 0; tc < mask.cols; tc += kPatchSize) {
      const int r_end = std::min(tr + kPatchSize, mask.rows);
      const int c_end = std::min(tc + kPatchSize, mask.cols);
      int count = 0;
      for (int r = tr; r < r_end; ++r)
        for (int c = tc; c < c_end; ++c) count += mask.at(r, c) ? 1 : 0;
      if (count >= min_count) continue;
      for (int r = tr; r < r_end; ++r)
        for (int c = tc; c < c_end; ++c) out.set(r, c, false);
    }
  return out;
}

std::set<int> verify_neighbors(const std::set<int>& predicted, const std::vector<bool>& nonempty) {
  const int n = static_cast<int>(nonempty.size());
  std::set<int> out;
  for (int s : predicted) {
    if (s < 0 || s >= n) fail(ErrorCode::kInvalidArgument, "verify_neighbors: slice index out of range");
    std::vector<int> confirming;
    for (int k = std::max(0, s - kNeighborWindow); k <= std::min(n - 1, s + kNeighborWindow); ++k)
      if (nonempty[k]) confirming.push_back(k);
    if (confirming.empty()) continue;
    out.insert(s);
    out.insert(confirming.begin(), confirming.end());
  }
  return out;
}

Mask slice_tumor_mask(const Image& slice, const SegConfig& cfg) {
  return patch_filter(contralateral_mask(approximation_image(slice), cfg.threshold), cfg.patch_min_count);
}

std::set<int> verify_neighbors(const std::set<int>& predicted, const SliceStack& stack, const SegConfig& cfg) {
  std::vector<bool> nonempty(stack.slices.size(), false);
  for (std::size_t i = 0; i < stack.slices.size(); ++i) nonempty[i] = !slice_tumor_mask(stack.slices[i], cfg).empty();
  return verify_neighbors(predicted, nonempty);
}

std::set<int> remove_stray(const std::set<int>& slices) {
  std::set<int> out;
  for (int s : slices)
    if (slices.count(s - 1) || slices.count(s + 1)) out.insert(s);
  return out;
}

std::set<int> make_continuous(const std::set<int>& slices) {
  std::set<int> out;
  if (slices.empty()) return out;
  for (int s = *slices.begin(); s <= *slices.rbegin(); ++s) out.insert(s);
  return out;
}

std::vector<Pixel> delineate(const Mask& mask) {
  std::vector<Pixel> out;
  auto inside = [&](int r, int c) { return r >= 0 && r < mask.rows && c >= 0 && c < mask.cols && mask.at(r, c); };
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c) {
      if (!mask.at(r, c)) continue;
      if (!inside(r - 1, c) || !inside(r + 1, c) || !inside(r, c - 1) || !inside(r, c + 1)) out.push_back({r, c});
    }
  return out;
}

Segmentation segment_patient(const SliceStack& stack, const std::set<int>& predicted, const SegConfig& cfg) {
  validate(cfg);
  validate(stack);
  const int n = static_cast<int>(stack.slices.size());

  std::vector<Mask> candidate(n);
  std::vector<bool> nonempty(n, false);
  for (int i = 0; i < n; ++i) {
    candidate[i] = slice_tumor_mask(stack.slices[i], cfg);
    nonempty[i] = !candidate[i].empty();
  }

  Segmentation seg;
  seg.verified = verify_neighbors(predicted, nonempty);
  seg.final_slices = make_continuous(remove_stray(seg.verified));
  seg.overlay = stack_to_volume(stack);
  for (int i = 0; i < n; ++i) {
    TumorMask tm{i, Mask(kGridSize, kGridSize)};
    if (seg.final_slices.count(i)) tm.grid = candidate[i];
    if (!tm.grid.empty()) {
      Contour contour{i, delineate(tm.grid)};
      for (const auto& p : contour.pixels) seg.overlay.at(p.col, p.row, i) = 1.0f;
      seg.contours.push_back(std::move(contour));
      seg.has_tumor = true;
    }
    seg.masks.push_back(std::move(tm));
  }
  return seg;
}

Volume mask_volume(const Segmentation& seg, std::array<float, 3> pixdim) {
  Volume v(kGridSize, kGridSize, static_cast<std::int64_t>(seg.masks.size()), pixdim);
  v.header.datatype = Datatype::kUint8;
  for (const auto& m : seg.masks)
    for (int r = 0; r < m.grid.rows; ++r)
      for (int c = 0; c < m.grid.cols; ++c)
        if (m.grid.at(r, c)) v.at(c, r, m.slice) = 1.0f;
  return v;
}

}  // namespace mrtumor
