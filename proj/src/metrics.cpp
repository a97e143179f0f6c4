#include "mrtumor/metrics.hpp"

#include <cstdio>

#include "mrtumor/error.hpp"

namespace mrtumor {

void ConfusionCounts::add(bool truth, bool predicted) {
  if (truth) (predicted ? tp : fn) += 1;
  else (predicted ? fp : tn) += 1;
}

double accuracy(const ConfusionCounts& c) {
  if (c.tp < 0 || c.fn < 0 || c.tn < 0 || c.fp < 0) fail(ErrorCode::kInvalidArgument, "negative count");
  if (c.total() == 0) fail(ErrorCode::kEmptyCounts, "accuracy of an empty confusion table");
  return 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double sensitivity(const ConfusionCounts& c) {
  if (c.tp + c.fn <= 0) fail(ErrorCode::kNoPositives, "sensitivity needs at least one abnormal case");
  return 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

double specificity(const ConfusionCounts& c) {
  if (c.tn + c.fp <= 0) fail(ErrorCode::kNoNegatives, "specificity needs at least one normal case");
  return 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
}

double dice(const Mask& a, const Mask& b) {
  if (a.rows != b.rows || a.cols != b.cols) fail(ErrorCode::kDimensionMismatch, "dice: mask shapes differ");
  std::size_t inter = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    na += a.cells[i] != 0;
    nb += b.cells[i] != 0;
    inter += (a.cells[i] != 0 && b.cells[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::string format_percent(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", pct);
  return buf;
}

}  // namespace mrtumor
