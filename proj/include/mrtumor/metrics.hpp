#pragma once

#include <string>

#include "mrtumor/image.hpp"

namespace mrtumor {

struct ConfusionCounts {
  long long tp = 0;
  long long fn = 0;
  long long tn = 0;
  long long fp = 0;

  long long total() const { return tp + fn + tn + fp; }
  /// truth/predicted: true = abnormal (tumor).
  void add(bool truth, bool predicted);
};

// Percentages in [0, 100].
double accuracy(const ConfusionCounts& c);     // throws kEmptyCounts
double sensitivity(const ConfusionCounts& c);  // throws kNoPositives
double specificity(const ConfusionCounts& c);  // throws kNoNegatives

/// 2|A n B| / (|A| + |B|); 1 when both are empty. Throws kDimensionMismatch.
double dice(const Mask& a, const Mask& b);

/// Two-decimal rendering, e.g. "92.00".
std::string format_percent(double pct);

}  // namespace mrtumor
