#pragma once

// Random forest of CART classification trees (Gini impurity, bootstrap
// resampling, random feature subsets per split). Classes are 0 = clean and
// 1 = tumor.

#include <array>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "json.hpp"
#include "mrtumor/preprocess.hpp"

namespace mrtumor {

inline constexpr int kClean = 0;
inline constexpr int kTumor = 1;

struct ForestConfig {
  int n_trees = 25;
  int max_depth = 12;
  int min_samples_leaf = 2;
  int features_per_split = 0;  // 0 = ceil(sqrt(d))
  std::uint64_t seed = 0;
};

void validate(const ForestConfig& cfg);

struct TreeNode {
  int feature = -1;       // -1 marks a leaf
  double threshold = 0.0; // go left iff x[feature] <= threshold
  int left = -1;
  int right = -1;
  int cls = kClean;       // majority class (leaves)
  std::array<int, 2> counts{0, 0};

  bool is_leaf() const { return feature < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int predict(std::span<const double> x) const;
  bool operator==(const DecisionTree&) const = default;
};

struct Forest {
  int dimension = 0;
  ForestConfig config;
  std::vector<DecisionTree> trees;
  double oob_error = 0.0;  // fraction of out-of-bag rows misclassified

  bool operator==(const Forest&) const = default;
};

/// Throws kSingleClass, kDimensionMismatch or kInvalidArgument.
Forest train_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                    const ForestConfig& cfg, int workers = 1);

/// Bootstrap row indices used for tree `tree_index`; a pure function of
/// (seed, tree_index, n).
std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t tree_index, std::size_t n);

/// Number of trees voting tumor. Throws kDimensionMismatch.
int tumor_votes(const Forest& f, std::span<const double> x);

/// Strict majority vote; an exact tie resolves to tumor.
int predict_forest(const Forest& f, std::span<const double> x);

/// Stack indices in [0, 12) whose slice the forest labels tumor, ascending.
std::set<int> select_slices(const Forest& f, const SliceStack& stack);

nlohmann::json forest_to_json(const Forest& f);
/// Validates structure (acyclic, in-range children and features). Throws kBadModel.
Forest forest_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ForestConfig& cfg);
ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig defaults = {});

}  // namespace mrtumor
