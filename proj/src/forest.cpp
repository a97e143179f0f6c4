#include "mrtumor/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "mrtumor/parallel.hpp"
#include "mrtumor/rng.hpp"

namespace mrtumor {

namespace {

constexpr int kForestFormatVersion = 1;

double gini(int c0, int c1) {
  const double n = c0 + c1;
  if (n == 0) return 0.0;
  const double p0 = c0 / n, p1 = c1 / n;
  return 1.0 - p0 * p0 - p1 * p1;
}

int majority(const std::array<int, 2>& counts) { return counts[kTumor] >= counts[kClean] ? kTumor : kClean; }

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<std::vector<double>>& x, const std::vector<int>& y, const ForestConfig& cfg,
              int mtry, Rng& rng)
      : x_(x), y_(y), cfg_(cfg), mtry_(mtry), rng_(rng), features_(x.front().size()) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  DecisionTree build(std::vector<std::size_t> rows) {
    DecisionTree tree;
    grow(tree, std::move(rows), 0);
    return tree;
  }

 private:
  int grow(DecisionTree& tree, std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    std::array<int, 2> counts{0, 0};
    for (auto r : rows) ++counts[y_[r]];
    tree.nodes[id].counts = counts;
    tree.nodes[id].cls = majority(counts);

    const int m = static_cast<int>(rows.size());
    if (counts[0] == 0 || counts[1] == 0 || depth >= cfg_.max_depth || m < 2 * cfg_.min_samples_leaf)
      return id;

    const Split split = best_split(rows, gini(counts[0], counts[1]));
    if (split.feature < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (x_[r][split.feature] <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    tree.nodes[id].feature = split.feature;
    tree.nodes[id].threshold = split.threshold;
    const int l = grow(tree, std::move(left), depth + 1);
    const int r = grow(tree, std::move(right), depth + 1);
    tree.nodes[id].left = l;
    tree.nodes[id].right = r;
    return id;
  }

  Split best_split(const std::vector<std::size_t>& rows, double parent_impurity) {
    const int m = static_cast<int>(rows.size());
    const int min_leaf = cfg_.min_samples_leaf;
    Split best;
    best.impurity = parent_impurity - 1e-12;
    std::vector<std::pair<double, int>> vals(rows.size());

    // Partial Fisher-Yates over the feature list: keep drawing until mtry
    // non-constant features have been examined or the list is exhausted.
    int examined = 0;
    for (std::size_t k = 0; k < features_.size() && examined < mtry_; ++k) {
      std::swap(features_[k], features_[k + rng_.below(features_.size() - k)]);
      const int f = features_[k];
      for (int i = 0; i < m; ++i) vals[i] = {x_[rows[i]][f], y_[rows[i]]};
      std::sort(vals.begin(), vals.end());
      if (vals.front().first == vals.back().first) continue;
      ++examined;

      std::array<int, 2> total{0, 0};
      for (const auto& v : vals) ++total[v.second];
      std::array<int, 2> left{0, 0};
      for (int i = 0; i + 1 < m; ++i) {
        ++left[vals[i].second];
        const int nl = i + 1, nr = m - nl;
        if (vals[i].first == vals[i + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double imp = (nl * gini(left[0], left[1]) +
                            nr * gini(total[0] - left[0], total[1] - left[1])) / m;
        if (imp < best.impurity) {
          double thr = vals[i].first + (vals[i + 1].first - vals[i].first) / 2.0;
          if (!(thr < vals[i + 1].first)) thr = vals[i].first;
          best = {f, thr, imp};
        }
      }
    }
    return best;
  }

  const std::vector<std::vector<double>>& x_;
  const std::vector<int>& y_;
  const ForestConfig& cfg_;
  int mtry_;
  Rng& rng_;
  std::vector<int> features_;
};

std::vector<std::size_t> draw_bootstrap(Rng& rng, std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = rng.below(n);
  return rows;
}

void check_dimension(const Forest& f, std::span<const double> x) {
  if (static_cast<int>(x.size()) != f.dimension)
    fail(ErrorCode::kDimensionMismatch, "forest: feature length " + std::to_string(x.size()) +
                                            " does not match model dimension " + std::to_string(f.dimension));
}

}  // namespace

int DecisionTree::predict(std::span<const double> x) const {
  std::size_t id = 0;
  for (std::size_t guard = 0; guard <= nodes.size(); ++guard) {
    const TreeNode& node = nodes[id];
    if (node.is_leaf()) return node.cls;
    id = static_cast<std::size_t>(x[node.feature] <= node.threshold ? node.left : node.right);
  }
  fail(ErrorCode::kBadModel, "decision tree contains a cycle");
}

void validate(const ForestConfig& cfg) {
  if (cfg.n_trees < 1) fail(ErrorCode::kInvalidArgument, "forest: n_trees must be >= 1");
  if (cfg.max_depth < 0) fail(ErrorCode::kInvalidArgument, "forest: max_depth must be >= 0");
  if (cfg.min_samples_leaf < 1) fail(ErrorCode::kInvalidArgument, "forest: min_samples_leaf must be >= 1");
  if (cfg.features_per_split < 0) fail(ErrorCode::kInvalidArgument, "forest: features_per_split must be >= 0");
}

std::vector<std::size_t> bootstrap_indices(std::uint64_t seed, std::size_t tree_index, std::size_t n) {
  Rng rng(derive_seed(seed, tree_index));
  return draw_bootstrap(rng, n);
}

Forest train_forest(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                    const ForestConfig& cfg, int workers) {
  validate(cfg);
  if (x.empty()) fail(ErrorCode::kInvalidArgument, "train_forest: no training rows");
  if (x.size() != y.size()) fail(ErrorCode::kDimensionMismatch, "train_forest: row/label count differ");
  const std::size_t d = x.front().size();
  if (d == 0) fail(ErrorCode::kDimensionMismatch, "train_forest: zero-dimensional rows");
  bool seen[2] = {false, false};
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) fail(ErrorCode::kDimensionMismatch, "train_forest: ragged feature rows");
    if (y[i] != kClean && y[i] != kTumor) fail(ErrorCode::kInvalidArgument, "train_forest: labels must be 0 or 1");
    seen[y[i]] = true;
  }
  if (!seen[0] || !seen[1]) fail(ErrorCode::kSingleClass, "train_forest: both classes must be present");

  const int mtry = cfg.features_per_split > 0
                       ? std::min<int>(cfg.features_per_split, static_cast<int>(d))
                       : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
  Forest forest;
  forest.dimension = static_cast<int>(d);
  forest.config = cfg;
  forest.trees.resize(cfg.n_trees);
  std::vector<std::vector<std::size_t>> in_bag(cfg.n_trees);

  parallel_for(static_cast<std::size_t>(cfg.n_trees), workers, [&](std::size_t t) {
    Rng rng(derive_seed(cfg.seed, t));
    auto rows = draw_bootstrap(rng, x.size());
    in_bag[t] = rows;
    TreeBuilder builder(x, y, cfg, mtry, rng);
    forest.trees[t] = builder.build(std::move(rows));
  });

  std::vector<std::array<int, 2>> oob(x.size(), {0, 0});
  for (int t = 0; t < cfg.n_trees; ++t) {
    std::vector<char> used(x.size(), 0);
    for (auto r : in_bag[t]) used[r] = 1;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (!used[i]) ++oob[i][forest.trees[t].predict(x[i])];
  }
  int scored = 0, wrong = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (oob[i][0] + oob[i][1] == 0) continue;
    ++scored;
    if (majority(oob[i]) != y[i]) ++wrong;
  }
  forest.oob_error = scored > 0 ? static_cast<double>(wrong) / scored : 0.0;
  return forest;
}

int tumor_votes(const Forest& f, std::span<const double> x) {
  check_dimension(f, x);
  int votes = 0;
  for (const auto& t : f.trees) votes += t.predict(x) == kTumor ? 1 : 0;
  return votes;
}

int predict_forest(const Forest& f, std::span<const double> x) {
  const int votes = tumor_votes(f, x);
  const int total = static_cast<int>(f.trees.size());
  return 2 * votes >= total ? kTumor : kClean;
}

std::set<int> select_slices(const Forest& f, const SliceStack& stack) {
  std::set<int> out;
  for (std::size_t i = 0; i < stack.slices.size() && i < static_cast<std::size_t>(kStackSlices); ++i)
    if (predict_forest(f, slice_features(stack.slices[i])) == kTumor) out.insert(static_cast<int>(i));
  return out;
}

nlohmann::json to_json(const ForestConfig& cfg) {
  return {{"n_trees", cfg.n_trees},
          {"max_depth", cfg.max_depth},
          {"min_samples_leaf", cfg.min_samples_leaf},
          {"features_per_split", cfg.features_per_split},
          {"seed", cfg.seed}};
}

ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig cfg) {
  try {
    if (j.contains("n_trees")) cfg.n_trees = j.at("n_trees").get<int>();
    if (j.contains("max_depth")) cfg.max_depth = j.at("max_depth").get<int>();
    if (j.contains("min_samples_leaf")) cfg.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    if (j.contains("features_per_split")) cfg.features_per_split = j.at("features_per_split").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigInvalid, std::string("forest config: ") + e.what());
  }
  return cfg;
}

nlohmann::json forest_to_json(const Forest& f) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : f.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.cls, n.counts[0], n.counts[1]});
    trees.push_back({{"nodes", std::move(nodes)}});
  }
  return {{"format_version", kForestFormatVersion},
          {"kind", "random_forest"},
          {"node_fields", {"feature", "threshold", "left", "right", "class", "count_clean", "count_tumor"}},
          {"dimension", f.dimension},
          {"config", to_json(f.config)},
          {"oob_error", f.oob_error},
          {"feature_layout_id", kFeatureLayoutId},
          {"trees", std::move(trees)}};
}

Forest forest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kForestFormatVersion)
      fail(ErrorCode::kBadModel, "forest model: unsupported format_version");
    if (j.at("kind").get<std::string>() != "random_forest") fail(ErrorCode::kBadModel, "forest model: wrong kind");
    if (j.at("feature_layout_id").get<std::string>() != kFeatureLayoutId)
      fail(ErrorCode::kBadModel, "forest model: incompatible feature layout");
    Forest f;
    f.dimension = j.at("dimension").get<int>();
    if (f.dimension < 1) fail(ErrorCode::kBadModel, "forest model: dimension must be >= 1");
    f.config = forest_config_from_json(j.at("config"));
    f.oob_error = j.at("oob_error").get<double>();
    for (const auto& jt : j.at("trees")) {
      DecisionTree t;
      for (const auto& jn : jt.at("nodes")) {
        if (jn.size() != 7) fail(ErrorCode::kBadModel, "forest model: node must have 7 fields");
        TreeNode n;
        n.feature = jn[0].get<int>();
        n.threshold = jn[1].get<double>();
        n.left = jn[2].get<int>();
        n.right = jn[3].get<int>();
        n.cls = jn[4].get<int>();
        n.counts = {jn[5].get<int>(), jn[6].get<int>()};
        t.nodes.push_back(n);
      }
      const int count = static_cast<int>(t.nodes.size());
      if (count == 0) fail(ErrorCode::kBadModel, "forest model: empty tree");
      for (int id = 0; id < count; ++id) {
        const auto& n = t.nodes[id];
        if (n.cls != kClean && n.cls != kTumor) fail(ErrorCode::kBadModel, "forest model: bad class");
        if (n.is_leaf()) continue;
        if (n.feature >= f.dimension) fail(ErrorCode::kBadModel, "forest model: feature index out of range");
        // Children always follow their parent, which rules out cycles.
        if (n.left <= id || n.right <= id || n.left >= count || n.right >= count)
          fail(ErrorCode::kBadModel, "forest model: invalid child index");
        if (!std::isfinite(n.threshold)) fail(ErrorCode::kBadModel, "forest model: non-finite threshold");
      }
      f.trees.push_back(std::move(t));
    }
    if (f.trees.empty()) fail(ErrorCode::kBadModel, "forest model: no trees");
    return f;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadModel, std::string("forest model: ") + e.what());
  }
}

}  // namespace mrtumor
