#include "doctest.h"
#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "mrtumor/forest.hpp"
#include "mrtumor/phantom.hpp"
#include "support.hpp"

using namespace mrtumor;

namespace {

DecisionTree leaf(int cls) {
  DecisionTree t;
  TreeNode n;
  n.cls = cls;
  n.counts = {cls == kClean ? 1 : 0, cls == kTumor ? 1 : 0};
  t.nodes.push_back(n);
  return t;
}

Forest voting_forest(int tumor, int clean) {
  Forest f;
  f.dimension = 1;
  for (int i = 0; i < tumor; ++i) f.trees.push_back(leaf(kTumor));
  for (int i = 0; i < clean; ++i) f.trees.push_back(leaf(kClean));
  f.config.n_trees = tumor + clean;
  return f;
}

std::string dump(const Forest& f) { return forest_to_json(f).dump(); }

struct Data {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
};

Data make_data(std::uint64_t seed, int n, int d) {
  Rng rng(seed);
  Data out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (auto& v : row) v = rng.uniform();
    out.y.push_back(row[0] + 0.5 * row[1] > 0.75 ? kTumor : kClean);
    out.x.push_back(std::move(row));
  }
  return out;
}

}  // namespace

TEST_CASE("separable single feature is learned exactly") {
  Data d;
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double v = rng.uniform();
    d.x.push_back({v});
    d.y.push_back(v < 0.5 ? kClean : kTumor);
  }
  const Forest f = train_forest(d.x, d.y, {});
  CHECK(f.trees.size() == 25);
  for (std::size_t i = 0; i < d.x.size(); ++i) CHECK(predict_forest(f, d.x[i]) == d.y[i]);
}

TEST_CASE("training is deterministic and independent of workers") {
  const Data d = make_data(2, 150, 12);
  ForestConfig cfg;
  cfg.seed = 99;
  const Forest a = train_forest(d.x, d.y, cfg, 1);
  const Forest b = train_forest(d.x, d.y, cfg, 1);
  const Forest c = train_forest(d.x, d.y, cfg, 4);
  CHECK(dump(a) == dump(b));
  CHECK(dump(a) == dump(c));
  cfg.seed = 100;
  CHECK_FALSE(dump(train_forest(d.x, d.y, cfg)) == dump(a));
}

TEST_CASE("vote equals a manual tally of tree predictions") {
  const Data d = make_data(3, 120, 8);
  const Forest f = train_forest(d.x, d.y, {});
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(8);
    for (auto& v : x) v = rng.uniform();
    int tally = 0;
    for (const auto& tree : f.trees) tally += tree.predict(x) == kTumor;
    CHECK(tumor_votes(f, x) == tally);
    const int total = static_cast<int>(f.trees.size());
    CHECK(predict_forest(f, x) == (2 * tally >= total ? kTumor : kClean));
    const int winner_votes = predict_forest(f, x) == kTumor ? tally : total - tally;
    CHECK(2 * winner_votes >= total);
  }
}

TEST_CASE("majority arithmetic and the tie rule") {
  const std::vector<double> x{0.0};
  CHECK(predict_forest(voting_forest(13, 12), x) == kTumor);
  CHECK(predict_forest(voting_forest(12, 13), x) == kClean);
  CHECK(predict_forest(voting_forest(0, 25), x) == kClean);
  CHECK(predict_forest(voting_forest(2, 2), x) == kTumor);
  CHECK_THROWS_AS(predict_forest(voting_forest(1, 0), std::vector<double>{0.0, 1.0}), Error);
}

TEST_CASE("bootstrap indices are a pure function of seed and tree") {
  const auto a = bootstrap_indices(5, 3, 100);
  CHECK(a == bootstrap_indices(5, 3, 100));
  CHECK(a != bootstrap_indices(5, 4, 100));
  CHECK(a != bootstrap_indices(6, 3, 100));
  CHECK(a.size() == 100);
  for (auto i : a) CHECK(i < 100);
}

TEST_CASE("out-of-bag error lies in [0,1]") {
  const Data d = make_data(5, 100, 6);
  const Forest f = train_forest(d.x, d.y, {});
  CHECK(f.oob_error >= 0.0);
  CHECK(f.oob_error <= 1.0);
}

TEST_CASE("tree structure invariants") {
  const Data d = make_data(6, 200, 10);
  ForestConfig cfg;
  cfg.max_depth = 4;
  const Forest f = train_forest(d.x, d.y, cfg);
  for (const auto& t : f.trees) {
    REQUIRE_FALSE(t.nodes.empty());
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.is_leaf()) {
        CHECK(n.counts[0] + n.counts[1] >= cfg.min_samples_leaf);
        continue;
      }
      CHECK(n.feature < f.dimension);
      CHECK(n.left > static_cast<int>(i));
      CHECK(n.right > static_cast<int>(i));
      CHECK(n.left < static_cast<int>(t.nodes.size()));
      CHECK(n.right < static_cast<int>(t.nodes.size()));
    }
  }
}

TEST_CASE("training errors") {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode{};
  };
  CHECK(code([] { train_forest({{0.0}, {1.0}}, {kTumor, kTumor}, {}); }) == ErrorCode::kSingleClass);
  CHECK(code([] { train_forest({{0.0}, {1.0, 2.0}}, {kTumor, kClean}, {}); }) == ErrorCode::kDimensionMismatch);
  ForestConfig bad;
  bad.n_trees = 0;
  CHECK(code([&] { train_forest({{0.0}, {1.0}}, {kTumor, kClean}, bad); }) != ErrorCode{});
}

TEST_CASE("json round trip keeps every tree and rejects broken structure") {
  const Data d = make_data(7, 100, 5);
  const Forest f = train_forest(d.x, d.y, {});
  const auto j = forest_to_json(f);
  CHECK(j.at("trees").size() == 25);
  CHECK(dump(forest_from_json(j)) == dump(f));
  CHECK(dump(forest_from_json(nlohmann::json::parse(j.dump()))) == dump(f));

  auto find_internal = [&](nlohmann::json& doc) -> nlohmann::json* {
    for (auto& tree : doc["trees"])
      for (auto& node : tree["nodes"])
        if (node[0].get<int>() >= 0) return &node;
    return nullptr;
  };
  auto cyclic = j;
  auto* node = find_internal(cyclic);
  REQUIRE(node);
  (*node)[2] = 0;  // child pointing back to the root
  CHECK_THROWS_AS(forest_from_json(cyclic), Error);
  auto out_of_range = j;
  (*find_internal(out_of_range))[3] = 100000;
  CHECK_THROWS_AS(forest_from_json(out_of_range), Error);
  auto bad_feature = j;
  (*find_internal(bad_feature))[0] = 5;
  CHECK_THROWS_AS(forest_from_json(bad_feature), Error);
}

TEST_CASE("select_slices on an always-clean forest is empty") {
  Forest f = voting_forest(0, 3);
  f.dimension = kSliceFeatures;
  SliceStack s;
  s.slices.assign(kStackSlices, Image(kGridSize, kGridSize, 0.5));
  CHECK(select_slices(f, s).empty());
}

TEST_CASE("forest trained on phantom slices finds the tumor slices") {
  CohortSpec c;
  c.n_normal = 1;
  c.n_tumor = 16;
  c.base.noise_sigma = 0.03;
  const auto patients = generate_cohort(c, 21);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (std::size_t k = 1; k < 13; ++k) {
    const auto stack = testing::stack_from_volume(patients[k].volume);
    const auto truth = patients[k].truth.stack_slices();
    for (int s = 0; s < kStackSlices; ++s) {
      x.push_back(slice_features(stack.slices[s]));
      y.push_back(std::find(truth.begin(), truth.end(), s) != truth.end() ? kTumor : kClean);
    }
  }
  const Forest f = train_forest(x, y, {});
  CHECK(forest_to_json(f).at("trees").size() == 25);
  for (std::size_t k = 13; k < patients.size(); ++k) {
    const auto found = select_slices(f, testing::stack_from_volume(patients[k].volume));
    for (int s : found) {
      CHECK(s >= 0);
      CHECK(s < kStackSlices);
    }
    const auto truth = patients[k].truth.stack_slices();
    bool overlap = false;
    for (int s : truth) overlap = overlap || found.count(s);
    CHECK(overlap);
  }
}
