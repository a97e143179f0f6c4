// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Criteria 1-3 and 8 share the benchmark pipeline runs.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mrtumor/dwt.hpp"
#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "mrtumor/forest.hpp"
#include "mrtumor/nifti.hpp"
#include "mrtumor/phantom.hpp"
#include "mrtumor/pipeline.hpp"
#include "mrtumor/segment.hpp"
#include "mrtumor/svm.hpp"
#include "support.hpp"

using namespace mrtumor;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---- shared benchmark -----------------------------------------------------

struct Benchmark {
  testing::TempDir single{"acc1"};
  testing::TempDir parallel{"acc4"};
  PipelineConfig cfg;
  SweepResult sweep;
  EvaluationSummary sum;
  double seconds = 0.0;
  bool ran = false;
  std::string error;
};

PipelineConfig benchmark_config(const fs::path& root, int workers) {
  PipelineConfig c;
  c.data_dir = root / "data";
  c.model_dir = root / "models";
  c.output_dir = root / "out";
  c.workers = workers;
  c.cohort.n_normal = 80;
  c.cohort.n_tumor = 80;
  c.cohort.contrast_min = 0.3;
  c.cohort.base.noise_sigma = 0.03;
  c.split_ratio = 3.0;
  return c;
}

Benchmark& benchmark() {
  static Benchmark out;
  static const bool done = [] {
    try {
      out.cfg = benchmark_config(out.single.path(), 1);
      // Calibrate on the sweep's own cohort, then run the benchmark with it.
      out.sweep = cmd_sweep(out.cfg);
      out.cfg.seg.threshold = out.sweep.threshold;
      out.cfg.seg.patch_min_count = out.sweep.patch_min_count;
      const auto t0 = std::chrono::steady_clock::now();
      out.sum = cmd_pipeline(out.cfg);
      out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out.ran = true;
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    return true;
  }();
  (void)done;
  return out;
}

// ---- criteria ---------------------------------------------------------------

void end_to_end(Verdict& v) {
  auto& b = benchmark();
  v.require(b.ran, "pipeline: " + b.error);
  if (!b.ran) return;
  const double acc = accuracy(b.sum.stage1_test);
  const double spec = specificity(b.sum.final_test);
  v.detail << "stage-1 test accuracy " << fmt(acc, 2) << "%, final specificity " << fmt(spec, 2) << "%, pipeline "
           << fmt(b.seconds, 1) << " s single-threaded";
  v.require(b.sum.stage1_test.total() == 40, "40 test patients");
  v.require(acc >= 90.0, "accuracy >= 90%");
  v.require(spec >= 95.0, "specificity >= 95%");
  v.require(b.seconds < 120.0, "runtime < 120 s");
}

void slice_selection(Verdict& v) {
  auto& b = benchmark();
  v.require(b.ran, "pipeline: " + b.error);
  if (!b.ran) return;
  const double sens = sensitivity(b.sum.slices_test);
  v.detail << "forest slice sensitivity " << fmt(sens, 2) << "% (" << b.sum.slices_test.tp << "/"
           << b.sum.slices_test.tp + b.sum.slices_test.fn << " tumor slices)";
  v.require(sens >= 75.0, "sensitivity >= 75%");
}

void segmentation_quality(Verdict& v) {
  auto& b = benchmark();
  v.require(b.ran, "pipeline: " + b.error);
  if (!b.ran) return;
  const double clean = b.sum.normals > 0 ? 100.0 * b.sum.clean_normals / b.sum.normals : 0.0;
  v.detail << "calibrated theta " << fmt(b.sweep.threshold, 3) << ", kappa " << b.sweep.patch_min_count
           << "; mean TP Dice " << fmt(b.sum.mean_tp_dice) << " over " << b.sum.tp_dice_slices << " slices; "
           << b.sum.clean_normals << "/" << b.sum.normals << " normals clean";
  v.require(b.sum.tp_dice_slices > 0, "some true-positive slices");
  v.require(b.sum.mean_tp_dice >= 0.6, "Dice >= 0.6");
  v.require(b.sum.normals > 0 && clean >= 95.0, "clean normals >= 95%");
}

double direct_ncc(const std::vector<double>& f, const std::vector<double>& g) {
  long double mf = 0, mg = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    mf += f[i];
    mg += g[i];
  }
  mf /= f.size();
  mg /= g.size();
  long double num = 0, ff = 0, gg = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    num += (f[i] - mf) * (g[i] - mg);
    ff += (f[i] - mf) * (f[i] - mf);
    gg += (g[i] - mg) * (g[i] - mg);
  }
  return static_cast<double>(num / std::sqrt(ff * gg));
}

int walk_tree(const nlohmann::json& nodes, const std::vector<double>& x) {
  std::size_t id = 0;
  while (nodes[id][0].get<int>() >= 0) {
    const int f = nodes[id][0].get<int>();
    id = x[f] <= nodes[id][1].get<double>() ? nodes[id][2].get<std::size_t>() : nodes[id][3].get<std::size_t>();
  }
  return nodes[id][4].get<int>();
}

void oracles(Verdict& v) {
  Rng rng(4001);
  long long pool_bad = 0, census_bad = 0, vote_bad = 0;
  double ca_err = 0.0, ncc_err = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Image s = testing::random_image(rng);
    const Image p = pool2x2(s);
    for (int r = 0; r < 32; ++r)
      for (int c = 0; c < 32; ++c) {
        double block = 0.0;
        block += s.at(2 * r, 2 * c) + s.at(2 * r, 2 * c + 1);
        block += s.at(2 * r + 1, 2 * c) + s.at(2 * r + 1, 2 * c + 1);
        pool_bad += p.at(r, c) != block / 4.0;
      }
    const Image a = dwt2(s).cA;
    for (std::size_t i = 0; i < a.px.size(); ++i) ca_err = std::max(ca_err, std::abs(a.px[i] - p.px[i]));

    const Mask m = testing::random_mask(rng, rng.uniform(0.05, 0.6));
    const int kappa = 1 + static_cast<int>(rng.below(16));
    const Mask out = patch_filter(m, kappa);
    for (int tr = 0; tr < 16; ++tr)
      for (int tc = 0; tc < 16; ++tc) {
        int count = 0;
        for (int r = 4 * tr; r < 4 * tr + 4; ++r)
          for (int c = 4 * tc; c < 4 * tc + 4; ++c) count += m.at(r, c);
        for (int r = 4 * tr; r < 4 * tr + 4; ++r)
          for (int c = 4 * tc; c < 4 * tc + 4; ++c) census_bad += out.at(r, c) != (count >= kappa && m.at(r, c));
      }

    const std::size_t n = 2 + rng.below(500);
    std::vector<double> f(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = rng.uniform(-1, 1);
      g[i] = 0.3 * f[i] + rng.uniform(-1, 1);
    }
    ncc_err = std::max(ncc_err, std::abs(ncc(f, g) - direct_ncc(f, g)));
  }

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> row(10);
    for (auto& r : row) r = rng.uniform();
    y.push_back(row[0] + row[3] > 1.0 + rng.uniform(-0.2, 0.2) ? kTumor : kClean);
    x.push_back(std::move(row));
  }
  ForestConfig fc;
  fc.seed = 17;
  const Forest forest = train_forest(x, y, fc);
  const auto j = forest_to_json(forest);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> q(10);
    for (auto& r : q) r = rng.uniform();
    int tally = 0;
    for (const auto& tree : j["trees"]) tally += walk_tree(tree["nodes"], q) == kTumor;
    const int total = static_cast<int>(j["trees"].size());
    vote_bad += tumor_votes(forest, q) != tally;
    vote_bad += predict_forest(forest, q) != (2 * tally >= total ? kTumor : kClean);
  }

  v.detail << "pool mismatches " << pool_bad << ", max |cA-pool| " << ca_err << ", census mismatches " << census_bad
           << ", vote mismatches " << vote_bad << ", max NCC error " << ncc_err;
  v.require(pool_bad == 0, "pool2x2 exact");
  v.require(ca_err <= 1e-12, "cA == pool2x2");
  v.require(census_bad == 0, "patch census exact");
  v.require(vote_bad == 0, "vote tally exact");
  v.require(ncc_err <= 1e-12, "NCC direct");
}

void invariants(Verdict& v) {
  Rng rng(5001);
  double recon = 0.0, self_err = 0.0, idem = 0.0, scale = 0.0;
  bool range_ok = true, mono_ok = true;
  for (int t = 0; t < 1000; ++t) {
    const Image s = testing::random_image(rng);
    const Image r = idwt2(dwt2(s));
    for (std::size_t i = 0; i < s.px.size(); ++i) recon = std::max(recon, std::abs(r.px[i] - s.px[i]));
  }
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 2 + rng.below(300);
    std::vector<double> f(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = rng.uniform(-5, 5);
      g[i] = rng.uniform() < 0.5 ? rng.uniform(-5, 5) : -f[i] + rng.uniform(-0.01, 0.01);
    }
    const double c = ncc(f, g);
    range_ok = range_ok && c >= -1.0 && c <= 1.0;
    self_err = std::max(self_err, std::abs(ncc(f, f) - 1.0));

    Image s = testing::random_image(rng);
    const Image a = intensity_normalize(s);
    const Image b = intensity_normalize(a);
    for (std::size_t i = 0; i < a.px.size(); ++i) idem = std::max(idem, std::abs(a.px[i] - b.px[i]));
    const double k = rng.uniform(0.1, 10.0);
    Image scaled = s;
    for (auto& p : scaled.px) p *= k;
    const Image sa = intensity_normalize(scaled);
    for (std::size_t i = 0; i < a.px.size(); ++i) scale = std::max(scale, std::abs(a.px[i] - sa.px[i]));

    double lo = rng.uniform(0.0, 0.8), hi = rng.uniform(0.0, 0.8);
    if (lo > hi) std::swap(lo, hi);
    const Mask ml = contralateral_mask(s, lo), mh = contralateral_mask(s, hi);
    for (std::size_t i = 0; i < ml.cells.size(); ++i) mono_ok = mono_ok && (!mh.cells[i] || ml.cells[i]);
  }

  int mirror_bad = 0;
  PhantomSpec spec;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.has_tumor = seed % 4 != 0;
    spec.laterality = seed % 2 ? Laterality::kLeft : Laterality::kRight;
    const auto patient = generate_patient(spec, 9000 + seed);
    const SliceStack s = testing::stack_from_volume(patient.volume);
    SliceStack m = s;
    for (auto& img : m.slices) img = mirror_columns(img);
    std::set<int> predicted;
    for (int i = 0; i < kStackSlices; ++i)
      if (rng.uniform() < 0.4) predicted.insert(i);
    const auto a = segment_patient(s, predicted, {});
    const auto b = segment_patient(m, predicted, {});
    bool same = a.final_slices == b.final_slices && a.has_tumor == b.has_tumor;
    for (int i = 0; i < kStackSlices && same; ++i) same = mirror_columns(a.masks[i].grid) == b.masks[i].grid;
    mirror_bad += !same;
  }

  v.detail << "DWT max error " << recon << ", NCC self error " << self_err << ", normalize idempotence " << idem
           << ", scale " << scale << ", mirror mismatches " << mirror_bad << "/100";
  v.require(recon <= 1e-12, "DWT reconstruction");
  v.require(range_ok, "NCC in [-1,1]");
  v.require(self_err <= 1e-12, "NCC self = 1");
  v.require(idem <= 1e-15, "normalize idempotent");
  v.require(scale <= 1e-12, "normalize scale invariant");
  v.require(mono_ok, "threshold monotone");
  v.require(mirror_bad == 0, "mirror equivariance");
}

void micro_oracles(Verdict& v) {
  SvmConfig cfg;
  cfg.c = 10.0;
  const auto r = train_svm({{0.0}, {1.0}}, {1, -1}, cfg);
  const double w = r.model.w[0], b = r.model.b;
  const auto cont = make_continuous({6, 7, 11, 12});

  Volume grid(64, 64, 16, {3.0f, 3.0f, 10.0f});
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) grid.at(x, y, z) = static_cast<float>(z);
  const auto trimmed = trim_slices(grid);
  bool trim_ok = trimmed.size() == 12;
  for (std::size_t i = 0; trim_ok && i < trimmed.size(); ++i) trim_ok = trimmed[i].at(10, 10) == 2.0 + i;

  v.detail << "SVM w " << fmt(w, 6) << ", b " << fmt(b, 6) << "; make_continuous size " << cont.size()
           << "; trim keeps " << trimmed.size() << " slices";
  v.require(std::abs(w + 2.0) <= 1e-3 && std::abs(b - 1.0) <= 1e-3, "SVM (w, b) = (-2, 1)");
  v.require(cont == std::set<int>{6, 7, 8, 9, 10, 11, 12}, "make_continuous");
  v.require(trim_ok, "trim keeps slices 2..13");
}

void format_robustness(Verdict& v) {
  Rng rng(7001);
  Volume vol(7, 5, 3, {1.5f, 2.0f, 4.0f});
  for (auto& p : vol.data) p = static_cast<float>(rng.uniform(-1e6, 1e6));
  vol.data[3] = -0.0f;
  vol.data[4] = 1e-40f;  // subnormal
  const auto bytes = serialize_volume(vol);
  const Volume back = parse_volume(bytes);
  const bool exact = back.data.size() == vol.data.size() &&
                     std::memcmp(back.data.data(), vol.data.data(), vol.data.size() * sizeof(float)) == 0 &&
                     serialize_volume(back) == bytes;

  int typed = 0, accepted = 0, untyped = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    auto fuzz = bytes;
    const int flips = 1 + static_cast<int>(rng.below(8));
    for (int f = 0; f < flips; ++f) {
      const std::size_t pos = rng.below(trial % 3 == 0 ? fuzz.size() : 352);
      fuzz[pos] = static_cast<std::uint8_t>(rng.below(256));
    }
    if (trial % 5 == 0) fuzz.resize(rng.below(fuzz.size() + 1));
    try {
      const Volume got = parse_volume(fuzz);
      accepted += got.data.size() == got.header.voxel_count();
    } catch (const Error&) {
      ++typed;
    } catch (...) {
      ++untyped;
    }
  }
  v.detail << "round trip " << (exact ? "bit-exact" : "differs") << "; fuzz: " << typed << " typed errors, "
           << accepted << " accepted, " << untyped << " untyped";
  v.require(exact, "bit-exact round trip");
  v.require(untyped == 0 && typed + accepted == 10000, "typed errors only");
}

void determinism(Verdict& v) {
  auto& b = benchmark();
  v.require(b.ran, "pipeline: " + b.error);
  if (!b.ran) return;
  PipelineConfig c = benchmark_config(b.parallel.path(), 4);
  c.seg = b.cfg.seg;
  cmd_pipeline(c);
  int differ = 0, compared = 0;
  for (const auto& rel : {fs::path("out/metrics.csv"), fs::path("out/evaluation.csv"), fs::path("out/classify.csv"),
                          fs::path("out/segmentation_report.json"), fs::path("models/svm.json"),
                          fs::path("models/forest.json"), fs::path("models/split.json"),
                          fs::path("data/manifest.json")}) {
    ++compared;
    if (testing::read_bytes(b.single.path() / rel) != testing::read_bytes(b.parallel.path() / rel)) {
      ++differ;
      v.detail << rel.string() << " differs; ";
    }
  }
  v.detail << compared - differ << "/" << compared << " reports identical (workers 1 vs 4)";
  v.require(differ == 0, "byte-identical reports");
}

}  // namespace

int main() {
  set_log_sink([](std::string_view) {});
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"end-to-end phantom benchmark", end_to_end},
      {"slice selection", slice_selection},
      {"segmentation quality", segmentation_quality},
      {"oracle equivalences", oracles},
      {"numerical invariants", invariants},
      {"micro-oracles", micro_oracles},
      {"format robustness", format_robustness},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
