#include "mrtumor/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mrtumor/error.hpp"
#include "mrtumor/features.hpp"
#include "mrtumor/rng.hpp"

namespace mrtumor {

namespace {

constexpr int kSvmFormatVersion = 1;
constexpr double kTau = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t check_inputs(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  if (x.empty()) fail(ErrorCode::kInvalidArgument, "train_svm: no training rows");
  if (x.size() != y.size()) fail(ErrorCode::kDimensionMismatch, "train_svm: row/label count differ");
  const std::size_t d = x.front().size();
  if (d == 0) fail(ErrorCode::kDimensionMismatch, "train_svm: zero-dimensional rows");
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) fail(ErrorCode::kDimensionMismatch, "train_svm: ragged feature rows");
    for (double v : x[i])
      if (!std::isfinite(v)) fail(ErrorCode::kInvalidArgument, "train_svm: non-finite feature");
    if (y[i] == 1) pos = true;
    else if (y[i] == -1) neg = true;
    else fail(ErrorCode::kInvalidArgument, "train_svm: labels must be +1 or -1");
  }
  if (!pos || !neg) fail(ErrorCode::kSingleClass, "train_svm: both classes must be present");
  return d;
}

SvmTrainResult train_smo(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         const SvmConfig& cfg) {
  const std::size_t n = x.size();
  const double c = cfg.c;
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) k[i * n + j] = k[j * n + i] = dot(x[i], x[j]);
  auto kern = [&](std::size_t i, std::size_t j) { return k[i * n + j]; };
  auto yd = [&](std::size_t i) { return static_cast<double>(y[i]); };

  std::vector<double> alpha(n, 0.0), grad(n, -1.0);
  auto in_up = [&](std::size_t t) { return (y[t] == 1 && alpha[t] < c) || (y[t] == -1 && alpha[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] == 1 && alpha[t] > 0) || (y[t] == -1 && alpha[t] < c); };

  auto build = [&] {
    LinearModel m;
    m.w.assign(x.front().size(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (alpha[i] != 0.0)
        for (std::size_t f = 0; f < m.w.size(); ++f) m.w[f] += alpha[i] * yd(i) * x[i][f];
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int nr_free = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yg = yd(i) * grad[i];
      if (alpha[i] >= c) {
        if (y[i] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else if (alpha[i] <= 0.0) {
        if (y[i] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
      } else {
        ++nr_free;
        sum_free += yg;
      }
    }
    const double rho = nr_free > 0 ? sum_free / nr_free : (ub + lb) / 2.0;
    m.b = -rho;
    return m;
  };

  SvmTrainResult r;
  r.config = cfg;
  const long long max_iter = static_cast<long long>(cfg.max_epochs) * static_cast<long long>(std::max<std::size_t>(n, 1));
  long long iter = 0;
  for (; iter < max_iter; ++iter) {
    // Working-set selection (second-order, maximal violating pair).
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t)
      if (in_up(t) && -yd(t) * grad[t] >= gmax) {
        gmax = -yd(t) * grad[t];
        i = t;
      }
    double gmax2 = -std::numeric_limits<double>::infinity();
    double obj_min = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double ygt = yd(t) * grad[t];
      gmax2 = std::max(gmax2, ygt);
      if (i == n) continue;
      const double diff = gmax + ygt;
      if (diff > 0.0) {
        double a = kern(i, i) + kern(t, t) - 2.0 * kern(i, t);
        if (a <= 0.0) a = kTau;
        const double obj = -(diff * diff) / a;
        if (obj <= obj_min) {
          obj_min = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || gmax + gmax2 < cfg.tolerance) {
      r.converged = true;
      break;
    }

    const double old_ai = alpha[i], old_aj = alpha[j];
    const double qij = yd(i) * yd(j) * kern(i, j);
    if (y[i] != y[j]) {
      double quad = kern(i, i) + kern(j, j) + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = diff; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = -diff; }
      }
      if (diff > 0) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = c - diff; }
      } else {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = c + diff; }
      }
    } else {
      double quad = kern(i, i) + kern(j, j) - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) { alpha[i] = c; alpha[j] = sum - c; }
      } else {
        if (alpha[j] < 0) { alpha[j] = 0; alpha[i] = sum; }
      }
      if (sum > c) {
        if (alpha[j] > c) { alpha[j] = c; alpha[i] = sum - c; }
      } else {
        if (alpha[i] < 0) { alpha[i] = 0; alpha[j] = sum; }
      }
    }
    const double dai = alpha[i] - old_ai, daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += yd(t) * (yd(i) * kern(t, i) * dai + yd(j) * kern(t, j) * daj);

    if ((iter + 1) % static_cast<long long>(n) == 0)
      r.objective_trace.push_back(primal_objective(build(), x, y, c));
  }
  r.iterations = static_cast<int>(std::min<long long>(iter, std::numeric_limits<int>::max()));
  r.model = build();
  r.objective_trace.push_back(primal_objective(r.model, x, y, c));
  return r;
}

SvmTrainResult train_subgradient(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                 const SvmConfig& cfg) {
  const std::size_t n = x.size(), d = x.front().size();
  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> w(d, 0.0), acc_w(d, 0.0);
  double b = 0.0, acc_b = 0.0;
  long long steps_in_window = 0;
  long long t = 0;

  SvmTrainResult r;
  r.config = cfg;
  double best_obj = std::numeric_limits<double>::infinity();
  int next_checkpoint = 1;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = y[i] * (dot(w, x[i]) + b);
      const double shrink = 1.0 - eta * lambda;
      for (auto& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t f = 0; f < d; ++f) w[f] += eta * y[i] * x[i][f];
        b += eta * y[i];
      }
      for (std::size_t f = 0; f < d; ++f) acc_w[f] += w[f];
      acc_b += b;
      ++steps_in_window;
    }
    r.iterations = epoch;
    if (epoch != next_checkpoint && epoch != cfg.max_epochs) continue;

    LinearModel avg;
    avg.w.resize(d);
    for (std::size_t f = 0; f < d; ++f) avg.w[f] = acc_w[f] / static_cast<double>(steps_in_window);
    avg.b = acc_b / static_cast<double>(steps_in_window);
    const double obj = primal_objective(avg, x, y, cfg.c);
    const bool settled = !r.objective_trace.empty() &&
                         std::abs(r.objective_trace.back() - obj) <= cfg.tolerance * std::max(1.0, std::abs(obj));
    r.objective_trace.push_back(obj);
    if (obj < best_obj) {
      best_obj = obj;
      r.model = avg;
    }
    std::fill(acc_w.begin(), acc_w.end(), 0.0);
    acc_b = 0.0;
    steps_in_window = 0;
    next_checkpoint *= 2;
    if (settled) {
      r.converged = true;
      break;
    }
  }
  return r;
}

}  // namespace

void validate(const SvmConfig& cfg) {
  if (!(cfg.c > 0.0) || !std::isfinite(cfg.c)) fail(ErrorCode::kInvalidArgument, "svm: C must be > 0");
  if (!(cfg.tolerance > 0.0)) fail(ErrorCode::kInvalidArgument, "svm: tolerance must be > 0");
  if (cfg.max_epochs < 1) fail(ErrorCode::kInvalidArgument, "svm: max_epochs must be >= 1");
}

SvmTrainResult train_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         const SvmConfig& cfg) {
  validate(cfg);
  check_inputs(x, y);
  return cfg.solver == SvmSolver::kDualSmo ? train_smo(x, y, cfg) : train_subgradient(x, y, cfg);
}

double primal_objective(const LinearModel& m, const std::vector<std::vector<double>>& x,
                        const std::vector<int>& y, double c) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    hinge += std::max(0.0, 1.0 - y[i] * decision_value(m, x[i]));
  return 0.5 * dot(m.w, m.w) + c * hinge;
}

double decision_value(const LinearModel& m, std::span<const double> x) {
  if (x.size() != m.w.size())
    fail(ErrorCode::kDimensionMismatch, "svm: feature length " + std::to_string(x.size()) +
                                            " does not match model dimension " + std::to_string(m.w.size()));
  return dot(m.w, x) + m.b;
}

int predict_svm(const LinearModel& m, std::span<const double> x) {
  return decision_value(m, x) >= 0.0 ? 1 : -1;
}

nlohmann::json to_json(const SvmConfig& cfg) {
  return {{"c", cfg.c},
          {"max_epochs", cfg.max_epochs},
          {"tolerance", cfg.tolerance},
          {"seed", cfg.seed},
          {"solver", cfg.solver == SvmSolver::kDualSmo ? "dual_smo" : "primal_subgradient"}};
}

SvmConfig svm_config_from_json(const nlohmann::json& j, SvmConfig cfg) {
  try {
    if (j.contains("c")) cfg.c = j.at("c").get<double>();
    if (j.contains("max_epochs")) cfg.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("tolerance")) cfg.tolerance = j.at("tolerance").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("solver")) {
      const auto s = j.at("solver").get<std::string>();
      if (s == "dual_smo") cfg.solver = SvmSolver::kDualSmo;
      else if (s == "primal_subgradient") cfg.solver = SvmSolver::kPrimalSubgradient;
      else fail(ErrorCode::kConfigInvalid, "svm.solver: unknown solver '" + s + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfigInvalid, std::string("svm config: ") + e.what());
  }
  return cfg;
}

nlohmann::json svm_to_json(const LinearModel& m, const SvmConfig& cfg) {
  return {{"format_version", kSvmFormatVersion},
          {"kind", "linear_svm"},
          {"dimension", m.w.size()},
          {"w", m.w},
          {"b", m.b},
          {"training_config", to_json(cfg)},
          {"feature_layout_id", kFeatureLayoutId}};
}

LinearModel svm_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format_version").get<int>() != kSvmFormatVersion)
      fail(ErrorCode::kBadModel, "svm model: unsupported format_version");
    if (j.at("kind").get<std::string>() != "linear_svm") fail(ErrorCode::kBadModel, "svm model: wrong kind");
    if (j.at("feature_layout_id").get<std::string>() != kFeatureLayoutId)
      fail(ErrorCode::kBadModel, "svm model: incompatible feature layout");
    LinearModel m;
    m.w = j.at("w").get<std::vector<double>>();
    m.b = j.at("b").get<double>();
    if (m.w.size() != j.at("dimension").get<std::size_t>())
      fail(ErrorCode::kBadModel, "svm model: dimension does not match weight count");
    for (double v : m.w)
      if (!std::isfinite(v)) fail(ErrorCode::kBadModel, "svm model: non-finite weight");
    if (!std::isfinite(m.b)) fail(ErrorCode::kBadModel, "svm model: non-finite bias");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kBadModel, std::string("svm model: ") + e.what());
  }
}

}  // namespace mrtumor
