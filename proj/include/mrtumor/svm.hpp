#pragma once

// Linear soft-margin SVM:  min 1/2 |w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b)).
//
// Two solvers are provided. kDualSmo solves the dual with sequential minimal
// optimization (maximal violating pair) and reaches KKT tolerance; it is the
// default. kPrimalSubgradient is stochastic subgradient descent on the primal
// with step 1/(lambda t), lambda = 1/(C n), averaged over doubling windows of
// epochs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mrtumor {

enum class SvmSolver { kDualSmo, kPrimalSubgradient };

struct SvmConfig {
  double c = 1.0;
  int max_epochs = 2000;
  double tolerance = 1e-6;
  std::uint64_t seed = 0;
  SvmSolver solver = SvmSolver::kDualSmo;
};

void validate(const SvmConfig& cfg);

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;
};

struct SvmTrainResult {
  LinearModel model;
  SvmConfig config;
  bool converged = false;
  int iterations = 0;  // SMO pair updates, or epochs for the subgradient solver
  /// Primal objective at each recorded checkpoint.
  std::vector<double> objective_trace;
};

/// `x` rows must share one dimension; labels are +1 / -1.
/// Throws kSingleClass, kDimensionMismatch or kInvalidArgument. Failing to
/// meet the tolerance within max_epochs is reported via `converged`.
SvmTrainResult train_svm(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                         const SvmConfig& cfg);

double primal_objective(const LinearModel& m, const std::vector<std::vector<double>>& x,
                        const std::vector<int>& y, double c);

/// w.x + b. Throws kDimensionMismatch.
double decision_value(const LinearModel& m, std::span<const double> x);

/// sign(w.x + b) with sign(0) = +1.
int predict_svm(const LinearModel& m, std::span<const double> x);

nlohmann::json svm_to_json(const LinearModel& m, const SvmConfig& cfg);
/// Throws kBadModel on malformed or incompatible documents.
LinearModel svm_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SvmConfig& cfg);
SvmConfig svm_config_from_json(const nlohmann::json& j, SvmConfig defaults = {});

}  // namespace mrtumor
