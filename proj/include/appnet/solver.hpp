#pragma once

#include "appnet/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace appnet {

struct FitConfig {
  int max_iters = 10000;
  double grad_tol = 1e-6;  // projected-gradient infinity norm
  double obj_tol = 1e-9;   // relative objective change between accepted iterates
  // Non-positive means 1/M.
  double init_alpha = -1.0;
  double init_s = 0.1;
  bool allow_negative_alpha = false;
  bool fix_s_to_zero = false;
  // Freezes the whole alpha block, popularity weight included.
  bool fix_alpha_to_zero = false;
  // Per-coordinate step scaling by the inverse diagonal curvature.
  bool diagonal_scaling = true;
  // Draw the start uniformly in [0, 2*init] instead of using init exactly.
  bool random_init = false;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const FitConfig& cfg);

struct ConvergenceRecord {
  int iterations = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  bool converged = false;
  double grad_norm = 0.0;
  std::string stop_reason;
  // Objective after every accepted step, starting with the initial point.
  std::vector<double> objective_trace;
};

nlohmann::json to_json(const ConvergenceRecord& rec);

struct FitResult {
  ModelParams params;
  ConvergenceRecord record;
};

// Maximizes the training log-likelihood by scaled projected-gradient ascent
// with Armijo backtracking. `start` overrides the configured initial point.
FitResult fit_mle(const TrainingSet& data, const FitConfig& cfg,
                  const std::optional<ModelParams>& start = std::nullopt);
FitResult fit_mle(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                  const std::vector<AppId>& train_apps, const FitConfig& cfg);

// Starting point fit_mle uses for `cfg` (projected onto the feasible set).
ModelParams initial_params(const TrainingSet& data, const FitConfig& cfg);

// ---------------------------------------------------------------------------
// Non-negative linear regression baseline

struct NnlsResult {
  Eigen::VectorXd coef;
  double objective = 0.0;  // ||A x - b||^2
  int iterations = 0;
  bool converged = false;
};

// Minimizes x'Gx - 2 r'x + b'b over x >= 0, where G = A'A, r = A'b and
// `target_sq` = b'b. Projected gradient on column-scaled normal equations,
// finished by an exact solve on the detected free set.
NnlsResult nnls(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double target_sq,
                int max_iters = 20000, double tol = 1e-12);

// Coefficients on (p^1..p^M, C^a, apps per user, 1), all non-negative.
struct RegressionModel {
  Eigen::VectorXd alpha;
  double alpha_pop = 0.0;
  double activity = 0.0;
  double intercept = 0.0;

  // Linear prediction clipped to [0, 1].
  double score(const Eigen::RowVectorXd& network_potentials, double popularity,
               double apps_per_user) const;
};

nlohmann::json to_json(const RegressionModel& model);

struct RegressionFit {
  RegressionModel model;
  NnlsResult solve;
  // Apps-per-user counts over the training apps, used as the activity feature.
  std::vector<double> activity;
};

RegressionFit fit_regression(const TrainingSet& data);
RegressionFit fit_regression(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                             const std::vector<AppId>& train_apps);

// I.i.d. uniform(0,1) scores, deterministic in `seed`.
Eigen::VectorXd random_baseline(int num_users, std::uint64_t seed);

}  // namespace appnet
