#pragma once

#include "appnet/model.hpp"
#include "appnet/solver.hpp"

#include <iosfwd>
#include <vector>

namespace appnet {

// Scores for one app. `scores` spans every user; only `evaluated_users` are
// ranked. `evidence_users` are the users whose adoption bits fed the potentials.
struct PredictionSheet {
  AppId app = 0;
  Eigen::VectorXd scores;
  std::vector<UserId> evaluated_users;
  std::vector<UserId> evidence_users;
};

// Standard regime: every other user's true bit is evidence, every user is ranked.
PredictionSheet score_app(const ModelParams& params, const NetworkStack& stack,
                          const Eigen::VectorXd& x_a, double popularity, AppId app = 0);

// Future regime: only early adopters (x_g1) are evidence; they are not ranked.
PredictionSheet score_future(const ModelParams& params, const NetworkStack& stack,
                             const Eigen::VectorXd& x_g1, double visible_popularity,
                             AppId app = 0);

enum class Imputation { Zero, Mean };
Imputation parse_imputation(const std::string& text);
std::string to_string(Imputation mode);

// Susceptibility assigned to users the model never saw.
double imputed_susceptibility(const ModelParams& params, const std::vector<UserId>& observable,
                              Imputation mode);

// Missing-history regime: parameters fitted on `observable` users score the
// `unobservable` ones; only observable adopters are evidence.
PredictionSheet score_transfer(const ModelParams& params, const NetworkStack& stack,
                               const Eigen::VectorXd& x_a, const std::vector<UserId>& observable,
                               const std::vector<UserId>& unobservable, Imputation mode,
                               double visible_popularity, AppId app = 0);

// Regression baseline on the same evidence conventions. `evidence` holds the
// visible adoption bits; `activity` the apps-per-user feature per user.
PredictionSheet score_regression(const RegressionModel& model, const NetworkStack& stack,
                                 const Eigen::VectorXd& evidence, double popularity,
                                 const std::vector<double>& activity,
                                 std::vector<UserId> evaluated_users, AppId app = 0);

PredictionSheet random_sheet(int num_users, std::uint64_t seed,
                             std::vector<UserId> evaluated_users,
                             std::vector<UserId> evidence_users, AppId app = 0);

// CSV rows `app_id,user_id,score,evaluated`.
void write_sheets_csv(const std::vector<PredictionSheet>& sheets, std::ostream& out);

}  // namespace appnet
