#pragma once

// Composite-network adoption model: per-network potentials, the saturating
// adoption probability, and the training log-likelihood with its analytic
// gradient and diagonal curvature.

#include "appnet/netdata.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace appnet {

// Lower bound applied to the exponent z inside log(1 - exp(-z)).
inline constexpr double kClampEpsilon = 1e-12;

struct ModelParams {
  Eigen::VectorXd alpha;  // one weight per candidate network
  double alpha_pop = 0.0;
  Eigen::VectorXd s;  // per-user susceptibility
  bool constrained = true;

  static ModelParams zeros(int num_networks, int num_users, bool constrained = true);

  int num_networks() const { return static_cast<int>(alpha.size()); }
  int num_users() const { return static_cast<int>(s.size()); }
  // Throws NonFinite, or InvalidArgument when a constrained entry is negative.
  void validate() const;
};

nlohmann::json to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

// Packed parameter layout used by the solver: [s_0..s_{U-1}, alpha_0..alpha_{M-1}, alpha_pop].
struct ParamLayout {
  int num_users = 0;
  int num_networks = 0;

  int size() const { return num_users + num_networks + 1; }
  int alpha_offset() const { return num_users; }
  int pop_index() const { return num_users + num_networks; }

  Eigen::VectorXd pack(const ModelParams& p) const;
  ModelParams unpack(const Eigen::VectorXd& theta, bool constrained) const;
};

// out[i] = sum_j w_ij x_j. The diagonal of g is empty, so user i never
// contributes to its own potential.
Eigen::VectorXd per_network_potentials(const CandidateNetwork& g, const Eigen::VectorXd& x);

// Potentials of every user for one app: column m holds network m.
struct PotentialTable {
  Eigen::MatrixXd per_network;  // U x M
  double popularity = 0.0;      // C^a, broadcast to every user
};

PotentialTable potential_table(const NetworkStack& stack, const Eigen::VectorXd& x,
                               double popularity);

// p_a(u) = sum_m alpha_m p^m_a(u) + alpha_pop * C^a.
Eigen::VectorXd composite_potential(const ModelParams& params, const PotentialTable& table);

// 1 - exp(-(s + p)); a negative exponent gives 0.
double adoption_probability(double s, double p);

// log(1 - exp(-z)) for z > 0, accurate for both small and large z.
double log1mexp(double z);

// Precomputed likelihood inputs for a fixed set of training apps.
struct AppObservation {
  AppId app = 0;
  PotentialTable potentials;
  std::vector<std::uint8_t> adopted;  // x_u^a for every user
  std::vector<UserId> evidence_users;  // adopters whose bits fed the potentials
};

struct TrainingSet {
  int num_users = 0;
  int num_networks = 0;
  bool has_popularity = false;
  std::vector<AppObservation> apps;
  // Users whose adoption outcomes enter the likelihood.
  std::vector<UserId> users;
};

// Restricts which users' bits are visible. Users outside `evidence_users` are
// treated as non-adopters when computing potentials; users outside
// `likelihood_users` contribute no likelihood terms.
struct ObservationMask {
  std::optional<std::vector<UserId>> evidence_users;
  std::optional<std::vector<UserId>> likelihood_users;
};

TrainingSet make_training_set(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                              const std::vector<AppId>& train_apps,
                              const ObservationMask& mask = {});

double log_likelihood(const ModelParams& params, const TrainingSet& data);
double log_likelihood(const ModelParams& params, const NetworkStack& stack,
                      const AdoptionMatrix& adoptions, const std::vector<AppId>& train_apps);

struct LikelihoodGradient {
  Eigen::VectorXd s;
  Eigen::VectorXd alpha;
  double alpha_pop = 0.0;
};

LikelihoodGradient log_likelihood_gradient(const ModelParams& params, const TrainingSet& data);
LikelihoodGradient log_likelihood_gradient(const ModelParams& params,
                                           const NetworkStack& stack,
                                           const AdoptionMatrix& adoptions,
                                           const std::vector<AppId>& train_apps);

// Objective, packed gradient, and packed diagonal of the Hessian in one pass.
struct LikelihoodEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd curvature;  // diagonal second derivatives, all <= 0
};

LikelihoodEvaluation evaluate_likelihood(const ModelParams& params, const TrainingSet& data,
                                         bool with_derivatives = true);

}  // namespace appnet
