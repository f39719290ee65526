#include "appnet/predict.hpp"

#include "appnet/error.hpp"

#include <numeric>
#include <ostream>

namespace appnet {

namespace {

std::vector<UserId> support(const Eigen::VectorXd& x) {
  std::vector<UserId> out;
  for (Eigen::Index u = 0; u < x.size(); ++u) {
    if (x[u] != 0.0) out.push_back(static_cast<UserId>(u));
  }
  return out;
}

void check_dims(const ModelParams& params, const NetworkStack& stack, const Eigen::VectorXd& x) {
  if (params.num_users() != x.size() || params.num_networks() != stack.num_networks() ||
      (stack.num_networks() > 0 && stack.num_users() != x.size())) {
    throw Error(ErrorKind::DimensionMismatch, "parameters, networks, and adoption vector disagree");
  }
}

Eigen::VectorXd probabilities(const Eigen::VectorXd& s, const Eigen::VectorXd& potential) {
  Eigen::VectorXd out(s.size());
  for (Eigen::Index u = 0; u < s.size(); ++u) out[u] = adoption_probability(s[u], potential[u]);
  return out;
}

}  // namespace

PredictionSheet score_app(const ModelParams& params, const NetworkStack& stack,
                          const Eigen::VectorXd& x_a, double popularity, AppId app) {
  check_dims(params, stack, x_a);
  PredictionSheet sheet;
  sheet.app = app;
  const PotentialTable table = potential_table(stack, x_a, popularity);
  sheet.scores = probabilities(params.s, composite_potential(params, table));
  sheet.evaluated_users.resize(x_a.size());
  std::iota(sheet.evaluated_users.begin(), sheet.evaluated_users.end(), 0);
  sheet.evidence_users = support(x_a);
  return sheet;
}

PredictionSheet score_future(const ModelParams& params, const NetworkStack& stack,
                             const Eigen::VectorXd& x_g1, double visible_popularity, AppId app) {
  PredictionSheet sheet = score_app(params, stack, x_g1, visible_popularity, app);
  sheet.evaluated_users.clear();
  for (Eigen::Index u = 0; u < x_g1.size(); ++u) {
    if (x_g1[u] == 0.0) sheet.evaluated_users.push_back(static_cast<UserId>(u));
  }
  return sheet;
}

Imputation parse_imputation(const std::string& text) {
  if (text == "zero") return Imputation::Zero;
  if (text == "mean") return Imputation::Mean;
  throw Error(ErrorKind::InvalidArgument, "unknown imputation '" + text + "'");
}

std::string to_string(Imputation mode) { return mode == Imputation::Zero ? "zero" : "mean"; }

double imputed_susceptibility(const ModelParams& params, const std::vector<UserId>& observable,
                              Imputation mode) {
  if (mode == Imputation::Zero || observable.empty()) return 0.0;
  double total = 0.0;
  for (const UserId u : observable) total += params.s[u];
  return total / static_cast<double>(observable.size());
}

PredictionSheet score_transfer(const ModelParams& params, const NetworkStack& stack,
                               const Eigen::VectorXd& x_a, const std::vector<UserId>& observable,
                               const std::vector<UserId>& unobservable, Imputation mode,
                               double visible_popularity, AppId app) {
  check_dims(params, stack, x_a);
  Eigen::VectorXd evidence = Eigen::VectorXd::Zero(x_a.size());
  for (const UserId u : observable) evidence[u] = x_a[u];

  ModelParams imputed = params;
  const double s_hat = imputed_susceptibility(params, observable, mode);
  for (const UserId u : unobservable) imputed.s[u] = s_hat;

  PredictionSheet sheet = score_app(imputed, stack, evidence, visible_popularity, app);
  sheet.evaluated_users = unobservable;
  return sheet;
}

PredictionSheet score_regression(const RegressionModel& model, const NetworkStack& stack,
                                 const Eigen::VectorXd& evidence, double popularity,
                                 const std::vector<double>& activity,
                                 std::vector<UserId> evaluated_users, AppId app) {
  if (static_cast<Eigen::Index>(activity.size()) != evidence.size() ||
      model.alpha.size() != stack.num_networks()) {
    throw Error(ErrorKind::DimensionMismatch, "regression inputs disagree");
  }
  const PotentialTable table = potential_table(stack, evidence, popularity);
  PredictionSheet sheet;
  sheet.app = app;
  sheet.scores.resize(evidence.size());
  for (Eigen::Index u = 0; u < evidence.size(); ++u) {
    sheet.scores[u] = model.score(table.per_network.row(u), popularity, activity[u]);
  }
  sheet.evaluated_users = std::move(evaluated_users);
  sheet.evidence_users = support(evidence);
  return sheet;
}

PredictionSheet random_sheet(int num_users, std::uint64_t seed,
                             std::vector<UserId> evaluated_users,
                             std::vector<UserId> evidence_users, AppId app) {
  PredictionSheet sheet;
  sheet.app = app;
  sheet.scores = random_baseline(num_users, seed);
  sheet.evaluated_users = std::move(evaluated_users);
  sheet.evidence_users = std::move(evidence_users);
  return sheet;
}

void write_sheets_csv(const std::vector<PredictionSheet>& sheets, std::ostream& out) {
  out << "app_id,user_id,score,evaluated\n";
  const auto old_precision = out.precision(17);
  for (const auto& sheet : sheets) {
    std::vector<std::uint8_t> evaluated(sheet.scores.size(), 0);
    for (const UserId u : sheet.evaluated_users) evaluated[u] = 1;
    for (Eigen::Index u = 0; u < sheet.scores.size(); ++u) {
      out << sheet.app << ',' << u << ',' << sheet.scores[u] << ','
          << static_cast<int>(evaluated[u]) << '\n';
    }
  }
  out.precision(old_precision);
}

}  // namespace appnet
