#include "appnet/solver.hpp"

#include "appnet/error.hpp"
#include "appnet/seeds.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace appnet {

void FitConfig::validate() const {
  if (max_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 1");
  if (!(grad_tol > 0.0) || !(obj_tol > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "tolerances must be positive");
  }
  if (!(init_s >= 0.0) || !std::isfinite(init_s) || !std::isfinite(init_alpha)) {
    throw Error(ErrorKind::InvalidArgument, "initial values must be finite, init_s >= 0");
  }
}

nlohmann::json to_json(const FitConfig& cfg) {
  return {{"max_iters", cfg.max_iters},
          {"grad_tol", cfg.grad_tol},
          {"obj_tol", cfg.obj_tol},
          {"init_alpha", cfg.init_alpha},
          {"init_s", cfg.init_s},
          {"allow_negative_alpha", cfg.allow_negative_alpha},
          {"fix_s_to_zero", cfg.fix_s_to_zero},
          {"fix_alpha_to_zero", cfg.fix_alpha_to_zero},
          {"diagonal_scaling", cfg.diagonal_scaling},
          {"random_init", cfg.random_init},
          {"seed", cfg.seed}};
}

nlohmann::json to_json(const ConvergenceRecord& rec) {
  return {{"iterations", rec.iterations},
          {"initial_objective", rec.initial_objective},
          {"final_objective", rec.final_objective},
          {"converged", rec.converged},
          {"grad_norm", rec.grad_norm},
          {"stop_reason", rec.stop_reason}};
}

namespace {

// Which packed coordinates move, and which carry a lower bound of zero.
struct Constraints {
  std::vector<std::uint8_t> frozen;
  std::vector<std::uint8_t> bounded;

  void project(Eigen::VectorXd& theta) const {
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      if (frozen[i]) {
        theta[i] = 0.0;
      } else if (bounded[i] && theta[i] < 0.0) {
        theta[i] = 0.0;
      }
    }
  }

  // Gradient with outward components at active bounds removed.
  Eigen::VectorXd projected_gradient(const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& grad) const {
    Eigen::VectorXd pg = grad;
    for (Eigen::Index i = 0; i < pg.size(); ++i) {
      if (frozen[i] || (bounded[i] && theta[i] <= 0.0 && grad[i] < 0.0)) pg[i] = 0.0;
    }
    return pg;
  }
};

Constraints make_constraints(const TrainingSet& data, const FitConfig& cfg) {
  const ParamLayout layout{data.num_users, data.num_networks};
  Constraints c;
  c.frozen.assign(layout.size(), 0);
  c.bounded.assign(layout.size(), 1);
  for (int u = 0; u < layout.num_users; ++u) c.frozen[u] = cfg.fix_s_to_zero ? 1 : 0;
  for (int i = layout.alpha_offset(); i <= layout.pop_index(); ++i) {
    c.frozen[i] = cfg.fix_alpha_to_zero ? 1 : 0;
    c.bounded[i] = cfg.allow_negative_alpha ? 0 : 1;
  }
  if (!data.has_popularity) c.frozen[layout.pop_index()] = 1;
  // A weight whose feature is zero on every observation does not affect the
  // objective; pin it at zero.
  std::vector<std::uint8_t> seen(layout.num_networks + 1, 0);
  for (const auto& obs : data.apps) {
    if (obs.potentials.popularity != 0.0) seen[layout.num_networks] = 1;
    for (int m = 0; m < layout.num_networks; ++m) {
      for (const UserId u : data.users) {
        if (obs.potentials.per_network(u, m) != 0.0) {
          seen[m] = 1;
          break;
        }
      }
    }
  }
  for (int i = 0; i <= layout.num_networks; ++i) {
    if (!seen[i]) c.frozen[layout.alpha_offset() + i] = 1;
  }
  return c;
}

// Parameters far beyond this magnitude only arise on unbounded objectives.
constexpr double kDivergenceBound = 1e12;
constexpr int kMaxBacktracks = 60;
constexpr double kArmijo = 1e-4;

}  // namespace

ModelParams initial_params(const TrainingSet& data, const FitConfig& cfg) {
  cfg.validate();
  const ParamLayout layout{data.num_users, data.num_networks};
  const double alpha0 =
      cfg.init_alpha > 0.0 ? cfg.init_alpha
                           : 1.0 / static_cast<double>(std::max(1, data.num_networks));
  Eigen::VectorXd theta(layout.size());
  theta.head(layout.num_users).setConstant(cfg.init_s);
  theta.tail(layout.num_networks + 1).setConstant(alpha0);
  if (cfg.random_init) {
    Rng rng(derive_seed(cfg.seed, "fit/init"));
    std::uniform_real_distribution<double> unit(0.0, 2.0);
    for (int u = 0; u < layout.num_users; ++u) theta[u] = cfg.init_s * unit(rng);
    for (int i = layout.alpha_offset(); i <= layout.pop_index(); ++i) {
      theta[i] = alpha0 * unit(rng);
    }
  }
  make_constraints(data, cfg).project(theta);
  return layout.unpack(theta, !cfg.allow_negative_alpha);
}

FitResult fit_mle(const TrainingSet& data, const FitConfig& cfg,
                  const std::optional<ModelParams>& start) {
  cfg.validate();
  if (data.apps.empty()) throw Error(ErrorKind::InvalidArgument, "train_apps is empty");
  const ParamLayout layout{data.num_users, data.num_networks};
  const Constraints constraints = make_constraints(data, cfg);
  const bool constrained = !cfg.allow_negative_alpha;

  Eigen::VectorXd theta = layout.pack(start ? *start : initial_params(data, cfg));
  if (theta.size() != layout.size()) {
    throw Error(ErrorKind::DimensionMismatch, "start point does not match the training set");
  }
  constraints.project(theta);

  auto evaluate = [&](const Eigen::VectorXd& t, bool derivatives) {
    return evaluate_likelihood(layout.unpack(t, constrained), data, derivatives);
  };

  LikelihoodEvaluation current = evaluate(theta, true);
  FitResult result;
  ConvergenceRecord& rec = result.record;
  rec.initial_objective = current.value;
  rec.objective_trace.push_back(current.value);

  for (int iter = 0;; ++iter) {
    const Eigen::VectorXd pg = constraints.projected_gradient(theta, current.gradient);
    rec.grad_norm = pg.size() ? pg.cwiseAbs().maxCoeff() : 0.0;
    rec.iterations = iter;
    if (rec.grad_norm < cfg.grad_tol) {
      rec.converged = true;
      rec.stop_reason = "gradient_tolerance";
      break;
    }
    if (iter >= cfg.max_iters) {
      rec.stop_reason = "max_iters";
      break;
    }

    Eigen::VectorXd direction = current.gradient;
    if (cfg.diagonal_scaling) {
      const double peak = current.curvature.cwiseAbs().maxCoeff();
      const double floor = 1e-8 * std::max(1.0, peak);
      for (Eigen::Index i = 0; i < direction.size(); ++i) {
        direction[i] /= std::max(-current.curvature[i], floor);
      }
    }
    for (Eigen::Index i = 0; i < direction.size(); ++i) {
      if (constraints.frozen[i]) direction[i] = 0.0;
    }

    bool accepted = false;
    double step = 1.0;
    Eigen::VectorXd candidate;
    for (int k = 0; k < kMaxBacktracks; ++k, step *= 0.5) {
      candidate = theta + step * direction;
      constraints.project(candidate);
      const double predicted = current.gradient.dot(candidate - theta);
      if (predicted <= 0.0) break;  // no ascent left along the projection arc
      double value = -std::numeric_limits<double>::infinity();
      try {
        value = evaluate(candidate, false).value;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFinite) throw;
      }
      if (value >= current.value + kArmijo * predicted) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rec.stop_reason = "line_search_failed";
      break;
    }

    const double previous = current.value;
    theta = std::move(candidate);
    current = evaluate(theta, true);
    if (!std::isfinite(current.value)) {
      throw Error(ErrorKind::NonFinite, "objective became non-finite at iteration " +
                                            std::to_string(iter + 1));
    }
    rec.objective_trace.push_back(current.value);
    if (theta.cwiseAbs().maxCoeff() > kDivergenceBound) {
      rec.iterations = iter + 1;
      rec.stop_reason = "unbounded";
      break;
    }
    if (std::abs(current.value - previous) <= cfg.obj_tol * std::max(1.0, std::abs(previous))) {
      rec.iterations = iter + 1;
      rec.grad_norm =
          constraints.projected_gradient(theta, current.gradient).cwiseAbs().maxCoeff();
      rec.converged = true;
      rec.stop_reason = "objective_tolerance";
      break;
    }
  }

  rec.final_objective = current.value;
  result.params = layout.unpack(theta, constrained);
  return result;
}

FitResult fit_mle(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                  const std::vector<AppId>& train_apps, const FitConfig& cfg) {
  if (train_apps.empty()) throw Error(ErrorKind::InvalidArgument, "train_apps is empty");
  return fit_mle(make_training_set(stack, adoptions, train_apps), cfg);
}

// ---------------------------------------------------------------------------
// NNLS

NnlsResult nnls(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs, double target_sq,
                int max_iters, double tol) {
  const Eigen::Index n = rhs.size();
  if (gram.rows() != n || gram.cols() != n) {
    throw Error(ErrorKind::DimensionMismatch, "gram matrix does not match rhs");
  }
  // Column scaling keeps the constraint set and evens out curvature.
  Eigen::VectorXd scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    scale[i] = gram(i, i) > 0.0 ? 1.0 / std::sqrt(gram(i, i)) : 0.0;
  }
  const Eigen::MatrixXd G = scale.asDiagonal() * gram * scale.asDiagonal();
  const Eigen::VectorXd r = scale.cwiseProduct(rhs);

  NnlsResult out;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n);
  if (n == 0) {
    out.objective = target_sq;
    out.converged = true;
    return out;
  }
  const double lipschitz =
      std::max(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G, Eigen::EigenvaluesOnly)
                   .eigenvalues()
                   .maxCoeff(),
               std::numeric_limits<double>::min());
  const double step = 1.0 / lipschitz;

  auto kkt_violation = [&](const Eigen::VectorXd& v) {
    const Eigen::VectorXd grad = G * v - r;  // half-gradient of the scaled objective
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (scale[i] == 0.0) continue;
      worst = std::max(worst, v[i] > 0.0 ? std::abs(grad[i]) : std::max(0.0, -grad[i]));
    }
    return worst;
  };
  const double threshold = tol * std::max(1.0, r.cwiseAbs().maxCoeff());

  // Exact solve on the support of v; returns true when it is KKT-optimal.
  auto polish = [&](Eigen::VectorXd& v) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (v[i] > 0.0) free.push_back(i);
    }
    if (free.empty()) return kkt_violation(v) <= threshold;
    const auto k = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd Gf(k, k);
    Eigen::VectorXd rf(k);
    for (Eigen::Index a = 0; a < k; ++a) {
      rf[a] = r[free[a]];
      for (Eigen::Index b = 0; b < k; ++b) Gf(a, b) = G(free[a], free[b]);
    }
    const Eigen::VectorXd sol = Gf.completeOrthogonalDecomposition().solve(rf);
    if ((sol.array() <= 0.0).any() || !sol.allFinite()) return false;
    Eigen::VectorXd trial = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < k; ++a) trial[free[a]] = sol[a];
    if (kkt_violation(trial) > threshold) return false;
    v = trial;
    return true;
  };

  int iter = 0;
  const int check_every = 50;
  for (; iter < max_iters; ++iter) {
    y = (y - step * (G * y - r)).cwiseMax(0.0);
    if ((iter + 1) % check_every == 0) {
      if (kkt_violation(y) <= threshold) {
        out.converged = true;
        break;
      }
      Eigen::VectorXd trial = y;
      if (polish(trial)) {
        y = trial;
        out.converged = true;
        break;
      }
    }
  }
  if (!out.converged) {
    Eigen::VectorXd trial = y;
    out.converged = polish(trial);
    if (out.converged) y = trial;
  } else {
    polish(y);
  }
  out.iterations = iter;
  out.coef = scale.cwiseProduct(y);
  out.objective = std::max(0.0, out.coef.dot(gram * out.coef) - 2.0 * rhs.dot(out.coef) + target_sq);
  return out;
}

double RegressionModel::score(const Eigen::RowVectorXd& network_potentials, double popularity,
                              double apps_per_user) const {
  const double value = network_potentials.dot(alpha.transpose()) + alpha_pop * popularity +
                       activity * apps_per_user + intercept;
  return std::clamp(value, 0.0, 1.0);
}

nlohmann::json to_json(const RegressionModel& model) {
  return {{"alpha", std::vector<double>(model.alpha.data(), model.alpha.data() + model.alpha.size())},
          {"alpha_pop", model.alpha_pop},
          {"activity", model.activity},
          {"intercept", model.intercept}};
}

RegressionFit fit_regression(const TrainingSet& data) {
  if (data.apps.empty()) throw Error(ErrorKind::InvalidArgument, "train_apps is empty");
  const int M = data.num_networks;
  const int F = M + 3;  // networks, popularity, activity, intercept

  RegressionFit fit;
  fit.activity.assign(data.num_users, 0.0);
  for (const auto& obs : data.apps) {
    for (const UserId u : data.users) fit.activity[u] += obs.adopted[u];
  }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(F, F);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(F);
  double target_sq = 0.0;
  Eigen::VectorXd row(F);
  for (const auto& obs : data.apps) {
    const double C = data.has_popularity ? obs.potentials.popularity : 0.0;
    for (const UserId u : data.users) {
      const double x = obs.adopted[u];
      row.head(M) = obs.potentials.per_network.row(u).transpose();
      row[M] = C;
      // Activity excludes the row's own outcome.
      row[M + 1] = fit.activity[u] - x;
      row[M + 2] = 1.0;
      gram.noalias() += row * row.transpose();
      rhs += x * row;
      target_sq += x * x;
    }
  }
  fit.solve = nnls(gram, rhs, target_sq);
  const Eigen::VectorXd& c = fit.solve.coef;
  fit.model.alpha = c.head(M);
  fit.model.alpha_pop = c[M];
  fit.model.activity = c[M + 1];
  fit.model.intercept = c[M + 2];
  return fit;
}

RegressionFit fit_regression(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                             const std::vector<AppId>& train_apps) {
  if (train_apps.empty()) throw Error(ErrorKind::InvalidArgument, "train_apps is empty");
  return fit_regression(make_training_set(stack, adoptions, train_apps));
}

Eigen::VectorXd random_baseline(int num_users, std::uint64_t seed) {
  if (num_users < 0) throw Error(ErrorKind::InvalidArgument, "num_users must be >= 0");
  Rng rng(derive_seed(seed, "random_baseline"));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd scores(num_users);
  for (int u = 0; u < num_users; ++u) {
    double v = 0.0;
    while (v == 0.0) v = unit(rng);
    scores[u] = v;
  }
  return scores;
}

}  // namespace appnet
