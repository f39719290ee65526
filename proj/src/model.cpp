#include "appnet/model.hpp"

#include "appnet/error.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace appnet {

ModelParams ModelParams::zeros(int num_networks, int num_users, bool constrained) {
  ModelParams p;
  p.alpha = Eigen::VectorXd::Zero(num_networks);
  p.s = Eigen::VectorXd::Zero(num_users);
  p.constrained = constrained;
  return p;
}

void ModelParams::validate() const {
  if (!alpha.allFinite() || !s.allFinite() || !std::isfinite(alpha_pop)) {
    throw Error(ErrorKind::NonFinite, "model parameters contain a non-finite entry");
  }
  if (constrained) {
    if ((alpha.array() < 0.0).any() || alpha_pop < 0.0 || (s.array() < 0.0).any()) {
      throw Error(ErrorKind::InvalidArgument, "constrained parameters must be non-negative");
    }
  }
}

namespace {
std::vector<double> to_vector(const Eigen::VectorXd& v) {
  return {v.data(), v.data() + v.size()};
}
Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

nlohmann::json to_json(const ModelParams& params) {
  return {{"alpha", to_vector(params.alpha)},
          {"alpha_pop", params.alpha_pop},
          {"s", to_vector(params.s)},
          {"constrained", params.constrained}};
}

ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  try {
    p.alpha = from_vector(j.at("alpha").get<std::vector<double>>());
    p.alpha_pop = j.at("alpha_pop").get<double>();
    p.s = from_vector(j.at("s").get<std::vector<double>>());
    p.constrained = j.value("constrained", true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("bad parameter JSON: ") + e.what());
  }
  p.validate();
  return p;
}

Eigen::VectorXd ParamLayout::pack(const ModelParams& p) const {
  Eigen::VectorXd theta(size());
  theta.head(num_users) = p.s;
  theta.segment(alpha_offset(), num_networks) = p.alpha;
  theta[pop_index()] = p.alpha_pop;
  return theta;
}

ModelParams ParamLayout::unpack(const Eigen::VectorXd& theta, bool constrained) const {
  ModelParams p;
  p.s = theta.head(num_users);
  p.alpha = theta.segment(alpha_offset(), num_networks);
  p.alpha_pop = theta[pop_index()];
  p.constrained = constrained;
  return p;
}

Eigen::VectorXd per_network_potentials(const CandidateNetwork& g, const Eigen::VectorXd& x) {
  if (x.size() != g.num_users()) {
    throw Error(ErrorKind::DimensionMismatch,
                "adoption vector has " + std::to_string(x.size()) + " entries, network '" +
                    g.name() + "' has " + std::to_string(g.num_users()) + " users");
  }
  // Stored entries are strictly positive, so the product runs over N(i) only.
  return g.weights() * x;
}

PotentialTable potential_table(const NetworkStack& stack, const Eigen::VectorXd& x,
                               double popularity) {
  PotentialTable t;
  t.per_network.resize(x.size(), stack.num_networks());
  for (int m = 0; m < stack.num_networks(); ++m) {
    t.per_network.col(m) = per_network_potentials(stack.networks[m], x);
  }
  t.popularity = popularity;
  return t;
}

Eigen::VectorXd composite_potential(const ModelParams& params, const PotentialTable& table) {
  if (params.alpha.size() != table.per_network.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "alpha length differs from network count");
  }
  Eigen::VectorXd p = table.per_network * params.alpha;
  p.array() += params.alpha_pop * table.popularity;
  return p;
}

double log1mexp(double z) {
  // log(1 - e^{-z}): log(-expm1(-z)) near 0, log1p(-e^{-z}) for larger z.
  constexpr double kLn2 = 0.6931471805599453;
  return z <= kLn2 ? std::log(-std::expm1(-z)) : std::log1p(-std::exp(-z));
}

double adoption_probability(double s, double p) {
  return -std::expm1(-std::max(s + p, 0.0));
}

TrainingSet make_training_set(const NetworkStack& stack, const AdoptionMatrix& adoptions,
                              const std::vector<AppId>& train_apps, const ObservationMask& mask) {
  stack.validate();
  const int num_users = adoptions.num_users();
  if (stack.num_networks() > 0 && stack.num_users() != num_users) {
    throw Error(ErrorKind::DimensionMismatch, "networks and adoptions disagree on user count");
  }
  if (stack.popularity && static_cast<int>(stack.popularity->size()) != adoptions.num_apps()) {
    throw Error(ErrorKind::DimensionMismatch, "popularity length differs from num_apps");
  }

  auto to_mask = [&](const std::optional<std::vector<UserId>>& users) {
    std::vector<std::uint8_t> m(num_users, users ? 0 : 1);
    if (users) {
      for (const UserId u : *users) {
        if (u < 0 || u >= num_users) throw Error(ErrorKind::IdOutOfRange, "masked user id");
        m[u] = 1;
      }
    }
    return m;
  };
  const auto evidence = to_mask(mask.evidence_users);
  const auto likelihood = to_mask(mask.likelihood_users);

  TrainingSet data;
  data.num_users = num_users;
  data.num_networks = stack.num_networks();
  data.has_popularity = stack.has_popularity();
  for (UserId u = 0; u < num_users; ++u) {
    if (likelihood[u]) data.users.push_back(u);
  }
  data.apps.reserve(train_apps.size());
  for (const AppId a : train_apps) {
    if (a < 0 || a >= adoptions.num_apps()) {
      throw Error(ErrorKind::IdOutOfRange, "train app " + std::to_string(a));
    }
    AppObservation obs;
    obs.app = a;
    obs.adopted.assign(num_users, 0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(num_users);
    for (const UserId u : adoptions.adopters(a)) {
      if (likelihood[u]) obs.adopted[u] = 1;
      if (evidence[u]) {
        x[u] = 1.0;
        obs.evidence_users.push_back(u);
      }
    }
    obs.potentials = potential_table(stack, x, stack.popularity_of(a));
    data.apps.push_back(std::move(obs));
  }
  return data;
}

LikelihoodEvaluation evaluate_likelihood(const ModelParams& params, const TrainingSet& data,
                                         bool with_derivatives) {
  params.validate();
  if (params.num_users() != data.num_users || params.num_networks() != data.num_networks) {
    throw Error(ErrorKind::DimensionMismatch, "parameters do not match the training set");
  }
  const ParamLayout layout{data.num_users, data.num_networks};
  LikelihoodEvaluation out;
  if (with_derivatives) {
    out.gradient = Eigen::VectorXd::Zero(layout.size());
    out.curvature = Eigen::VectorXd::Zero(layout.size());
  }
  const int M = data.num_networks;
  const int pop = layout.pop_index();

  for (const auto& obs : data.apps) {
    const Eigen::MatrixXd& P = obs.potentials.per_network;
    const double C = data.has_popularity ? obs.potentials.popularity : 0.0;
    const Eigen::VectorXd network = P * params.alpha;
    double app_value = 0.0;
    for (const UserId u : data.users) {
      const double z = params.s[u] + network[u] + params.alpha_pop * C;
      if (obs.adopted[u]) {
        const double zc = std::max(z, kClampEpsilon);
        app_value += log1mexp(zc);
        if (!with_derivatives) continue;
        // d/dz log(1 - e^{-z}) = 1 / (e^z - 1); second derivative below.
        const double ratio = 1.0 / std::expm1(zc);
        const double denom = std::expm1(zc) * -std::expm1(-zc);
        const double curv = std::isfinite(denom) ? -1.0 / denom : 0.0;
        out.gradient[u] += ratio;
        out.curvature[u] += curv;
        for (int m = 0; m < M; ++m) {
          const double pm = P(u, m);
          if (pm == 0.0) continue;
          out.gradient[layout.alpha_offset() + m] += ratio * pm;
          out.curvature[layout.alpha_offset() + m] += curv * pm * pm;
        }
        out.gradient[pop] += ratio * C;
        out.curvature[pop] += curv * C * C;
      } else {
        app_value -= z;
        if (!with_derivatives) continue;
        out.gradient[u] -= 1.0;
        for (int m = 0; m < M; ++m) out.gradient[layout.alpha_offset() + m] -= P(u, m);
        out.gradient[pop] -= C;
      }
    }
    out.value += app_value;
  }
  if (!std::isfinite(out.value)) {
    throw Error(ErrorKind::NonFinite, "log-likelihood evaluated to a non-finite value");
  }
  return out;
}

double log_likelihood(const ModelParams& params, const TrainingSet& data) {
  return evaluate_likelihood(params, data, false).value;
}

double log_likelihood(const ModelParams& params, const NetworkStack& stack,
                      const AdoptionMatrix& adoptions, const std::vector<AppId>& train_apps) {
  if (train_apps.empty()) throw Error(ErrorKind::InvalidArgument, "train_apps is empty");
  return log_likelihood(params, make_training_set(stack, adoptions, train_apps));
}

LikelihoodGradient log_likelihood_gradient(const ModelParams& params, const TrainingSet& data) {
  const auto eval = evaluate_likelihood(params, data, true);
  const ParamLayout layout{data.num_users, data.num_networks};
  LikelihoodGradient g;
  g.s = eval.gradient.head(layout.num_users);
  g.alpha = eval.gradient.segment(layout.alpha_offset(), layout.num_networks);
  g.alpha_pop = eval.gradient[layout.pop_index()];
  return g;
}

LikelihoodGradient log_likelihood_gradient(const ModelParams& params,
                                           const NetworkStack& stack,
                                           const AdoptionMatrix& adoptions,
                                           const std::vector<AppId>& train_apps) {
  return log_likelihood_gradient(params, make_training_set(stack, adoptions, train_apps));
}

}  // namespace appnet
