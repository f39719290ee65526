#include "appnet/synthgen.hpp"

#include "appnet/error.hpp"
#include "appnet/seeds.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace appnet {

double SynthSpec::density(int network) const {
  return edge_density.size() == 1 ? edge_density.front() : edge_density.at(network);
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
  if (num_users < 2) fail("num_users must be >= 2");
  if (num_context_users < 1 || num_context_users >= num_users) {
    fail("num_context_users must be in [1, num_users)");
  }
  if (num_apps < 1) fail("num_apps must be >= 1");
  if (num_networks < 1) fail("num_networks must be >= 1");
  if (edge_density.size() != 1 && static_cast<int>(edge_density.size()) != num_networks) {
    fail("edge_density needs 1 or num_networks entries");
  }
  for (const double d : edge_density) {
    if (!(d > 0.0 && d <= 1.0)) fail("edge density must be in (0, 1]");
  }
  if (!(w_max > 0.0) || !std::isfinite(w_max)) fail("w_max must be positive");
  if (static_cast<int>(planted_alpha.size()) != num_networks) {
    fail("planted alpha needs num_networks entries");
  }
  for (const double a : planted_alpha) {
    if (!(a >= 0.0) || !std::isfinite(a)) fail("planted alpha must be non-negative");
  }
  if (!(planted_alpha_pop >= 0.0) || !std::isfinite(planted_alpha_pop)) {
    fail("planted alpha_pop must be non-negative");
  }
  if (!(s_rate > 0.0) || !std::isfinite(s_rate)) fail("s_rate must be positive");
  if (!(popularity_mean >= 0.0) || !std::isfinite(popularity_mean)) {
    fail("popularity_mean must be non-negative");
  }
}

nlohmann::json to_json(const SynthSpec& spec) {
  return {{"num_users", spec.num_users},
          {"num_context_users", spec.num_context_users},
          {"num_apps", spec.num_apps},
          {"num_networks", spec.num_networks},
          {"edge_density", spec.edge_density},
          {"weights", spec.weights == WeightDistribution::Unit ? "unit" : "uniform"},
          {"w_max", spec.w_max},
          {"alpha", spec.planted_alpha},
          {"alpha_pop", spec.planted_alpha_pop},
          {"s_rate", spec.s_rate},
          {"popularity_mean", spec.popularity_mean},
          {"seed", spec.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.num_users = j.value("num_users", s.num_users);
  s.num_context_users = j.value("num_context_users", s.num_context_users);
  s.num_apps = j.value("num_apps", s.num_apps);
  s.num_networks = j.value("num_networks", s.num_networks);
  s.edge_density = j.value("edge_density", s.edge_density);
  s.weights = j.value("weights", std::string("uniform")) == "unit" ? WeightDistribution::Unit
                                                                  : WeightDistribution::Uniform;
  s.w_max = j.value("w_max", s.w_max);
  s.planted_alpha = j.value("alpha", s.planted_alpha);
  s.planted_alpha_pop = j.value("alpha_pop", s.planted_alpha_pop);
  s.s_rate = j.value("s_rate", s.s_rate);
  s.popularity_mean = j.value("popularity_mean", s.popularity_mean);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

NetworkStack gen_networks(const SynthSpec& spec) {
  spec.validate();
  std::vector<CandidateNetwork> nets;
  for (int m = 0; m < spec.num_networks; ++m) {
    Rng rng(derive_seed(spec.seed, "network/" + std::to_string(m)));
    std::bernoulli_distribution edge(spec.density(m));
    std::uniform_real_distribution<double> weight(0.0, spec.w_max);
    std::vector<CandidateNetwork::Edge> edges;
    for (UserId a = 0; a < spec.num_users; ++a) {
      for (UserId b = a + 1; b < spec.num_users; ++b) {
        if (!edge(rng)) continue;
        double w = 1.0;
        if (spec.weights == WeightDistribution::Uniform) {
          do {
            w = weight(rng);
          } while (w == 0.0);
        }
        edges.push_back({a, b, w});
      }
    }
    const auto kind =
        spec.weights == WeightDistribution::Unit ? NetworkKind::Binary : NetworkKind::Weighted;
    nets.push_back(CandidateNetwork::from_edges(spec.num_users, edges,
                                                "net" + std::to_string(m), kind));
  }
  return NetworkStack(std::move(nets));
}

ModelParams planted_params(const SynthSpec& spec) {
  spec.validate();
  ModelParams p = ModelParams::zeros(spec.num_networks, spec.num_users);
  p.alpha = Eigen::Map<const Eigen::VectorXd>(spec.planted_alpha.data(), spec.num_networks);
  p.alpha_pop = spec.planted_alpha_pop;
  Rng rng(derive_seed(spec.seed, "susceptibility"));
  std::exponential_distribution<double> draw(spec.s_rate);
  for (int u = 0; u < spec.num_users; ++u) p.s[u] = draw(rng);
  return p;
}

TeacherData sample_adoptions_teacher(const NetworkStack& stack, const ModelParams& planted,
                                     const SynthSpec& spec) {
  spec.validate();
  planted.validate();
  if (stack.num_users() != spec.num_users || planted.num_users() != spec.num_users ||
      planted.num_networks() != stack.num_networks()) {
    throw Error(ErrorKind::DimensionMismatch, "teacher inputs disagree on dimensions");
  }
  TeacherData out;
  for (UserId u = 0; u < spec.num_users; ++u) {
    (u < spec.num_context_users ? out.context_users : out.target_users).push_back(u);
  }

  out.base_popularity.resize(spec.num_apps);
  {
    Rng rng(derive_seed(spec.seed, "popularity"));
    std::exponential_distribution<double> draw(
        spec.popularity_mean > 0.0 ? 1.0 / spec.popularity_mean : 1.0);
    for (auto& c : out.base_popularity) c = spec.popularity_mean > 0.0 ? draw(rng) : 0.0;
  }

  std::vector<Adoption> entries;
  for (AppId a = 0; a < spec.num_apps; ++a) {
    Rng rng(derive_seed(spec.seed, "app/" + std::to_string(a)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double exogenous = planted.alpha_pop * out.base_popularity[a];

    Eigen::VectorXd context_x = Eigen::VectorXd::Zero(spec.num_users);
    std::vector<UserId> context_adopters;
    for (const UserId u : out.context_users) {
      if (unit(rng) < -std::expm1(-(planted.s[u] + exogenous))) {
        context_x[u] = 1.0;
        context_adopters.push_back(u);
      }
    }
    const PotentialTable table = potential_table(stack, context_x, out.base_popularity[a]);
    const Eigen::VectorXd potential = composite_potential(planted, table);
    std::vector<UserId> target_adopters;
    for (const UserId u : out.target_users) {
      if (unit(rng) < -std::expm1(-(planted.s[u] + potential[u]))) target_adopters.push_back(u);
    }

    // Synthetic ranks: context adopters in random order, then target adopters.
    std::shuffle(context_adopters.begin(), context_adopters.end(), rng);
    std::shuffle(target_adopters.begin(), target_adopters.end(), rng);
    Timestamp t = 0;
    for (const UserId u : context_adopters) entries.push_back({u, a, ++t});
    for (const UserId u : target_adopters) entries.push_back({u, a, ++t});
  }
  out.adoptions = AdoptionMatrix(spec.num_users, spec.num_apps, std::move(entries));
  return out;
}

SynthBundle make_synth_bundle(const SynthSpec& spec) {
  SynthBundle b;
  b.spec = spec;
  b.stack = gen_networks(spec);
  b.planted = planted_params(spec);
  b.teacher = sample_adoptions_teacher(b.stack, b.planted, spec);
  return b;
}

TrainingSet teacher_training_set(const SynthBundle& bundle) {
  std::vector<AppId> apps(bundle.spec.num_apps);
  std::iota(apps.begin(), apps.end(), 0);
  ObservationMask mask;
  mask.evidence_users = bundle.teacher.context_users;
  mask.likelihood_users = bundle.teacher.target_users;
  return make_training_set(bundle.stack.with_popularity(bundle.teacher.base_popularity),
                           bundle.teacher.adoptions, apps, mask);
}

RecoveryError recovery_error(const ModelParams& planted, const ModelParams& recovered,
                             const std::vector<UserId>& users) {
  if (planted.num_networks() != recovered.num_networks() ||
      planted.num_users() != recovered.num_users()) {
    throw Error(ErrorKind::DimensionMismatch, "parameter dimensions differ");
  }
  const int M = planted.num_networks();
  Eigen::VectorXd a(M + 1);
  Eigen::VectorXd b(M + 1);
  a << planted.alpha, planted.alpha_pop;
  b << recovered.alpha, recovered.alpha_pop;

  RecoveryError err;
  const double na = a.norm();
  const double nb = b.norm();
  err.rel_l2_alpha = na > 0.0 ? (b - a).norm() / na : (nb > 0.0 ? INFINITY : 0.0);
  err.cosine_alpha = (na > 0.0 && nb > 0.0) ? a.dot(b) / (na * nb) : (na == nb ? 1.0 : 0.0);

  std::vector<UserId> scope = users;
  if (scope.empty()) {
    scope.resize(planted.num_users());
    std::iota(scope.begin(), scope.end(), 0);
  }
  double total = 0.0;
  for (const UserId u : scope) {
    const double d = recovered.s[u] - planted.s[u];
    total += d * d;
  }
  err.s_rmse = scope.empty() ? 0.0 : std::sqrt(total / static_cast<double>(scope.size()));
  return err;
}

}  // namespace appnet
