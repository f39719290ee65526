#include "support.hpp"

#include "appnet/error.hpp"
#include "appnet/solver.hpp"
#include "appnet/synthgen.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

using namespace appnet;

namespace {

SynthSpec small_spec(int users, int context, int apps, std::uint64_t seed) {
  SynthSpec spec;
  spec.num_users = users;
  spec.num_context_users = context;
  spec.num_apps = apps;
  spec.seed = seed;
  return spec;
}

// Largest gap between the empirical CDF of integer counts and the geometric
// law with the same mean (the discrete exponential), checked at every support
// point.
double ks_geometric(const std::vector<int>& counts) {
  const double n = static_cast<double>(counts.size());
  double mean = 0.0;
  for (const int c : counts) mean += c;
  mean /= n;
  const double q = mean / (1.0 + mean);  // P(N > k) = q^(k+1)
  const int top = *std::max_element(counts.begin(), counts.end());
  double d = 0.0;
  for (int k = 0; k <= top; ++k) {
    const double below = static_cast<double>(std::count_if(
                             counts.begin(), counts.end(), [&](int c) { return c <= k; })) /
                         n;
    d = std::max(d, std::abs(below - (1.0 - std::pow(q, k + 1))));
  }
  return d;
}

}  // namespace

TEST_CASE("density one with unit weights is the complete graph") {
  auto spec = small_spec(12, 6, 5, 1);
  spec.edge_density = {1.0};
  spec.weights = WeightDistribution::Unit;
  const auto stack = gen_networks(spec);
  REQUIRE(stack.num_networks() == 4);
  for (const auto& g : stack.networks) {
    CHECK(g.num_edges() == 12 * 11 / 2);
    CHECK(g.max_weight() == 1.0);
    CHECK(g.total_weight() == 12 * 11 / 2);
  }
}

TEST_CASE("tiny density still yields a valid network") {
  auto spec = small_spec(10, 5, 5, 1);
  spec.edge_density = {1e-9};
  const auto stack = gen_networks(spec);
  CHECK(stack.networks[0].num_edges() == 0);
  CHECK_NOTHROW(stack.validate());
}

TEST_CASE("edge counts follow the binomial law") {
  const int U = 100;
  const double p = 0.1, pairs = U * (U - 1) / 2.0;
  const double sigma = std::sqrt(pairs * p * (1 - p));
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto spec = small_spec(U, 50, 5, seed);
    spec.edge_density = {p};
    for (const auto& g : gen_networks(spec).networks) {
      CHECK(std::abs(static_cast<double>(g.num_edges()) - p * pairs) <= 4 * sigma);
      CHECK(g.max_weight() <= spec.w_max);
    }
  }
}

TEST_CASE("generators are deterministic in the seed") {
  const auto a = make_synth_bundle(small_spec(40, 20, 30, 5));
  const auto b = make_synth_bundle(small_spec(40, 20, 30, 5));
  const auto c = make_synth_bundle(small_spec(40, 20, 30, 6));
  CHECK(a.teacher.adoptions.entries() == b.teacher.adoptions.entries());
  CHECK(a.planted.s == b.planted.s);
  CHECK(a.teacher.base_popularity == b.teacher.base_popularity);
  for (int m = 0; m < 4; ++m) {
    CHECK(a.stack.networks[m].weights().isApprox(b.stack.networks[m].weights()));
  }
  CHECK(a.teacher.adoptions.entries() != c.teacher.adoptions.entries());
}

TEST_CASE("zero parameters produce no adoptions") {
  const auto spec = small_spec(30, 15, 40, 2);
  const auto stack = gen_networks(spec);
  const auto teacher = sample_adoptions_teacher(stack, ModelParams::zeros(4, 30), spec);
  CHECK(teacher.adoptions.num_entries() == 0);
}

TEST_CASE("teacher frequencies match the model probability") {
  // Many apps on one fixed graph; compare each target user's adoption count
  // with the sum of its per-app model probabilities.
  auto spec = small_spec(40, 20, 2000, 3);
  spec.edge_density = {0.15};
  spec.planted_alpha = {0.6, 0.3, 0.1, 0.0};
  spec.planted_alpha_pop = 0.02;
  spec.s_rate = 10.0;
  const auto bundle = make_synth_bundle(spec);
  const auto& t = bundle.teacher;
  std::vector<double> expected(spec.num_users, 0.0), variance(spec.num_users, 0.0),
      observed(spec.num_users, 0.0);
  for (AppId a = 0; a < spec.num_apps; ++a) {
    Eigen::VectorXd context = Eigen::VectorXd::Zero(spec.num_users);
    for (const UserId u : t.adoptions.adopters(a)) {
      if (u < spec.num_context_users) context[u] = 1.0;
    }
    for (const UserId u : t.target_users) {
      double z = bundle.planted.s[u] + spec.planted_alpha_pop * t.base_popularity[a];
      for (int m = 0; m < 4; ++m) {
        const Eigen::MatrixXd w(bundle.stack.networks[m].weights());
        z += spec.planted_alpha[m] * testing::naive_potentials(w, context)[u];
      }
      const double p = 1.0 - std::exp(-z);
      expected[u] += p;
      variance[u] += p * (1 - p);
      observed[u] += t.adoptions.adopted(u, a) ? 1.0 : 0.0;
    }
  }
  for (const UserId u : t.target_users) {
    CAPTURE(u);
    CHECK(std::abs(observed[u] - expected[u]) <= 4 * std::sqrt(variance[u]));
  }
}

TEST_CASE("a dominant network weight saturates covered target users") {
  auto spec = small_spec(60, 30, 100, 4);
  spec.edge_density = {0.1};
  spec.weights = WeightDistribution::Unit;
  spec.planted_alpha = {60.0, 0.0, 0.0, 0.0};
  spec.planted_alpha_pop = 0.05;
  const auto bundle = make_synth_bundle(spec);
  const auto& g = bundle.stack.networks[0];
  int covered = 0, covered_adopted = 0, target_adopted = 0;
  for (AppId a = 0; a < spec.num_apps; ++a) {
    for (const UserId u : bundle.teacher.target_users) {
      bool has = false;
      for (const UserId v : bundle.teacher.adoptions.adopters(a)) {
        if (v < spec.num_context_users && g.weight(u, v) > 0.0) has = true;
      }
      const bool adopted = bundle.teacher.adoptions.adopted(u, a);
      covered += has;
      covered_adopted += has && adopted;
      target_adopted += adopted;
    }
  }
  REQUIRE(covered > 100);
  CHECK(covered_adopted == covered);
  CHECK(target_adopted >= covered);
}

TEST_CASE("context adopters precede target adopters") {
  const auto bundle = make_synth_bundle(small_spec(50, 25, 60, 8));
  const auto& x = bundle.teacher.adoptions;
  CHECK(x.has_timestamps());
  for (AppId a = 0; a < 60; ++a) {
    double last_context = -1.0, first_target = 1e300;
    for (const UserId u : x.adopters(a)) {
      const double t = static_cast<double>(*x.timestamp(u, a));
      if (u < 25) {
        last_context = std::max(last_context, t);
      } else {
        first_target = std::min(first_target, t);
      }
    }
    CHECK(last_context < first_target);
  }
}

TEST_CASE("apps per user are roughly exponential") {
  auto spec = small_spec(500, 250, 400, 12);
  spec.planted_alpha = {0.001, 0.0, 0.0, 0.0};
  spec.planted_alpha_pop = 0.0;
  const auto bundle = make_synth_bundle(spec);
  const auto all = bundle.teacher.adoptions.apps_per_user();
  std::vector<int> counts;
  for (const UserId u : bundle.teacher.target_users) counts.push_back(all[u]);
  // 1% critical value with an estimated parameter (Lilliefors, exponential case).
  const double critical = 1.308 / std::sqrt(static_cast<double>(counts.size()));
  CHECK(ks_geometric(counts) < critical);
}

TEST_CASE("recovery error geometry") {
  const auto p = planted_params(small_spec(20, 10, 5, 1));
  const auto same = recovery_error(p, p);
  CHECK(same.rel_l2_alpha == 0.0);
  CHECK(same.cosine_alpha == doctest::Approx(1.0));
  CHECK(same.s_rmse == 0.0);

  ModelParams doubled = p;
  doubled.alpha *= 2.0;
  doubled.alpha_pop *= 2.0;
  const auto err = recovery_error(p, doubled);
  CHECK(err.cosine_alpha == doctest::Approx(1.0));
  CHECK(err.rel_l2_alpha == doctest::Approx(1.0));
  CHECK_THROWS_AS(recovery_error(p, ModelParams::zeros(3, 20)), Error);
}

TEST_CASE("recovery improves with more apps") {
  std::vector<double> errors;
  for (const int apps : {100, 200, 400, 800}) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto spec = small_spec(400, 200, apps, seed);
      const auto bundle = make_synth_bundle(spec);
      const auto fit = fit_mle(teacher_training_set(bundle), FitConfig{});
      total += recovery_error(bundle.planted, fit.params, bundle.teacher.target_users)
                   .rel_l2_alpha;
    }
    errors.push_back(total / 3);
  }
  MESSAGE("mean rel_l2 by A: " << errors[0] << " " << errors[1] << " " << errors[2] << " "
                               << errors[3]);
  CHECK(errors[3] < errors[0]);
  CHECK(errors[3] <= errors[1]);
  CHECK(errors[2] < errors[0]);
}

TEST_CASE("spec validation and JSON") {
  auto spec = small_spec(20, 10, 5, 1);
  spec.edge_density = {1.2};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.edge_density = {0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = small_spec(20, 20, 5, 1);
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = small_spec(20, 10, 5, 1);
  spec.planted_alpha = {0.1, -0.1, 0.0, 0.0};
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = small_spec(20, 10, 5, 77);
  spec.weights = WeightDistribution::Unit;
  const auto back = synth_spec_from_json(to_json(spec));
  CHECK(to_json(back) == to_json(spec));
}
