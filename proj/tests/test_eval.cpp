#include "support.hpp"

#include "appnet/error.hpp"
#include "appnet/eval.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <sstream>

using namespace appnet;

namespace {

PredictionSheet sheet_of(AppId app, std::vector<double> scores, std::vector<UserId> evaluated) {
  PredictionSheet s;
  s.app = app;
  s.scores = Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
  s.evaluated_users = std::move(evaluated);
  return s;
}

std::vector<UserId> everyone(int n) {
  std::vector<UserId> out(n);
  for (int i = 0; i < n; ++i) out[i] = i;
  return out;
}

}  // namespace

TEST_CASE("rmse examples") {
  const std::vector<double> a{0.2, 0.7};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}) == doctest::Approx(0.5));
  CHECK(rmse(std::vector<double>{0.25, 0.75, 0.0}, std::vector<double>{0, 1, 0}) ==
        doctest::Approx(0.204124).epsilon(1e-6));
  CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), Error);
  CHECK_THROWS_AS(rmse(std::vector<double>{1.0}, std::vector<double>{1.0, 0.0}), Error);
  // Simultaneous permutation leaves it unchanged.
  CHECK(rmse(std::vector<double>{0.0, 0.75, 0.25}, std::vector<double>{0, 1, 0}) ==
        rmse(std::vector<double>{0.25, 0.75, 0.0}, std::vector<double>{0, 1, 0}));
}

TEST_CASE("precision at k examples") {
  const std::vector<double> scores{0.9, 0.8, 0.3, 0.1};
  CHECK(precision_at_k(scores, {0, 2}, 2) == 0.5);
  CHECK(precision_at_k(scores, {0, 1}, 2) == 1.0);
  CHECK(precision_at_k(scores, {}, 3) == 0.0);
  CHECK_THROWS_AS(precision_at_k(scores, {0}, 0), Error);
  CHECK_THROWS_AS(precision_at_k(scores, {0}, 5), Error);
  // Ties resolve toward the smaller id.
  const std::vector<double> tied{0.5, 0.5, 0.5};
  CHECK(precision_at_k(tied, {0}, 1) == 1.0);
  CHECK(precision_at_k(tied, {2}, 2) == 0.0);
}

TEST_CASE("mean precision over apps") {
  const AdoptionMatrix truth(3, 2, {{0, 0, std::nullopt}, {2, 1, std::nullopt}});
  const std::vector<PredictionSheet> sheets{sheet_of(0, {0.9, 0.1, 0.2}, everyone(3)),
                                            sheet_of(1, {0.9, 0.1, 0.2}, everyone(3))};
  const auto mp = mean_precision_at_k(sheets, truth, 1);
  CHECK(mp.value == 0.5);
  CHECK(mp.apps == 2);
  CHECK(mp.clipped_apps == 0);

  const auto single = mean_precision_at_k({sheets[0]}, truth, 2);
  const std::vector<double> s{0.9, 0.1, 0.2};
  CHECK(single.value == precision_at_k(s, {0}, 2));

  const auto clipped = mean_precision_at_k({sheet_of(1, {0.9, 0.1, 0.2}, {1, 2})}, truth, 5);
  CHECK(clipped.clipped_apps == 1);
  CHECK(clipped.value == 0.5);

  CHECK_THROWS_AS(mean_precision_at_k({}, truth, 5), Error);
}

TEST_CASE("PR curve and optimal F1 example") {
  const auto points = pr_curve({{0.9, true}, {0.8, false}, {0.1, true}});
  REQUIRE(points.size() == 3);
  CHECK(points[0].precision == 1.0);
  CHECK(points[0].recall == 0.5);
  CHECK(points[1].precision == 0.5);
  CHECK(points[1].recall == 0.5);
  CHECK(points[2].precision == doctest::Approx(2.0 / 3.0));
  CHECK(points[2].recall == 1.0);
  CHECK(optimal_f1(points) == doctest::Approx(0.8));
  CHECK(f1_score(0.0, 0.0) == 0.0);

  const auto separated = pr_curve({{0.9, true}, {0.8, true}, {0.1, false}});
  CHECK(optimal_f1(separated) == 1.0);
  CHECK_THROWS_AS(pr_curve({{0.3, false}}), Error);
}

TEST_CASE("all tied scores give a single prevalence point") {
  const auto points = pr_curve({{0.4, true}, {0.4, false}, {0.4, false}, {0.4, true},
                                {0.4, false}});
  REQUIRE(points.size() == 1);
  const double p = 0.4;
  CHECK(points[0].precision == doctest::Approx(p));
  CHECK(points[0].recall == 1.0);
  CHECK(optimal_f1(points) == doctest::Approx(2 * p / (1 + p)));
}

TEST_CASE("recall never decreases along the sweep") {
  testing::Rng rng(12);
  std::uniform_int_distribution<int> level(0, 5);
  std::vector<ScoredPair> pairs;
  for (int i = 0; i < 200; ++i) pairs.push_back({level(rng) / 5.0, level(rng) < 2});
  pairs.push_back({1.0, true});
  const auto points = pr_curve(pairs);
  for (std::size_t i = 1; i < points.size(); ++i) {
    CHECK(points[i].recall >= points[i - 1].recall);
    CHECK(points[i].threshold < points[i - 1].threshold);
  }
  for (const auto& pt : points) CHECK(optimal_f1(points) >= f1_score(pt.precision, pt.recall));
}

TEST_CASE("metrics agree with exhaustive oracles on small random cases") {
  testing::Rng rng(2024);
  std::uniform_int_distribution<int> size(1, 12);
  std::uniform_int_distribution<int> level(0, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = size(rng);
    std::vector<ScoredPair> pairs(n);
    std::vector<double> scores(n);
    std::vector<bool> positive(n);
    std::vector<UserId> adopters;
    const bool coarse = trial % 2 == 0;  // half the cases carry heavy ties
    for (int i = 0; i < n; ++i) {
      scores[i] = coarse ? level(rng) / 4.0 : unit(rng);
      positive[i] = unit(rng) < 0.4;
      if (positive[i]) adopters.push_back(i);
      pairs[i] = {scores[i], static_cast<bool>(positive[i])};
    }
    const Eigen::VectorXd s = Eigen::Map<Eigen::VectorXd>(scores.data(), n);
    for (int k = 1; k <= n; ++k) {
      CHECK(precision_at_k(scores, adopters, k) ==
            testing::brute_precision(s, everyone(n), positive, k));
    }
    if (adopters.empty()) {
      CHECK_THROWS_AS(pr_curve(pairs), Error);
      continue;
    }
    CHECK(std::abs(optimal_f1(pr_curve(pairs)) - testing::brute_optimal_f1(pairs)) < 1e-15);
    ++checked;
  }
  CHECK(checked > 800);
}

TEST_CASE("mean precision matches per-app enumeration") {
  testing::Rng rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int U = 9;
  const auto truth = testing::random_adoptions(U, 5, 0.35, rng);
  std::vector<PredictionSheet> sheets;
  for (AppId a = 0; a < 5; ++a) {
    std::vector<double> scores(U);
    for (auto& v : scores) v = std::round(unit(rng) * 6) / 6;
    std::vector<UserId> evaluated;
    for (int u = 0; u < U; ++u) {
      if (unit(rng) < 0.8) evaluated.push_back(u);
    }
    if (evaluated.size() < 3) evaluated = everyone(U);
    sheets.push_back(sheet_of(a, scores, evaluated));
  }
  for (int k = 1; k <= 3; ++k) {
    double total = 0.0;
    for (const auto& sh : sheets) {
      std::vector<bool> positive(U, false);
      for (const UserId u : truth.adopters(sh.app)) positive[u] = true;
      total += testing::brute_precision(sh.scores, sh.evaluated_users, positive, k);
    }
    CHECK(mean_precision_at_k(sheets, truth, k).value == doctest::Approx(total / 5).epsilon(1e-15));
  }
}

TEST_CASE("ranking metrics ignore strictly increasing transforms") {
  testing::Rng rng(77);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores(10), warped(10);
    std::vector<UserId> adopters;
    std::vector<ScoredPair> a, b;
    for (int i = 0; i < 10; ++i) {
      scores[i] = unit(rng);
      warped[i] = std::exp(3 * scores[i]) - 7;
      const bool pos = unit(rng) < 0.3;
      if (pos) adopters.push_back(i);
      a.push_back({scores[i], pos});
      b.push_back({warped[i], pos});
    }
    for (int k = 1; k <= 10; ++k) {
      CHECK(precision_at_k(scores, adopters, k) == precision_at_k(warped, adopters, k));
    }
    if (!adopters.empty()) CHECK(optimal_f1(pr_curve(a)) == optimal_f1(pr_curve(b)));
  }
}

TEST_CASE("k equal to one on a single app") {
  const AdoptionMatrix truth(3, 1, {{1, 0, std::nullopt}});
  CHECK(mean_precision_at_k({sheet_of(0, {0.2, 0.9, 0.1}, everyone(3))}, truth, 1).value == 1.0);
  CHECK(mean_precision_at_k({sheet_of(0, {0.95, 0.9, 0.1}, everyone(3))}, truth, 1).value == 0.0);
}

TEST_CASE("sheet evaluation pools pairs over evaluated users") {
  const AdoptionMatrix truth(4, 2, {{0, 0, std::nullopt}, {3, 1, std::nullopt}});
  const std::vector<PredictionSheet> sheets{sheet_of(0, {0.9, 0.5, 0.2, 0.1}, {0, 1, 2}),
                                            sheet_of(1, {0.3, 0.3, 0.3, 0.6}, {2, 3})};
  const auto report = evaluate_sheets(sheets, truth, {1, 5});
  CHECK(report.num_pairs == 5);
  CHECK(report.num_positives == 2);
  CHECK(report.num_apps == 2);
  CHECK(report.mp_at_k.at(1) == 1.0);
  CHECK(report.clipped_apps.at(5) == 2);
  CHECK(report.optimal_f1 == 1.0);
  CHECK(report.per_app_f1 == 1.0);
  const double sq = 0.01 + 0.25 + 0.04 + 0.09 + 0.16;
  CHECK(report.rmse == doctest::Approx(std::sqrt(sq / 5)));

  auto j = to_json(report, true);
  CHECK(j["mp_at_k"]["1"] == 1.0);
  CHECK(j.contains("pr_points"));
  CHECK_FALSE(to_json(report).contains("pr_points"));

  std::ostringstream csv;
  write_pr_csv(report.pr_points, csv);
  CHECK(csv.str().rfind("threshold,precision,recall\n", 0) == 0);
}
