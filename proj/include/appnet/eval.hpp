#pragma once

#include "appnet/netdata.hpp"
#include "appnet/predict.hpp"

#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace appnet {

double rmse(std::span<const double> predicted, std::span<const double> truth);

// Users in `candidates` ordered by descending score, ties by ascending id.
std::vector<UserId> rank_users(const Eigen::VectorXd& scores,
                               const std::vector<UserId>& candidates);

// Fraction of adopters among the k best-scored users (user id = score index).
double precision_at_k(std::span<const double> scores, const std::vector<UserId>& adopters, int k);

struct MeanPrecision {
  double value = 0.0;
  int apps = 0;
  // Apps ranked with fewer than k evaluated users; those use k = #evaluated.
  int clipped_apps = 0;
};

// Unweighted mean over sheets of precision at k among each sheet's evaluated
// users; positives are the evaluated users that adopted the sheet's app.
MeanPrecision mean_precision_at_k(const std::vector<PredictionSheet>& sheets,
                                  const AdoptionMatrix& truth, int k = 5);

struct ScoredPair {
  double score = 0.0;
  bool positive = false;
};

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
  double threshold = 0.0;
};

// One point per distinct score, thresholds descending (predict positive when
// score >= threshold). Throws NoPositives without a positive pair.
std::vector<PrPoint> pr_curve(std::vector<ScoredPair> pairs);

double f1_score(double precision, double recall);
double optimal_f1(const std::vector<PrPoint>& points);

struct MetricReport {
  double rmse = 0.0;
  std::map<int, double> mp_at_k;
  std::map<int, int> clipped_apps;
  double optimal_f1 = 0.0;
  // Mean of per-app optimal F1 over apps with at least one evaluated positive.
  double per_app_f1 = 0.0;
  int num_apps = 0;
  std::size_t num_pairs = 0;
  std::size_t num_positives = 0;
  // Protocol-specific scalars, e.g. precision at a data-dependent k.
  std::map<std::string, double> named;
  std::vector<PrPoint> pr_points;
};

// Pools every (app, evaluated user) pair of the sheets.
std::vector<ScoredPair> pooled_pairs(const std::vector<PredictionSheet>& sheets,
                                     const AdoptionMatrix& truth);

MetricReport evaluate_sheets(const std::vector<PredictionSheet>& sheets,
                             const AdoptionMatrix& truth, const std::vector<int>& ks = {5});

// `include_curve` adds the PR points to the JSON.
nlohmann::json to_json(const MetricReport& report, bool include_curve = false);
void write_pr_csv(const std::vector<PrPoint>& points, std::ostream& out);

}  // namespace appnet
