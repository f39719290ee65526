#include "appnet/eval.hpp"

#include "appnet/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace appnet {

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorKind::DimensionMismatch, "rmse inputs differ in length");
  }
  if (predicted.empty()) throw Error(ErrorKind::EmptyData, "rmse of an empty list");
  double total = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    total += d * d;
  }
  return std::sqrt(total / static_cast<double>(predicted.size()));
}

std::vector<UserId> rank_users(const Eigen::VectorXd& scores,
                               const std::vector<UserId>& candidates) {
  std::vector<UserId> order = candidates;
  std::sort(order.begin(), order.end(), [&](UserId a, UserId b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return order;
}

namespace {

double precision_among(const Eigen::VectorXd& scores, const std::vector<UserId>& candidates,
                       const std::vector<std::uint8_t>& positive, int k) {
  const auto order = rank_users(scores, candidates);
  int hits = 0;
  for (int i = 0; i < k; ++i) hits += positive[order[i]];
  return static_cast<double>(hits) / static_cast<double>(k);
}

}  // namespace

double precision_at_k(std::span<const double> scores, const std::vector<UserId>& adopters, int k) {
  const auto n = static_cast<int>(scores.size());
  if (k < 1 || k > n) {
    throw Error(ErrorKind::InvalidArgument,
                "k=" + std::to_string(k) + " outside [1," + std::to_string(n) + "]");
  }
  const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(scores.data(), n);
  std::vector<std::uint8_t> positive(n, 0);
  for (const UserId u : adopters) {
    if (u < 0 || u >= n) throw Error(ErrorKind::IdOutOfRange, "adopter id");
    positive[u] = 1;
  }
  std::vector<UserId> all(n);
  std::iota(all.begin(), all.end(), 0);
  return precision_among(s, all, positive, k);
}

MeanPrecision mean_precision_at_k(const std::vector<PredictionSheet>& sheets,
                                  const AdoptionMatrix& truth, int k) {
  if (sheets.empty()) throw Error(ErrorKind::EmptyData, "no prediction sheets");
  if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
  MeanPrecision out;
  double total = 0.0;
  for (const auto& sheet : sheets) {
    const int n = static_cast<int>(sheet.evaluated_users.size());
    if (n == 0) continue;
    std::vector<std::uint8_t> positive(sheet.scores.size(), 0);
    for (const UserId u : truth.adopters(sheet.app)) positive[u] = 1;
    const int effective = std::min(k, n);
    if (effective < k) ++out.clipped_apps;
    total += precision_among(sheet.scores, sheet.evaluated_users, positive, effective);
    ++out.apps;
  }
  if (out.apps == 0) throw Error(ErrorKind::EmptyData, "no sheet has evaluated users");
  out.value = total / static_cast<double>(out.apps);
  return out;
}

std::vector<PrPoint> pr_curve(std::vector<ScoredPair> pairs) {
  const auto positives = std::count_if(pairs.begin(), pairs.end(),
                                       [](const ScoredPair& p) { return p.positive; });
  if (positives == 0) throw Error(ErrorKind::NoPositives, "PR curve needs a positive pair");
  std::sort(pairs.begin(), pairs.end(),
            [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });
  std::vector<PrPoint> points;
  std::size_t tp = 0;
  std::size_t seen = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    tp += pairs[i].positive ? 1 : 0;
    ++seen;
    const bool last_of_group = i + 1 == pairs.size() || pairs[i + 1].score != pairs[i].score;
    if (!last_of_group) continue;
    points.push_back({static_cast<double>(tp) / static_cast<double>(seen),
                      static_cast<double>(tp) / static_cast<double>(positives),
                      pairs[i].score});
  }
  return points;
}

double f1_score(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

double optimal_f1(const std::vector<PrPoint>& points) {
  if (points.empty()) throw Error(ErrorKind::EmptyData, "no PR points");
  double best = 0.0;
  for (const auto& p : points) best = std::max(best, f1_score(p.precision, p.recall));
  return best;
}

std::vector<ScoredPair> pooled_pairs(const std::vector<PredictionSheet>& sheets,
                                     const AdoptionMatrix& truth) {
  std::vector<ScoredPair> pairs;
  for (const auto& sheet : sheets) {
    for (const UserId u : sheet.evaluated_users) {
      pairs.push_back({sheet.scores[u], truth.adopted(u, sheet.app)});
    }
  }
  return pairs;
}

MetricReport evaluate_sheets(const std::vector<PredictionSheet>& sheets,
                             const AdoptionMatrix& truth, const std::vector<int>& ks) {
  MetricReport report;
  const auto pairs = pooled_pairs(sheets, truth);
  if (pairs.empty()) throw Error(ErrorKind::EmptyData, "no evaluated pairs");
  std::vector<double> predicted;
  std::vector<double> actual;
  predicted.reserve(pairs.size());
  actual.reserve(pairs.size());
  for (const auto& p : pairs) {
    predicted.push_back(p.score);
    actual.push_back(p.positive ? 1.0 : 0.0);
    report.num_positives += p.positive ? 1 : 0;
  }
  report.num_pairs = pairs.size();
  report.rmse = rmse(predicted, actual);
  for (const int k : ks) {
    const auto mp = mean_precision_at_k(sheets, truth, k);
    report.mp_at_k[k] = mp.value;
    report.clipped_apps[k] = mp.clipped_apps;
    report.num_apps = mp.apps;
  }
  report.pr_points = pr_curve(pairs);
  report.optimal_f1 = optimal_f1(report.pr_points);

  double f1_total = 0.0;
  int f1_apps = 0;
  for (const auto& sheet : sheets) {
    const auto app_pairs = pooled_pairs({sheet}, truth);
    const bool any = std::any_of(app_pairs.begin(), app_pairs.end(),
                                 [](const ScoredPair& p) { return p.positive; });
    if (!any) continue;
    f1_total += optimal_f1(pr_curve(app_pairs));
    ++f1_apps;
  }
  report.per_app_f1 = f1_apps ? f1_total / f1_apps : 0.0;
  return report;
}

nlohmann::json to_json(const MetricReport& report, bool include_curve) {
  nlohmann::json mp = nlohmann::json::object();
  nlohmann::json clipped = nlohmann::json::object();
  for (const auto& [k, v] : report.mp_at_k) mp[std::to_string(k)] = v;
  for (const auto& [k, v] : report.clipped_apps) clipped[std::to_string(k)] = v;
  nlohmann::json j = {{"rmse", report.rmse},
                      {"mp_at_k", mp},
                      {"clipped_apps", clipped},
                      {"optimal_f1", report.optimal_f1},
                      {"per_app_f1", report.per_app_f1},
                      {"num_apps", report.num_apps},
                      {"num_pairs", report.num_pairs},
                      {"num_positives", report.num_positives}};
  for (const auto& [name, value] : report.named) j[name] = value;
  if (include_curve) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : report.pr_points) pts.push_back({p.threshold, p.precision, p.recall});
    j["pr_points"] = pts;
  }
  return j;
}

void write_pr_csv(const std::vector<PrPoint>& points, std::ostream& out) {
  out << "threshold,precision,recall\n";
  const auto old_precision = out.precision(17);
  for (const auto& p : points) out << p.threshold << ',' << p.precision << ',' << p.recall << '\n';
  out.precision(old_precision);
}

}  // namespace appnet
