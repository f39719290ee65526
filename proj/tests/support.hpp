#pragma once

// Shared fixtures and independent reference implementations for the tests.

#include "appnet/eval.hpp"
#include "appnet/model.hpp"
#include "appnet/netdata.hpp"
#include "appnet/seeds.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace testing {

using namespace appnet;

inline CandidateNetwork random_network(int users, double density, Rng& rng,
                                       const std::string& name = {}) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CandidateNetwork::Edge> edges;
  for (int i = 0; i < users; ++i) {
    for (int j = i + 1; j < users; ++j) {
      if (unit(rng) < density) edges.push_back({i, j, 0.1 + 2.0 * unit(rng)});
    }
  }
  return CandidateNetwork::from_edges(users, edges, name);
}

inline AdoptionMatrix random_adoptions(int users, int apps, double rate, Rng& rng,
                                       bool timestamps = false) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Adoption> entries;
  for (int a = 0; a < apps; ++a) {
    for (int u = 0; u < users; ++u) {
      if (unit(rng) < rate) {
        Adoption e{u, a, std::nullopt};
        if (timestamps) e.timestamp = static_cast<Timestamp>(unit(rng) * 1000);
        entries.push_back(e);
      }
    }
  }
  return AdoptionMatrix(users, apps, std::move(entries));
}

struct Instance {
  NetworkStack stack;
  AdoptionMatrix adoptions;
  std::vector<AppId> apps;
};

// Random feasible instance with U users, M networks, A apps and popularity.
inline Instance random_instance(int users, int networks, int apps, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  std::vector<CandidateNetwork> nets;
  for (int m = 0; m < networks; ++m) nets.push_back(random_network(users, 0.3, rng));
  inst.adoptions = random_adoptions(users, apps, 0.25, rng);
  inst.stack = NetworkStack(std::move(nets), popularity_counts(inst.adoptions));
  for (int a = 0; a < apps; ++a) inst.apps.push_back(a);
  return inst;
}

inline ModelParams random_params(int networks, int users, Rng& rng, double lo = 0.05,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  ModelParams p = ModelParams::zeros(networks, users);
  for (int m = 0; m < networks; ++m) p.alpha[m] = d(rng) * 0.3;
  p.alpha_pop = d(rng) * 0.05;
  for (int u = 0; u < users; ++u) p.s[u] = d(rng);
  return p;
}

// Neighbour potentials by a double loop over every ordered pair of a dense copy.
inline Eigen::VectorXd naive_potentials(const Eigen::MatrixXd& w, const Eigen::VectorXd& x) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(w.rows());
  for (int i = 0; i < w.rows(); ++i) {
    for (int j = 0; j < w.cols(); ++j) {
      if (j != i && w(i, j) > 0.0) out[i] += w(i, j) * x[j];
    }
  }
  return out;
}

// Direct evaluation of the training objective from dense matrices, using
// plain log/exp rather than the library's stable helper.
inline double naive_log_likelihood(const ModelParams& p, const NetworkStack& stack,
                                   const AdoptionMatrix& adoptions,
                                   const std::vector<AppId>& apps) {
  double total = 0.0;
  for (const AppId a : apps) {
    const Eigen::VectorXd x = adoptions.indicator(a);
    Eigen::VectorXd z = p.s;
    for (int m = 0; m < stack.num_networks(); ++m) {
      const Eigen::MatrixXd w = Eigen::MatrixXd(stack.networks[m].weights());
      z += p.alpha[m] * naive_potentials(w, x);
    }
    z.array() += p.alpha_pop * stack.popularity_of(a);
    for (int u = 0; u < x.size(); ++u) {
      if (x[u] > 0.5) {
        total += std::log(1.0 - std::exp(-std::max(z[u], 1e-12)));
      } else {
        total -= z[u];
      }
    }
  }
  return total;
}

// Precision at k by explicit rank counting: user u is in the top k when fewer
// than k candidates beat it (higher score, or equal score and smaller id).
inline double brute_precision(const Eigen::VectorXd& scores, const std::vector<UserId>& candidates,
                              const std::vector<bool>& positive, int k) {
  int hits = 0;
  for (const UserId u : candidates) {
    int better = 0;
    for (const UserId v : candidates) {
      if (scores[v] > scores[u] || (scores[v] == scores[u] && v < u)) ++better;
    }
    if (better < k && positive[u]) ++hits;
  }
  return static_cast<double>(hits) / k;
}

// Max F1 over every subset of pairs that a score threshold can select
// (subsets closed upward in score), by exhaustive enumeration.
inline double brute_optimal_f1(const std::vector<ScoredPair>& pairs) {
  const std::size_t n = pairs.size();
  int positives = 0;
  for (const auto& p : pairs) positives += p.positive;
  double best = 0.0;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    bool threshold_set = true;
    for (std::size_t i = 0; i < n && threshold_set; ++i) {
      if (!(mask >> i & 1u)) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (pairs[j].score >= pairs[i].score && !(mask >> j & 1u)) {
          threshold_set = false;
          break;
        }
      }
    }
    if (!threshold_set) continue;
    int tp = 0;
    int selected = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1u) {
        ++selected;
        tp += pairs[i].positive;
      }
    }
    const double precision = static_cast<double>(tp) / selected;
    const double recall = static_cast<double>(tp) / positives;
    if (precision + recall > 0) best = std::max(best, 2 * precision * recall / (precision + recall));
  }
  return best;
}

// Minimum of ||A x - b||^2 over x >= 0 by trying every support and keeping
// the feasible unconstrained least-squares solutions.
inline double active_set_nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(A.cols());
  double best = b.squaredNorm();
  for (int mask = 1; mask < (1 << n); ++mask) {
    std::vector<int> cols;
    for (int j = 0; j < n; ++j) {
      if (mask >> j & 1) cols.push_back(j);
    }
    Eigen::MatrixXd sub(A.rows(), static_cast<int>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) sub.col(c) = A.col(cols[c]);
    const Eigen::VectorXd x = sub.colPivHouseholderQr().solve(b);
    if ((x.array() < 0.0).any()) continue;
    best = std::min(best, (sub * x - b).squaredNorm());
  }
  return best;
}

inline double relative_difference(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testing
