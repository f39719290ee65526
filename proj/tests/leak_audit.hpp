#pragma once

// Observer that checks, for every fit and scoring call of a protocol run,
// that nothing outside the permitted evidence was visible. Violations are
// collected as messages. Intended for jobs = 1 (calls arrive in order).

#include "appnet/harness.hpp"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace testing {

class LeakAudit : public appnet::HarnessObserver {
 public:
  LeakAudit(const appnet::Dataset& data, const appnet::ExperimentSpec& spec)
      : protocol_(spec.protocol),
        truth_(appnet::filter_min_users(data.adoptions, spec.min_users).matrix),
        networks_(data.stack.without_popularity()) {}

  void on_fit(std::string_view method, const appnet::TrainingSet& ts,
              const std::vector<appnet::AppId>& test_apps) override {
    ++fits;
    const std::set<appnet::AppId> test(test_apps.begin(), test_apps.end());
    for (const auto& obs : ts.apps) {
      if (test.count(obs.app)) fail("fit '" + std::string(method) + "' saw test app " +
                                    std::to_string(obs.app));
    }
    if (method == "full") {
      last_full_ = ts;
      transfer_training_checked_ = false;
    }
  }

  void on_score(std::string_view method, appnet::AppId app, const Eigen::VectorXd& evidence,
                double popularity, const std::vector<appnet::UserId>& evaluated) override {
    ++scores;
    const std::string where = std::string(method) + " app " + std::to_string(app);
    for (Eigen::Index u = 0; u < evidence.size(); ++u) {
      if (evidence[u] != 0.0 && !truth_.adopted(static_cast<appnet::UserId>(u), app)) {
        fail(where + ": evidence marks a non-adopter");
      }
    }
    using appnet::Protocol;
    if (protocol_ == Protocol::Future) {
      const auto split = appnet::future_split(truth_, {app}).front();
      Eigen::VectorXd early = Eigen::VectorXd::Zero(truth_.num_users());
      for (const auto u : split.early) early[u] = 1.0;
      if (evidence != early) fail(where + ": evidence is not exactly the early adopters");
      for (const auto u : split.late) {
        if (evidence[u] != 0.0) fail(where + ": late adopter used as evidence");
      }
      for (const auto u : evaluated) {
        if (early[u] != 0.0) fail(where + ": early adopter is ranked");
      }
      if (popularity != static_cast<double>(split.early.size())) {
        fail(where + ": popularity counts more than the early adopters");
      }
    }
    if (protocol_ == Protocol::Transfer) {
      for (const auto u : evaluated) {
        if (evidence[u] != 0.0) fail(where + ": hidden user's bit used as evidence");
        if (std::binary_search(last_full_.users.begin(), last_full_.users.end(), u)) {
          fail(where + ": hidden user has likelihood terms in training");
        }
        for (const auto& obs : last_full_.apps) {
          if (obs.adopted[u]) fail(where + ": hidden user's outcome reached training");
          if (std::find(obs.evidence_users.begin(), obs.evidence_users.end(), u) !=
              obs.evidence_users.end()) {
            fail(where + ": hidden user's bit fed training potentials");
          }
        }
      }
      if (popularity != evidence.sum()) fail(where + ": popularity counts hidden adopters");
      if (!transfer_training_checked_) check_transfer_training(evaluated);
    }
  }

  std::vector<std::string> violations;
  int fits = 0;
  int scores = 0;

 private:
  void fail(std::string message) {
    if (violations.size() < 20) violations.push_back(std::move(message));
  }

  // Training potentials must be recomputable from visible adopters only.
  void check_transfer_training(const std::vector<appnet::UserId>& hidden) {
    transfer_training_checked_ = true;
    for (const auto& obs : last_full_.apps) {
      Eigen::VectorXd x = truth_.indicator(obs.app);
      for (const auto u : hidden) x[u] = 0.0;
      const auto table = appnet::potential_table(networks_, x, 0.0);
      if ((table.per_network - obs.potentials.per_network).cwiseAbs().maxCoeff() > 1e-12) {
        fail("transfer training potentials use hidden adopters");
      }
      if (obs.potentials.popularity != x.sum()) fail("transfer training popularity uses hidden adopters");
    }
  }

  appnet::Protocol protocol_;
  appnet::AdoptionMatrix truth_;
  appnet::NetworkStack networks_;
  appnet::TrainingSet last_full_;
  bool transfer_training_checked_ = false;
};

}  // namespace testing
