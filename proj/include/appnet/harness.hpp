#pragma once

// Experimental protocols: app-level cross-validation, the five-way ablation,
// baseline comparisons, future-installation and missing-history regimes.

#include "appnet/eval.hpp"
#include "appnet/netdata.hpp"
#include "appnet/predict.hpp"
#include "appnet/solver.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace appnet {

struct Dataset {
  // Candidate networks only; each protocol derives the popularity channel from
  // the adoption bits it is allowed to see.
  NetworkStack stack;
  AdoptionMatrix adoptions;

  // SHA-256 over the canonical text form of networks and adoptions.
  std::string content_hash() const;
};

enum class Protocol { Ablation, Comparison, Future, Transfer };
enum class UserSubset { All, LowActivity };

Protocol parse_protocol(const std::string& text);
std::string to_string(Protocol p);
UserSubset parse_user_subset(const std::string& text);
std::string to_string(UserSubset s);

struct ExperimentSpec {
  Protocol protocol = Protocol::Ablation;
  // Exactly one of these is used; protocol defaults apply when both are unset:
  // ablation 5 folds, comparison both 0.2 and 0.5, future and transfer 0.5.
  std::optional<double> train_fraction;
  std::optional<int> folds;
  int min_users = 2;
  int repeats = 5;
  std::uint64_t seed = 0;
  FitConfig fit;
  // Evaluated users for ablation/future/transfer. Comparison reports both.
  UserSubset user_subset = UserSubset::All;
  double observable_fraction = 0.5;
  // Comparison: also fit each candidate network alone.
  bool single_networks = true;
  // Worker threads across repeats; results do not depend on it.
  int jobs = 1;

  void validate() const;
};

nlohmann::json to_json(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Splits

using AppSplit = std::pair<std::vector<AppId>, std::vector<AppId>>;  // (train, test)

std::vector<AppSplit> kfold_apps(const std::vector<AppId>& apps, int k, std::uint64_t seed);
AppSplit fraction_split(const std::vector<AppId>& apps, double train_fraction,
                        std::uint64_t seed);

struct AdopterSplit {
  std::vector<UserId> early;  // G1: evidence
  std::vector<UserId> late;   // G2: prediction targets
};

// Per app in `apps`: adopters by time, ties by user id; the first ceil(n/2) are early.
std::vector<AdopterSplit> future_split(const AdoptionMatrix& adoptions,
                                       const std::vector<AppId>& apps);

struct UserSplit {
  std::vector<UserId> observable;
  std::vector<UserId> unobservable;
};

UserSplit observable_user_split(int num_users, double observable_fraction, std::uint64_t seed);

// The floor(U/2) users with the fewest installs, ties by id, sorted by id.
std::vector<UserId> low_activity_subset(const AdoptionMatrix& adoptions);

// Rounded mean of the late-group sizes (at least 1).
int transfer_k(const std::vector<std::size_t>& late_counts);

// ---------------------------------------------------------------------------
// Reports

struct AggregateMetrics {
  double rmse = 0.0;
  std::map<int, double> mp_at_k;
  double optimal_f1 = 0.0;
  double per_app_f1 = 0.0;
  // Means of MetricReport::named entries present in every repeat.
  std::map<std::string, double> named;
};

struct ConfigResult {
  std::string setting;  // e.g. "train=0.50,users=all"
  std::string method;   // e.g. "full", "regression", "random"
  std::vector<MetricReport> repeats;
  AggregateMetrics aggregate;
  std::vector<ConvergenceRecord> fits;
  int skipped_apps = 0;
  nlohmann::json extra = nlohmann::json::object();

  std::string label() const { return setting.empty() ? method : setting + "/" + method; }
};

AggregateMetrics aggregate(const std::vector<MetricReport>& repeats);

struct ExperimentReport {
  Protocol protocol = Protocol::Ablation;
  nlohmann::json spec;
  nlohmann::json provenance;
  std::vector<ConfigResult> results;

  const ConfigResult& find(std::string_view label) const;
};

nlohmann::json to_json(const ExperimentReport& report);
// Rows `protocol,config,repeat,metric,value`; aggregate rows use repeat "mean".
// The config label is always double-quoted since it contains commas.
void write_report_csv(const ExperimentReport& report, std::ostream& out);

// ---------------------------------------------------------------------------
// Protocols

// Hooks for auditing what each fit and each scoring call was allowed to see.
// Called from worker threads when spec.jobs > 1.
class HarnessObserver {
 public:
  virtual ~HarnessObserver() = default;
  virtual void on_fit(std::string_view method, const TrainingSet& data,
                      const std::vector<AppId>& test_apps) {
    (void)method, (void)data, (void)test_apps;
  }
  virtual void on_score(std::string_view method, AppId app, const Eigen::VectorXd& evidence,
                        double popularity, const std::vector<UserId>& evaluated) {
    (void)method, (void)app, (void)evidence, (void)popularity, (void)evaluated;
  }
};

ExperimentReport run_ablation(const Dataset& data, const ExperimentSpec& spec,
                              HarnessObserver* observer = nullptr);
ExperimentReport run_comparison(const Dataset& data, const ExperimentSpec& spec,
                                HarnessObserver* observer = nullptr);
ExperimentReport run_future(const Dataset& data, const ExperimentSpec& spec,
                            HarnessObserver* observer = nullptr);
ExperimentReport run_transfer(const Dataset& data, const ExperimentSpec& spec,
                              HarnessObserver* observer = nullptr);
ExperimentReport run_experiment(const Dataset& data, const ExperimentSpec& spec,
                                HarnessObserver* observer = nullptr);

// The five ablation configurations in table order.
struct AblationConfig {
  std::string name;
  bool popularity = true;
  FitConfig fit;
};
std::vector<AblationConfig> ablation_configs(const FitConfig& base);

}  // namespace appnet
