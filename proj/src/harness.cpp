#include "appnet/harness.hpp"

#include "appnet/error.hpp"
#include "appnet/hash.hpp"
#include "appnet/seeds.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace appnet {

std::string Dataset::content_hash() const {
  std::ostringstream os;
  for (const auto& g : stack.networks) {
    os << "network " << g.name() << ' ' << g.num_users() << '\n';
    write_edge_list(g, os);
  }
  os << "adoptions " << adoptions.num_users() << ' ' << adoptions.num_apps() << '\n';
  write_adoptions(adoptions, os);
  return sha256_hex(os.str());
}

Protocol parse_protocol(const std::string& text) {
  if (text == "ablation") return Protocol::Ablation;
  if (text == "comparison") return Protocol::Comparison;
  if (text == "future") return Protocol::Future;
  if (text == "transfer") return Protocol::Transfer;
  throw Error(ErrorKind::InvalidArgument, "unknown protocol '" + text + "'");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::Ablation: return "ablation";
    case Protocol::Comparison: return "comparison";
    case Protocol::Future: return "future";
    case Protocol::Transfer: return "transfer";
  }
  return "ablation";
}

UserSubset parse_user_subset(const std::string& text) {
  if (text == "all") return UserSubset::All;
  if (text == "low_activity") return UserSubset::LowActivity;
  throw Error(ErrorKind::InvalidArgument, "unknown user subset '" + text + "'");
}

std::string to_string(UserSubset s) { return s == UserSubset::All ? "all" : "low_activity"; }

void ExperimentSpec::validate() const {
  if (train_fraction && folds) {
    throw Error(ErrorKind::InvalidArgument, "set either train_fraction or folds, not both");
  }
  if (train_fraction && !(*train_fraction > 0.0 && *train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train_fraction must be in (0, 1)");
  }
  if (folds && *folds < 2) throw Error(ErrorKind::InvalidArgument, "folds must be >= 2");
  if (folds && protocol != Protocol::Ablation) {
    throw Error(ErrorKind::InvalidArgument, "folds only apply to the ablation protocol");
  }
  if (repeats < 1) throw Error(ErrorKind::InvalidArgument, "repeats must be >= 1");
  if (min_users < 1) throw Error(ErrorKind::InvalidArgument, "min_users must be >= 1");
  if (!(observable_fraction > 0.0 && observable_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "observable_fraction must be in (0, 1)");
  }
  if (jobs < 1) throw Error(ErrorKind::InvalidArgument, "jobs must be >= 1");
  fit.validate();
}

nlohmann::json to_json(const ExperimentSpec& spec) {
  nlohmann::json j = {{"protocol", to_string(spec.protocol)},
                      {"min_users", spec.min_users},
                      {"repeats", spec.repeats},
                      {"seed", spec.seed},
                      {"user_subset", to_string(spec.user_subset)},
                      {"observable_fraction", spec.observable_fraction},
                      {"single_networks", spec.single_networks},
                      {"fit", to_json(spec.fit)}};
  j["train_fraction"] = spec.train_fraction ? nlohmann::json(*spec.train_fraction) : nlohmann::json(nullptr);
  j["folds"] = spec.folds ? nlohmann::json(*spec.folds) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Splits

std::vector<AppSplit> kfold_apps(const std::vector<AppId>& apps, int k, std::uint64_t seed) {
  const auto n = static_cast<int>(apps.size());
  if (k < 1 || k > n) {
    throw Error(ErrorKind::InvalidArgument,
                "k=" + std::to_string(k) + " folds for " + std::to_string(n) + " apps");
  }
  std::vector<AppId> order = apps;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<AppSplit> folds;
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int size = n / k + (f < n % k ? 1 : 0);
    AppSplit split;
    for (int i = 0; i < n; ++i) {
      (i >= start && i < start + size ? split.second : split.first).push_back(order[i]);
    }
    std::sort(split.first.begin(), split.first.end());
    std::sort(split.second.begin(), split.second.end());
    folds.push_back(std::move(split));
    start += size;
  }
  return folds;
}

namespace {
int round_half_up(double v) { return static_cast<int>(std::floor(v + 0.5)); }
}  // namespace

AppSplit fraction_split(const std::vector<AppId>& apps, double train_fraction,
                        std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "train_fraction must be in (0, 1)");
  }
  const auto n = static_cast<int>(apps.size());
  const int train_size = round_half_up(train_fraction * n);
  if (train_size < 1 || train_size >= n) {
    throw Error(ErrorKind::InvalidArgument, "fraction " + std::to_string(train_fraction) +
                                                " of " + std::to_string(n) +
                                                " apps leaves one side empty");
  }
  std::vector<AppId> order = apps;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  AppSplit split{{order.begin(), order.begin() + train_size},
                 {order.begin() + train_size, order.end()}};
  std::sort(split.first.begin(), split.first.end());
  std::sort(split.second.begin(), split.second.end());
  return split;
}

std::vector<AdopterSplit> future_split(const AdoptionMatrix& adoptions,
                                       const std::vector<AppId>& apps) {
  std::vector<AdopterSplit> out;
  out.reserve(apps.size());
  for (const AppId a : apps) {
    std::vector<std::pair<Timestamp, UserId>> timed;
    for (const UserId u : adoptions.adopters(a)) {
      const auto t = adoptions.timestamp(u, a);
      if (!t) {
        throw Error(ErrorKind::MissingTimestamps,
                    "future split needs install timestamps; user " + std::to_string(u) +
                        " app " + std::to_string(a) + " has none");
      }
      timed.emplace_back(*t, u);
    }
    std::sort(timed.begin(), timed.end());
    const std::size_t early = (timed.size() + 1) / 2;
    AdopterSplit split;
    for (std::size_t i = 0; i < timed.size(); ++i) {
      (i < early ? split.early : split.late).push_back(timed[i].second);
    }
    std::sort(split.early.begin(), split.early.end());
    std::sort(split.late.begin(), split.late.end());
    out.push_back(std::move(split));
  }
  return out;
}

UserSplit observable_user_split(int num_users, double observable_fraction, std::uint64_t seed) {
  if (!(observable_fraction > 0.0 && observable_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "observable_fraction must be in (0, 1)");
  }
  const int size = round_half_up(observable_fraction * num_users);
  if (size < 1 || size >= num_users) {
    throw Error(ErrorKind::InvalidArgument, "observable split leaves one group empty");
  }
  std::vector<UserId> order(num_users);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  UserSplit split{{order.begin(), order.begin() + size}, {order.begin() + size, order.end()}};
  std::sort(split.observable.begin(), split.observable.end());
  std::sort(split.unobservable.begin(), split.unobservable.end());
  return split;
}

std::vector<UserId> low_activity_subset(const AdoptionMatrix& adoptions) {
  const auto counts = adoptions.apps_per_user();
  std::vector<UserId> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](UserId a, UserId b) { return counts[a] < counts[b]; });
  order.resize(counts.size() / 2);
  std::sort(order.begin(), order.end());
  return order;
}

int transfer_k(const std::vector<std::size_t>& late_counts) {
  if (late_counts.empty()) return 1;
  const double total = std::accumulate(late_counts.begin(), late_counts.end(), 0.0);
  return std::max(1, round_half_up(total / static_cast<double>(late_counts.size())));
}

// ---------------------------------------------------------------------------
// Reports

AggregateMetrics aggregate(const std::vector<MetricReport>& repeats) {
  AggregateMetrics agg;
  if (repeats.empty()) return agg;
  const auto n = static_cast<double>(repeats.size());
  for (const auto& r : repeats) {
    agg.rmse += r.rmse;
    agg.optimal_f1 += r.optimal_f1;
    agg.per_app_f1 += r.per_app_f1;
  }
  agg.rmse /= n;
  agg.optimal_f1 /= n;
  agg.per_app_f1 /= n;
  for (const auto& [k, unused] : repeats.front().mp_at_k) {
    (void)unused;
    double total = 0.0;
    bool everywhere = true;
    for (const auto& r : repeats) {
      const auto it = r.mp_at_k.find(k);
      if (it == r.mp_at_k.end()) {
        everywhere = false;
        break;
      }
      total += it->second;
    }
    if (everywhere) agg.mp_at_k[k] = total / n;
  }
  for (const auto& [name, unused] : repeats.front().named) {
    (void)unused;
    double total = 0.0;
    bool everywhere = true;
    for (const auto& r : repeats) {
      const auto it = r.named.find(name);
      if (it == r.named.end()) {
        everywhere = false;
        break;
      }
      total += it->second;
    }
    if (everywhere) agg.named[name] = total / n;
  }
  return agg;
}

namespace {

nlohmann::json aggregate_json(const AggregateMetrics& agg) {
  nlohmann::json mp = nlohmann::json::object();
  for (const auto& [k, v] : agg.mp_at_k) mp[std::to_string(k)] = v;
  nlohmann::json j = {{"rmse", agg.rmse},
                      {"mp_at_k", mp},
                      {"optimal_f1", agg.optimal_f1},
                      {"per_app_f1", agg.per_app_f1}};
  for (const auto& [name, v] : agg.named) j[name] = v;
  return j;
}

}  // namespace

const ConfigResult& ExperimentReport::find(std::string_view label) const {
  for (const auto& r : results) {
    if (r.label() == label) return r;
  }
  throw Error(ErrorKind::InvalidArgument, "no result labelled '" + std::string(label) + "'");
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : report.results) {
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& m : r.repeats) reps.push_back(to_json(m));
    nlohmann::json fits = nlohmann::json::array();
    for (const auto& f : r.fits) fits.push_back(to_json(f));
    results.push_back({{"setting", r.setting},
                       {"method", r.method},
                       {"repeats", reps},
                       {"aggregate", aggregate_json(r.aggregate)},
                       {"fits", fits},
                       {"skipped_apps", r.skipped_apps},
                       {"extra", r.extra}});
  }
  return {{"protocol", to_string(report.protocol)},
          {"spec", report.spec},
          {"provenance", report.provenance},
          {"results", results}};
}

void write_report_csv(const ExperimentReport& report, std::ostream& out) {
  out << "protocol,config,repeat,metric,value\n";
  const auto old_precision = out.precision(17);
  const std::string protocol = to_string(report.protocol);
  auto row = [&](const std::string& config, const std::string& repeat, const std::string& metric,
                 double value) {
    out << protocol << ",\"" << config << "\"," << repeat << ',' << metric << ',' << value << '\n';
  };
  for (const auto& r : report.results) {
    const std::string config = r.label();
    for (std::size_t i = 0; i < r.repeats.size(); ++i) {
      const auto& m = r.repeats[i];
      const std::string rep = std::to_string(i);
      row(config, rep, "rmse", m.rmse);
      for (const auto& [k, v] : m.mp_at_k) row(config, rep, "mp_" + std::to_string(k), v);
      row(config, rep, "optimal_f1", m.optimal_f1);
      row(config, rep, "per_app_f1", m.per_app_f1);
      for (const auto& [name, v] : m.named) row(config, rep, name, v);
    }
    row(config, "mean", "rmse", r.aggregate.rmse);
    for (const auto& [k, v] : r.aggregate.mp_at_k) row(config, "mean", "mp_" + std::to_string(k), v);
    row(config, "mean", "optimal_f1", r.aggregate.optimal_f1);
    row(config, "mean", "per_app_f1", r.aggregate.per_app_f1);
    for (const auto& [name, v] : r.aggregate.named) row(config, "mean", name, v);
  }
  out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// Protocol plumbing

namespace {

// Outcome of one configuration in one repeat.
struct Outcome {
  MetricReport metrics;
  std::vector<ConvergenceRecord> fits;
  int skipped_apps = 0;
};

struct Prepared {
  Dataset data;
  std::vector<AppId> apps;
  std::size_t apps_before_filter = 0;
  std::string input_hash;
};

Prepared prepare(const Dataset& input, const ExperimentSpec& spec) {
  spec.validate();
  input.stack.validate();
  if (input.stack.num_networks() > 0 &&
      input.stack.num_users() != input.adoptions.num_users()) {
    throw Error(ErrorKind::DimensionMismatch, "networks and adoptions disagree on user count");
  }
  Prepared p;
  p.apps_before_filter = static_cast<std::size_t>(input.adoptions.num_apps());
  p.input_hash = input.content_hash();
  p.data.stack = input.stack.without_popularity();
  p.data.adoptions = filter_min_users(input.adoptions, spec.min_users).matrix;
  p.apps.resize(p.data.adoptions.num_apps());
  std::iota(p.apps.begin(), p.apps.end(), 0);
  return p;
}

// Runs body(r) for every repeat on up to `jobs` threads, rethrowing the first
// failure in repeat order.
template <typename Body>
void for_each_repeat(int repeats, int jobs, Body&& body) {
  std::vector<std::exception_ptr> errors(repeats);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < repeats; r = next++) {
      try {
        body(r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const int threads = std::min(jobs, repeats);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<UserId> all_users(int n) {
  std::vector<UserId> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<UserId> intersect(const std::vector<UserId>& a, const std::vector<UserId>& b) {
  std::vector<UserId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::string repeat_label(Protocol p, const std::string& extra, int r) {
  return to_string(p) + (extra.empty() ? "" : "/" + extra) + "/repeat/" + std::to_string(r);
}

std::string fraction_label(double f) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << f;
  return os.str();
}

void notify_score(HarnessObserver* observer, std::string_view method, AppId app,
                  const Eigen::VectorXd& evidence, double popularity,
                  const std::vector<UserId>& evaluated) {
  if (observer) observer->on_score(method, app, evidence, popularity, evaluated);
}

FitResult observed_fit(HarnessObserver* observer, std::string_view method,
                       const TrainingSet& ts, const std::vector<AppId>& test_apps,
                       const FitConfig& cfg) {
  if (observer) observer->on_fit(method, ts, test_apps);
  return fit_mle(ts, cfg);
}

// Standard-regime sheets: every other user's bit is evidence.
std::vector<PredictionSheet> standard_sheets(const ModelParams& params, const NetworkStack& stack,
                                             const AdoptionMatrix& adoptions,
                                             const std::vector<AppId>& test_apps,
                                             const std::vector<double>* popularity,
                                             const std::vector<UserId>& evaluated,
                                             HarnessObserver* observer, std::string_view method) {
  std::vector<PredictionSheet> sheets;
  for (const AppId a : test_apps) {
    const Eigen::VectorXd x = adoptions.indicator(a);
    const double c = popularity ? (*popularity)[a] : 0.0;
    notify_score(observer, method, a, x, c, evaluated);
    PredictionSheet sheet = score_app(params, stack, x, c, a);
    sheet.evaluated_users = evaluated;
    sheets.push_back(std::move(sheet));
  }
  return sheets;
}

std::vector<PredictionSheet> regression_sheets(const RegressionFit& fit, const NetworkStack& stack,
                                               const AdoptionMatrix& adoptions,
                                               const std::vector<AppId>& test_apps,
                                               const std::vector<double>& popularity,
                                               const std::vector<UserId>& evaluated,
                                               HarnessObserver* observer) {
  std::vector<PredictionSheet> sheets;
  for (const AppId a : test_apps) {
    const Eigen::VectorXd x = adoptions.indicator(a);
    notify_score(observer, "regression", a, x, popularity[a], evaluated);
    sheets.push_back(
        score_regression(fit.model, stack, x, popularity[a], fit.activity, evaluated, a));
  }
  return sheets;
}

std::vector<PredictionSheet> random_sheets(int num_users, std::uint64_t seed,
                                           const std::vector<AppId>& test_apps,
                                           const std::vector<UserId>& evaluated) {
  std::vector<PredictionSheet> sheets;
  for (const AppId a : test_apps) {
    sheets.push_back(random_sheet(num_users, derive_seed(seed, "random/app/" + std::to_string(a)),
                                  evaluated, {}, a));
  }
  return sheets;
}

std::vector<PredictionSheet> restrict_evaluated(std::vector<PredictionSheet> sheets,
                                                const std::vector<UserId>& subset) {
  for (auto& s : sheets) s.evaluated_users = intersect(s.evaluated_users, subset);
  return sheets;
}

// Assembles per-repeat outcomes (indexed [repeat][config]) into results.
ExperimentReport assemble(const Prepared& prep, const ExperimentSpec& spec,
                          const std::vector<std::pair<std::string, std::string>>& configs,
                          std::vector<std::vector<Outcome>>& outcomes,
                          const std::vector<std::uint64_t>& repeat_seeds) {
  ExperimentReport report;
  report.protocol = spec.protocol;
  report.spec = to_json(spec);
  report.provenance = {{"data_hash", prep.input_hash},
                       {"root_seed", spec.seed},
                       {"repeat_seeds", repeat_seeds},
                       {"num_users", prep.data.adoptions.num_users()},
                       {"num_apps_input", prep.apps_before_filter},
                       {"num_apps_used", prep.apps.size()},
                       {"networks", [&] {
                          std::vector<std::string> names;
                          for (const auto& g : prep.data.stack.networks) names.push_back(g.name());
                          return names;
                        }()}};
  for (std::size_t c = 0; c < configs.size(); ++c) {
    ConfigResult res;
    res.setting = configs[c].first;
    res.method = configs[c].second;
    for (auto& rep : outcomes) {
      res.repeats.push_back(std::move(rep[c].metrics));
      for (auto& f : rep[c].fits) res.fits.push_back(std::move(f));
      res.skipped_apps += rep[c].skipped_apps;
    }
    res.aggregate = aggregate(res.repeats);
    report.results.push_back(std::move(res));
  }
  return report;
}

std::vector<UserId> evaluated_subset(const Prepared& prep, UserSubset subset) {
  return subset == UserSubset::All ? all_users(prep.data.adoptions.num_users())
                                   : low_activity_subset(prep.data.adoptions);
}

}  // namespace

std::vector<AblationConfig> ablation_configs(const FitConfig& base) {
  std::vector<AblationConfig> out;
  out.push_back({"full", true, base});
  out.push_back({"no_exogenous", false, base});
  AblationConfig individual{"individual_only", true, base};
  individual.fit.fix_alpha_to_zero = true;
  out.push_back(individual);
  AblationConfig network{"network_only", true, base};
  network.fit.fix_s_to_zero = true;
  out.push_back(network);
  AblationConfig negative{"network_only_allow_negative", true, base};
  negative.fit.fix_s_to_zero = true;
  negative.fit.allow_negative_alpha = true;
  out.push_back(negative);
  return out;
}

ExperimentReport run_ablation(const Dataset& input, const ExperimentSpec& spec_in,
                              HarnessObserver* observer) {
  ExperimentSpec spec = spec_in;
  spec.protocol = Protocol::Ablation;
  const Prepared prep = prepare(input, spec);
  const auto& adoptions = prep.data.adoptions;
  const auto configs = ablation_configs(spec.fit);
  const auto popularity = popularity_counts(adoptions);
  const auto evaluated = evaluated_subset(prep, spec.user_subset);
  const int folds = spec.folds.value_or(5);
  if (spec.train_fraction) {
    throw Error(ErrorKind::InvalidArgument, "ablation uses folds, not train_fraction");
  }

  std::vector<std::vector<Outcome>> outcomes(spec.repeats,
                                             std::vector<Outcome>(configs.size()));
  std::vector<std::uint64_t> seeds(spec.repeats);
  for (int r = 0; r < spec.repeats; ++r) {
    seeds[r] = derive_seed(spec.seed, repeat_label(spec.protocol, "", r));
  }

  for_each_repeat(spec.repeats, spec.jobs, [&](int r) {
    std::vector<std::vector<PredictionSheet>> sheets(configs.size());
    for (const auto& [train, test] : kfold_apps(prep.apps, folds, seeds[r])) {
      for (std::size_t c = 0; c < configs.size(); ++c) {
        const auto& cfg = configs[c];
        const NetworkStack stack = cfg.popularity ? prep.data.stack.with_popularity(popularity)
                                                  : prep.data.stack;
        const TrainingSet ts = make_training_set(stack, adoptions, train);
        FitConfig fc = cfg.fit;
        fc.seed = derive_seed(seeds[r], "fit/" + cfg.name);
        const FitResult fit = observed_fit(observer, cfg.name, ts, test, fc);
        outcomes[r][c].fits.push_back(fit.record);
        auto s = standard_sheets(fit.params, stack, adoptions, test,
                                 cfg.popularity ? &popularity : nullptr, evaluated, observer,
                                 cfg.name);
        std::move(s.begin(), s.end(), std::back_inserter(sheets[c]));
      }
    }
    for (std::size_t c = 0; c < configs.size(); ++c) {
      outcomes[r][c].metrics = evaluate_sheets(sheets[c], adoptions, {5});
    }
  });

  std::vector<std::pair<std::string, std::string>> labels;
  const std::string setting = "folds=" + std::to_string(folds) + ",users=" +
                              to_string(spec.user_subset);
  for (const auto& c : configs) labels.emplace_back(setting, c.name);
  auto report = assemble(prep, spec, labels, outcomes, seeds);
  for (std::size_t c = 0; c < configs.size(); ++c) {
    report.results[c].extra["fit"] = to_json(configs[c].fit);
    report.results[c].extra["popularity"] = configs[c].popularity;
  }
  return report;
}

ExperimentReport run_comparison(const Dataset& input, const ExperimentSpec& spec_in,
                                HarnessObserver* observer) {
  ExperimentSpec spec = spec_in;
  spec.protocol = Protocol::Comparison;
  const Prepared prep = prepare(input, spec);
  const auto& adoptions = prep.data.adoptions;
  const int U = adoptions.num_users();
  const auto popularity = popularity_counts(adoptions);
  const NetworkStack full_stack = prep.data.stack.with_popularity(popularity);
  const std::vector<double> fractions =
      spec.train_fraction ? std::vector<double>{*spec.train_fraction}
                          : std::vector<double>{0.2, 0.5};
  const std::vector<UserSubset> subsets{UserSubset::All, UserSubset::LowActivity};
  const auto low_users = low_activity_subset(adoptions);
  const auto everyone = all_users(U);

  std::vector<std::string> methods{"full", "regression", "random"};
  if (spec.single_networks) {
    for (const auto& g : prep.data.stack.networks) methods.push_back("single:" + g.name());
  }
  std::vector<std::pair<std::string, std::string>> labels;
  for (const double f : fractions) {
    for (const auto subset : subsets) {
      for (const auto& m : methods) {
        labels.emplace_back("train=" + fraction_label(f) + ",users=" + to_string(subset), m);
      }
    }
  }

  std::vector<std::vector<Outcome>> outcomes(spec.repeats, std::vector<Outcome>(labels.size()));
  std::vector<std::uint64_t> seeds(spec.repeats);
  for (int r = 0; r < spec.repeats; ++r) {
    seeds[r] = derive_seed(spec.seed, repeat_label(spec.protocol, "", r));
  }

  for_each_repeat(spec.repeats, spec.jobs, [&](int r) {
    std::size_t slot = 0;
    for (const double f : fractions) {
      const std::uint64_t seed = derive_seed(seeds[r], "train=" + fraction_label(f));
      const auto [train, test] = fraction_split(prep.apps, f, seed);

      std::vector<std::vector<PredictionSheet>> sheets;
      std::vector<std::vector<ConvergenceRecord>> fits;

      const TrainingSet ts = make_training_set(full_stack, adoptions, train);
      FitConfig fc = spec.fit;
      fc.seed = derive_seed(seed, "fit/full");
      const FitResult full = observed_fit(observer, "full", ts, test, fc);
      sheets.push_back(standard_sheets(full.params, full_stack, adoptions, test, &popularity,
                                       everyone, observer, "full"));
      fits.push_back({full.record});

      if (observer) observer->on_fit("regression", ts, test);
      const RegressionFit reg = fit_regression(ts);
      sheets.push_back(
          regression_sheets(reg, full_stack, adoptions, test, popularity, everyone, observer));
      fits.emplace_back();

      sheets.push_back(random_sheets(U, derive_seed(seed, "random"), test, everyone));
      fits.emplace_back();

      if (spec.single_networks) {
        for (int m = 0; m < prep.data.stack.num_networks(); ++m) {
          const NetworkStack single = prep.data.stack.only(m);
          const std::string name = "single:" + single.networks[0].name();
          const TrainingSet ts_m = make_training_set(single, adoptions, train);
          FitConfig fm = spec.fit;
          fm.seed = derive_seed(seed, "fit/" + name);
          const FitResult fit = observed_fit(observer, name, ts_m, test, fm);
          sheets.push_back(standard_sheets(fit.params, single, adoptions, test, nullptr,
                                           everyone, observer, name));
          fits.push_back({fit.record});
        }
      }

      for (const auto subset : subsets) {
        for (std::size_t m = 0; m < methods.size(); ++m, ++slot) {
          const auto view = subset == UserSubset::All ? sheets[m]
                                                       : restrict_evaluated(sheets[m], low_users);
          outcomes[r][slot].metrics = evaluate_sheets(view, adoptions, {5});
          if (subset == UserSubset::All) outcomes[r][slot].fits = fits[m];
        }
      }
    }
  });

  return assemble(prep, spec, labels, outcomes, seeds);
}

ExperimentReport run_future(const Dataset& input, const ExperimentSpec& spec_in,
                            HarnessObserver* observer) {
  ExperimentSpec spec = spec_in;
  spec.protocol = Protocol::Future;
  const Prepared prep = prepare(input, spec);
  const auto& adoptions = prep.data.adoptions;
  if (!adoptions.has_timestamps()) {
    throw Error(ErrorKind::MissingTimestamps,
                "the future protocol needs an install timestamp on every adoption");
  }
  const int U = adoptions.num_users();
  const auto popularity = popularity_counts(adoptions);
  const NetworkStack full_stack = prep.data.stack.with_popularity(popularity);
  const double fraction = spec.train_fraction.value_or(0.5);
  const auto subset = evaluated_subset(prep, spec.user_subset);
  const std::vector<int> ks{3, 4, 5};

  const std::string setting =
      "train=" + fraction_label(fraction) + ",users=" + to_string(spec.user_subset);
  const std::vector<std::pair<std::string, std::string>> labels{
      {setting, "full"}, {setting, "regression"}, {setting, "random"}};

  std::vector<std::vector<Outcome>> outcomes(spec.repeats, std::vector<Outcome>(labels.size()));
  std::vector<std::uint64_t> seeds(spec.repeats);
  for (int r = 0; r < spec.repeats; ++r) {
    seeds[r] = derive_seed(spec.seed, repeat_label(spec.protocol, "", r));
  }

  for_each_repeat(spec.repeats, spec.jobs, [&](int r) {
    const auto [train, test] = fraction_split(prep.apps, fraction, seeds[r]);
    const TrainingSet ts = make_training_set(full_stack, adoptions, train);
    FitConfig fc = spec.fit;
    fc.seed = derive_seed(seeds[r], "fit/full");
    const FitResult full = observed_fit(observer, "full", ts, test, fc);
    if (observer) observer->on_fit("regression", ts, test);
    const RegressionFit reg = fit_regression(ts);
    const std::uint64_t random_seed = derive_seed(seeds[r], "random");

    std::vector<std::vector<PredictionSheet>> sheets(3);
    int skipped = 0;
    const auto splits = future_split(adoptions, test);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const AppId a = test[i];
      const auto& split = splits[i];
      if (split.late.empty()) {
        ++skipped;
        continue;
      }
      Eigen::VectorXd x_early = Eigen::VectorXd::Zero(U);
      for (const UserId u : split.early) x_early[u] = 1.0;
      const double visible = static_cast<double>(split.early.size());

      PredictionSheet sheet = score_future(full.params, full_stack, x_early, visible, a);
      sheet.evaluated_users = intersect(sheet.evaluated_users, subset);
      const auto evaluated = sheet.evaluated_users;
      notify_score(observer, "full", a, x_early, visible, evaluated);
      sheets[0].push_back(std::move(sheet));

      notify_score(observer, "regression", a, x_early, visible, evaluated);
      sheets[1].push_back(
          score_regression(reg.model, full_stack, x_early, visible, reg.activity, evaluated, a));
      sheets[2].push_back(random_sheet(U, derive_seed(random_seed, "app/" + std::to_string(a)),
                                       evaluated, split.early, a));
    }
    if (sheets[0].empty()) {
      throw Error(ErrorKind::NoPositives, "every test app has an empty late adopter group");
    }
    for (std::size_t m = 0; m < sheets.size(); ++m) {
      outcomes[r][m].metrics = evaluate_sheets(sheets[m], adoptions, ks);
      outcomes[r][m].skipped_apps = skipped;
    }
    outcomes[r][0].fits = {full.record};
  });

  return assemble(prep, spec, labels, outcomes, seeds);
}

ExperimentReport run_transfer(const Dataset& input, const ExperimentSpec& spec_in,
                              HarnessObserver* observer) {
  ExperimentSpec spec = spec_in;
  spec.protocol = Protocol::Transfer;
  const Prepared prep = prepare(input, spec);
  const auto& adoptions = prep.data.adoptions;
  const int U = adoptions.num_users();
  const double fraction = spec.train_fraction.value_or(0.5);
  const auto subset = evaluated_subset(prep, spec.user_subset);

  const std::string setting = "train=" + fraction_label(fraction) + ",observable=" +
                              fraction_label(spec.observable_fraction) + ",users=" +
                              to_string(spec.user_subset);
  const std::vector<std::pair<std::string, std::string>> labels{{setting, "full_mean"},
                                                                {setting, "full_zero"},
                                                                {setting, "regression"},
                                                                {setting, "random"}};

  std::vector<std::vector<Outcome>> outcomes(spec.repeats, std::vector<Outcome>(labels.size()));
  std::vector<std::uint64_t> seeds(spec.repeats);
  for (int r = 0; r < spec.repeats; ++r) {
    seeds[r] = derive_seed(spec.seed, repeat_label(spec.protocol, "", r));
  }

  for_each_repeat(spec.repeats, spec.jobs, [&](int r) {
    const UserSplit users =
        observable_user_split(U, spec.observable_fraction, derive_seed(seeds[r], "users"));
    const auto [train, test] = fraction_split(prep.apps, fraction, derive_seed(seeds[r], "apps"));
    const auto visible_pop = popularity_counts(adoptions, users.observable);
    const NetworkStack stack = prep.data.stack.with_popularity(visible_pop);

    ObservationMask mask;
    mask.evidence_users = users.observable;
    mask.likelihood_users = users.observable;
    const TrainingSet ts = make_training_set(stack, adoptions, train, mask);
    FitConfig fc = spec.fit;
    fc.seed = derive_seed(seeds[r], "fit/full");
    const FitResult full = observed_fit(observer, "full", ts, test, fc);
    if (observer) observer->on_fit("regression", ts, test);
    RegressionFit reg = fit_regression(ts);
    {
      double mean_activity = 0.0;
      for (const UserId u : users.observable) mean_activity += reg.activity[u];
      mean_activity /= static_cast<double>(users.observable.size());
      for (const UserId u : users.unobservable) reg.activity[u] = mean_activity;
    }
    const std::uint64_t random_seed = derive_seed(seeds[r], "random");
    const auto evaluated = intersect(users.unobservable, subset);

    std::vector<std::vector<PredictionSheet>> sheets(4);
    std::vector<std::size_t> late_counts;
    int skipped = 0;
    for (const AppId a : test) {
      std::size_t positives = 0;
      for (const UserId u : adoptions.adopters(a)) {
        positives += std::binary_search(evaluated.begin(), evaluated.end(), u) ? 1 : 0;
      }
      if (positives == 0 || evaluated.empty()) {
        ++skipped;
        continue;
      }
      late_counts.push_back(positives);
      Eigen::VectorXd evidence = Eigen::VectorXd::Zero(U);
      for (const UserId u : adoptions.adopters(a)) {
        if (std::binary_search(users.observable.begin(), users.observable.end(), u)) {
          evidence[u] = 1.0;
        }
      }
      const double c = visible_pop[a];
      for (const auto mode : {Imputation::Mean, Imputation::Zero}) {
        const std::string method = "full_" + to_string(mode);
        notify_score(observer, method, a, evidence, c, evaluated);
        PredictionSheet sheet = score_transfer(full.params, stack, evidence, users.observable,
                                               users.unobservable, mode, c, a);
        sheet.evaluated_users = evaluated;
        sheets[mode == Imputation::Mean ? 0 : 1].push_back(std::move(sheet));
      }
      notify_score(observer, "regression", a, evidence, c, evaluated);
      sheets[2].push_back(
          score_regression(reg.model, stack, evidence, c, reg.activity, evaluated, a));
      sheets[3].push_back(random_sheet(U, derive_seed(random_seed, "app/" + std::to_string(a)),
                                       evaluated, {}, a));
    }
    if (sheets[0].empty()) {
      throw Error(ErrorKind::NoPositives, "no test app has an unobservable adopter");
    }
    const int k = transfer_k(late_counts);
    for (std::size_t m = 0; m < sheets.size(); ++m) {
      auto& out = outcomes[r][m];
      out.metrics = evaluate_sheets(sheets[m], adoptions, {5});
      out.metrics.named["k_rule"] = k;
      out.metrics.named["mp_k_rule"] = mean_precision_at_k(sheets[m], adoptions, k).value;
      out.skipped_apps = skipped;
    }
    outcomes[r][0].fits = {full.record};
  });

  return assemble(prep, spec, labels, outcomes, seeds);
}

ExperimentReport run_experiment(const Dataset& data, const ExperimentSpec& spec,
                                HarnessObserver* observer) {
  switch (spec.protocol) {
    case Protocol::Ablation: return run_ablation(data, spec, observer);
    case Protocol::Comparison: return run_comparison(data, spec, observer);
    case Protocol::Future: return run_future(data, spec, observer);
    case Protocol::Transfer: return run_transfer(data, spec, observer);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown protocol");
}

}  // namespace appnet
