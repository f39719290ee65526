#include "cli.hpp"

#include "appnet/error.hpp"
#include "appnet/harness.hpp"
#include "appnet/hash.hpp"
#include "appnet/model.hpp"
#include "appnet/netdata.hpp"
#include "appnet/predict.hpp"
#include "appnet/solver.hpp"
#include "appnet/synthgen.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace appnet::cli {

namespace {

enum class ValueType { Int, UInt, Real, Bool, Text, Path, List, RealList };

struct KeyInfo {
  ValueType type;
  std::vector<std::string> choices;  // allowed values for enumerated text keys
};

const std::map<std::string, KeyInfo>& static_keys() {
  static const std::map<std::string, KeyInfo> keys = {
      {"networks", {ValueType::List, {}}},
      {"adoptions", {ValueType::Path, {}}},
      {"num_users", {ValueType::Int, {}}},
      {"num_apps", {ValueType::Int, {}}},
      {"normalize", {ValueType::Text, {"none", "max", "total"}}},
      {"symmetrize", {ValueType::Text, {"sum", "max", "strict"}}},
      {"popularity", {ValueType::Bool, {}}},
      {"min_users", {ValueType::Int, {}}},
      {"params", {ValueType::Path, {}}},
      {"apps", {ValueType::List, {}}},
      {"protocol", {ValueType::Text, {"ablation", "comparison", "future", "transfer"}}},
      {"train_fraction", {ValueType::Real, {}}},
      {"folds", {ValueType::Int, {}}},
      {"repeats", {ValueType::Int, {}}},
      {"seed", {ValueType::UInt, {}}},
      {"user_subset", {ValueType::Text, {"all", "low_activity"}}},
      {"observable_fraction", {ValueType::Real, {}}},
      {"single_networks", {ValueType::Bool, {}}},
      {"jobs", {ValueType::Int, {}}},
      {"max_iters", {ValueType::Int, {}}},
      {"grad_tol", {ValueType::Real, {}}},
      {"obj_tol", {ValueType::Real, {}}},
      {"init_alpha", {ValueType::Real, {}}},
      {"init_s", {ValueType::Real, {}}},
      {"allow_negative_alpha", {ValueType::Bool, {}}},
      {"fix_s_to_zero", {ValueType::Bool, {}}},
      {"fix_alpha_to_zero", {ValueType::Bool, {}}},
      {"diagonal_scaling", {ValueType::Bool, {}}},
      {"random_init", {ValueType::Bool, {}}},
      {"outdir", {ValueType::Path, {}}},
      {"run_id", {ValueType::Text, {}}},
      {"num_context_users", {ValueType::Int, {}}},
      {"num_networks", {ValueType::Int, {}}},
      {"density", {ValueType::RealList, {}}},
      {"weights", {ValueType::Text, {"uniform", "unit"}}},
      {"w_max", {ValueType::Real, {}}},
      {"alpha", {ValueType::RealList, {}}},
      {"alpha_pop", {ValueType::Real, {}}},
      {"s_rate", {ValueType::Real, {}}},
      {"popularity_mean", {ValueType::Real, {}}},
  };
  return keys;
}

const std::map<std::string, KeyInfo>& network_keys() {
  static const std::map<std::string, KeyInfo> keys = {
      {"path", {ValueType::Path, {}}},
      {"kind", {ValueType::Text, {"weighted", "binary"}}},
      {"normalize", {ValueType::Text, {"none", "max", "total"}}},
      {"symmetrize", {ValueType::Text, {"sum", "max", "strict"}}},
  };
  return keys;
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::optional<bool> parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  return std::nullopt;
}

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::Int: return "an integer";
    case ValueType::UInt: return "a non-negative integer";
    case ValueType::Real: return "a number";
    case ValueType::Bool: return "true or false";
    case ValueType::Text: return "text";
    case ValueType::Path: return "a path";
    case ValueType::List: return "a comma-separated list";
    case ValueType::RealList: return "a comma-separated list of numbers";
  }
  return "a value";
}

bool value_ok(const KeyInfo& info, const std::string& value) {
  switch (info.type) {
    case ValueType::Int: return parse_number<long long>(value).has_value();
    case ValueType::UInt: return parse_number<unsigned long long>(value).has_value();
    case ValueType::Real: return parse_number<double>(value).has_value();
    case ValueType::Bool: return parse_bool(value).has_value();
    case ValueType::Path: return !value.empty();
    case ValueType::List: return true;
    case ValueType::RealList:
      for (const auto& item : split_list(value)) {
        if (!parse_number<double>(item)) return false;
      }
      return true;
    case ValueType::Text:
      return info.choices.empty() ||
             std::find(info.choices.begin(), info.choices.end(), value) != info.choices.end();
  }
  return false;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::optional<std::string> suggest_key(const std::string& key,
                                       const std::vector<std::string>& known) {
  std::optional<std::string> best;
  std::size_t best_distance = std::max<std::size_t>(2, key.size() / 3) + 1;
  for (const auto& candidate : known) {
    const auto d = edit_distance(key, candidate);
    if (d < best_distance) {
      best_distance = d;
      best = candidate;
    }
  }
  return best;
}

RunConfig RunConfig::parse(const std::string& text, fs::path base_dir) {
  RunConfig cfg;
  cfg.base_dir_ = std::move(base_dir);
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string stripped = trim(raw);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line) + ": empty key");
    if (cfg.values_.count(key)) {
      throw ConfigError("config line " + std::to_string(line) + ": duplicate key '" + key + "'");
    }
    cfg.values_[key] = trim(std::string_view(stripped).substr(eq + 1));
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), file.parent_path());
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = trim(std::string_view(assignment).substr(0, eq));
  if (key.empty()) throw ConfigError("--set with an empty key");
  values_[key] = trim(std::string_view(assignment).substr(eq + 1));
}

void RunConfig::check() const {
  const auto networks = list("networks");
  std::set<std::string> names;
  for (const auto& n : networks) {
    if (!names.insert(n).second) throw ConfigError("network '" + n + "' listed twice");
  }
  std::vector<std::string> known;
  for (const auto& [k, unused] : static_keys()) known.push_back(k);
  for (const auto& n : networks) {
    for (const auto& [k, unused] : network_keys()) known.push_back("network." + n + "." + k);
  }

  std::vector<std::string> problems;
  for (const auto& [key, value] : values_) {
    const KeyInfo* info = nullptr;
    if (const auto it = static_keys().find(key); it != static_keys().end()) {
      info = &it->second;
    } else if (key.rfind("network.", 0) == 0) {
      const auto dot = key.rfind('.');
      const std::string name = key.substr(8, dot > 8 ? dot - 8 : 0);
      const std::string field = key.substr(dot + 1);
      const auto it2 = network_keys().find(field);
      if (names.count(name) && it2 != network_keys().end()) info = &it2->second;
    }
    if (!info) {
      std::string msg = "unknown key '" + key + "'";
      if (const auto hint = suggest_key(key, known)) msg += " (did you mean '" + *hint + "'?)";
      problems.push_back(msg);
      continue;
    }
    if (!value_ok(*info, value)) {
      std::string msg = "key '" + key + "': '" + value + "' is not " + type_name(info->type);
      if (!info->choices.empty()) msg = "key '" + key + "': expected one of " + join(info->choices, ", ");
      problems.push_back(msg);
    }
  }
  for (const auto& n : networks) {
    if (!has("network." + n + ".path")) problems.push_back("network '" + n + "' has no path");
  }
  if (!problems.empty()) throw ConfigError(join(problems, "\n"));
}

std::string RunConfig::text(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string RunConfig::required(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

std::optional<long long> RunConfig::integer(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  const auto v = parse_number<long long>(values_.at(key));
  if (!v) throw ConfigError("key '" + key + "' must be an integer");
  return v;
}

std::optional<double> RunConfig::real(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  const auto v = parse_number<double>(values_.at(key));
  if (!v) throw ConfigError("key '" + key + "' must be a number");
  return v;
}

std::optional<bool> RunConfig::boolean(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  const auto v = parse_bool(values_.at(key));
  if (!v) throw ConfigError("key '" + key + "' must be true or false");
  return v;
}

std::vector<std::string> RunConfig::list(const std::string& key) const {
  return has(key) ? split_list(values_.at(key)) : std::vector<std::string>{};
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : list(key)) {
    const auto v = parse_number<double>(item);
    if (!v) throw ConfigError("key '" + key + "': '" + item + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

fs::path RunConfig::path(const std::string& key) const {
  const fs::path p = required(key);
  return p.is_absolute() ? p : base_dir_ / p;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

// Data/config failures map to exit 2; this wrapper marks appnet errors raised
// while loading inputs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p, const std::string& key) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("key '" + key + "': cannot read " + p.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

// Largest integer in each of the first `columns` fields over data lines.
std::vector<long long> max_ids(const std::string& text, int columns) {
  std::vector<long long> best(columns, -1);
  std::istringstream in(text);
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_list(line);
    for (int c = 0; c < columns && c < static_cast<int>(fields.size()); ++c) {
      if (const auto v = parse_number<long long>(fields[c])) best[c] = std::max(best[c], *v);
    }
  }
  return best;
}

struct Inputs {
  Dataset data;
  nlohmann::json files = nlohmann::json::array();
};

Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  const auto names = cfg.list("networks");
  struct Raw {
    std::string name;
    std::string text;
  };
  std::vector<Raw> raw_networks;
  for (const auto& n : names) {
    const std::string key = "network." + n + ".path";
    raw_networks.push_back({n, read_file(cfg.path(key), key)});
    in.files.push_back({{"key", key},
                        {"path", cfg.text(key, "")},
                        {"sha256", sha256_hex(raw_networks.back().text)}});
  }
  const std::string adoption_text = read_file(cfg.path("adoptions"), "adoptions");
  in.files.push_back({{"key", "adoptions"},
                      {"path", cfg.text("adoptions", "")},
                      {"sha256", sha256_hex(adoption_text)}});

  long long num_users = cfg.integer("num_users").value_or(-1);
  long long num_apps = cfg.integer("num_apps").value_or(-1);
  if (num_users < 0 || num_apps < 0) {
    const auto ad = max_ids(adoption_text, 2);
    long long users = ad[0];
    for (const auto& r : raw_networks) {
      const auto m = max_ids(r.text, 2);
      users = std::max({users, m[0], m[1]});
    }
    if (num_users < 0) num_users = users + 1;
    if (num_apps < 0) num_apps = ad[1] + 1;
  }
  if (num_users < 1) throw ConfigError("cannot infer num_users; set it explicitly");
  if (num_apps < 1) throw ConfigError("cannot infer num_apps; set it explicitly");

  const auto global_norm = cfg.text("normalize", "max");
  const auto global_sym = cfg.text("symmetrize", "");
  std::vector<CandidateNetwork> networks;
  for (const auto& r : raw_networks) {
    const std::string prefix = "network." + r.name + ".";
    const NetworkKind kind = parse_network_kind(cfg.text(prefix + "kind", "weighted"));
    const std::string sym_default =
        global_sym.empty() ? (kind == NetworkKind::Binary ? "max" : "sum") : global_sym;
    const Symmetrize sym = parse_symmetrize(cfg.text(prefix + "symmetrize", sym_default));
    const Normalization norm = parse_normalization(cfg.text(prefix + "normalize", global_norm));
    std::istringstream stream(r.text);
    try {
      networks.push_back(normalize_network(
          load_network_edge_list(stream, static_cast<int>(num_users), kind, sym, r.name), norm));
    } catch (const Error& e) {
      throw DataError(prefix + "path (" + cfg.text(prefix + "path", "") + "): " + e.what());
    }
  }
  std::istringstream stream(adoption_text);
  try {
    in.data.adoptions =
        load_adoptions(stream, static_cast<int>(num_users), static_cast<int>(num_apps));
  } catch (const Error& e) {
    throw DataError("adoptions (" + cfg.text("adoptions", "") + "): " + e.what());
  }
  in.data.stack = NetworkStack(std::move(networks));
  return in;
}

std::uint64_t root_seed(const RunConfig& cfg) {
  if (!cfg.has("seed")) return 0;
  const auto v = parse_number<unsigned long long>(cfg.text("seed", ""));
  if (!v) throw ConfigError("key 'seed' must be a non-negative integer");
  return *v;
}

FitConfig fit_config(const RunConfig& cfg) {
  FitConfig fit;
  if (auto v = cfg.integer("max_iters")) fit.max_iters = static_cast<int>(*v);
  if (auto v = cfg.real("grad_tol")) fit.grad_tol = *v;
  if (auto v = cfg.real("obj_tol")) fit.obj_tol = *v;
  if (auto v = cfg.real("init_alpha")) fit.init_alpha = *v;
  if (auto v = cfg.real("init_s")) fit.init_s = *v;
  if (auto v = cfg.boolean("allow_negative_alpha")) fit.allow_negative_alpha = *v;
  if (auto v = cfg.boolean("fix_s_to_zero")) fit.fix_s_to_zero = *v;
  if (auto v = cfg.boolean("fix_alpha_to_zero")) fit.fix_alpha_to_zero = *v;
  if (auto v = cfg.boolean("diagonal_scaling")) fit.diagonal_scaling = *v;
  if (auto v = cfg.boolean("random_init")) fit.random_init = *v;
  fit.seed = root_seed(cfg);
  try {
    fit.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return fit;
}

ExperimentSpec experiment_spec(const RunConfig& cfg) {
  ExperimentSpec spec;
  try {
    spec.protocol = parse_protocol(cfg.required("protocol"));
    if (auto v = cfg.real("train_fraction")) spec.train_fraction = *v;
    if (auto v = cfg.integer("folds")) spec.folds = static_cast<int>(*v);
    if (auto v = cfg.integer("min_users")) spec.min_users = static_cast<int>(*v);
    if (auto v = cfg.integer("repeats")) spec.repeats = static_cast<int>(*v);
    spec.seed = root_seed(cfg);
    spec.fit = fit_config(cfg);
    spec.user_subset = parse_user_subset(cfg.text("user_subset", "all"));
    if (auto v = cfg.real("observable_fraction")) spec.observable_fraction = *v;
    if (auto v = cfg.boolean("single_networks")) spec.single_networks = *v;
    if (auto v = cfg.integer("jobs")) spec.jobs = static_cast<int>(*v);
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

SynthSpec synth_spec(const RunConfig& cfg) {
  SynthSpec spec;
  if (auto v = cfg.integer("num_users")) spec.num_users = static_cast<int>(*v);
  if (auto v = cfg.integer("num_context_users")) spec.num_context_users = static_cast<int>(*v);
  if (auto v = cfg.integer("num_apps")) spec.num_apps = static_cast<int>(*v);
  if (auto v = cfg.integer("num_networks")) spec.num_networks = static_cast<int>(*v);
  if (cfg.has("density")) spec.edge_density = cfg.reals("density");
  if (cfg.has("weights")) {
    spec.weights = cfg.text("weights", "") == "unit" ? WeightDistribution::Unit
                                                     : WeightDistribution::Uniform;
  }
  if (auto v = cfg.real("w_max")) spec.w_max = *v;
  if (cfg.has("alpha")) {
    spec.planted_alpha = cfg.reals("alpha");
  } else if (spec.num_networks != static_cast<int>(spec.planted_alpha.size())) {
    spec.planted_alpha.resize(spec.num_networks, 0.0);
  }
  if (auto v = cfg.real("alpha_pop")) spec.planted_alpha_pop = *v;
  if (auto v = cfg.real("s_rate")) spec.s_rate = *v;
  if (auto v = cfg.real("popularity_mean")) spec.popularity_mean = *v;
  spec.seed = cfg.has("seed") ? root_seed(cfg) : spec.seed;
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

// Output directory `<outdir>/<run-id>/` plus the manifest written last.
class RunDir {
 public:
  RunDir(const RunConfig& cfg, const std::string& command, const std::string& data_hash)
      : command_(command), data_hash_(data_hash), config_(cfg) {
    std::string id = cfg.text("run_id", "");
    if (id.empty()) {
      // Keys that do not change results stay out of the default id.
      std::string material = command + "\n" + data_hash + "\n";
      for (const auto& [k, v] : cfg.values()) {
        if (k != "outdir" && k != "run_id" && k != "jobs") material += k + " = " + v + "\n";
      }
      id = command + "-" + sha256_hex(material).substr(0, 16);
    }
    if (id.find('/') != std::string::npos || id == "." || id == "..") {
      throw ConfigError("run_id must be a plain directory name");
    }
    id_ = id;
    dir_ = (cfg.has("outdir") ? cfg.path("outdir") : fs::path("runs")) / id;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir_.string());
  }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    outputs_.push_back({{"file", name}, {"sha256", sha256_hex(content)}});
  }

  void finish(const nlohmann::json& inputs, const nlohmann::json& seeds) {
    nlohmann::json config = nlohmann::json::object();
    for (const auto& [k, v] : config_.values()) config[k] = v;
    const nlohmann::json manifest = {{"tool", "appnet"},
                                     {"version", kVersion},
                                     {"command", command_},
                                     {"run_id", id_},
                                     {"config", config},
                                     {"config_sha256", sha256_hex(config_.canonical())},
                                     {"inputs", inputs},
                                     {"data_hash", data_hash_},
                                     {"seeds", seeds},
                                     {"outputs", outputs_}};
    std::ofstream out(dir_ / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
  }

 private:
  std::string command_;
  std::string data_hash_;
  const RunConfig& config_;
  std::string id_;
  fs::path dir_;
  nlohmann::json outputs_ = nlohmann::json::array();
};

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

NetworkStack with_popularity_if(const RunConfig& cfg, const NetworkStack& stack,
                                const AdoptionMatrix& adoptions) {
  return cfg.boolean("popularity").value_or(true)
             ? stack.with_popularity(popularity_counts(adoptions))
             : stack.without_popularity();
}

void print_summary(const Dataset& data, std::ostream& out) {
  const DatasetStats stats = dataset_stats(data.adoptions);
  out << "users: " << stats.num_users << "\n"
      << "apps: " << stats.num_apps << "\n"
      << "installs: " << stats.num_installs << "\n"
      << "mean apps per user: " << stats.mean_apps_per_user << "\n"
      << "exp rate: " << stats.exp_rate << "\n"
      << "timestamps: " << (data.adoptions.has_timestamps() ? "yes" : "no") << "\n";
  for (const auto& g : data.stack.networks) {
    out << "network " << g.name() << ": " << g.num_edges() << " edges, kind "
        << to_string(g.kind()) << ", max weight " << g.max_weight() << "\n";
  }
}

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  print_summary(in.data, out);
  out << "valid\n";
  return kExitOk;
}

int cmd_stats(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  out << dump(to_json(dataset_stats(in.data.adoptions)));
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const FitConfig fit = fit_config(cfg);
  const int min_users = static_cast<int>(cfg.integer("min_users").value_or(0));
  const AdoptionMatrix adoptions =
      min_users > 0 ? filter_min_users(in.data.adoptions, min_users).matrix : in.data.adoptions;
  const NetworkStack stack = with_popularity_if(cfg, in.data.stack, adoptions);
  std::vector<AppId> apps(adoptions.num_apps());
  std::iota(apps.begin(), apps.end(), 0);

  RunDir run(cfg, "train", in.data.content_hash());
  const TrainingSet ts = make_training_set(stack, adoptions, apps);
  const FitResult result = fit_mle(ts, fit);
  run.write("params.json", dump(to_json(result.params)));
  nlohmann::json convergence = to_json(result.record);
  convergence["objective_trace"] = result.record.objective_trace;
  convergence["fit"] = to_json(fit);
  run.write("convergence.json", dump(convergence));
  run.finish(in.files, {{"root", fit.seed}});
  out << "objective " << result.record.final_objective << " after "
      << result.record.iterations << " iterations (" << result.record.stop_reason << ")\n"
      << run.dir().string() << "\n";
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  const Inputs in = load_inputs(cfg);
  const ModelParams params = [&] {
    try {
      return params_from_json(nlohmann::json::parse(read_file(cfg.path("params"), "params")));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("params: ") + e.what());
    } catch (const Error& e) {
      throw ConfigError(std::string("params: ") + e.what());
    }
  }();
  const auto& adoptions = in.data.adoptions;
  if (params.num_users() != adoptions.num_users() ||
      params.num_networks() != in.data.stack.num_networks()) {
    throw ConfigError("params do not match the data (users or networks differ)");
  }
  const auto popularity = popularity_counts(adoptions);
  std::vector<AppId> apps;
  for (const auto& item : cfg.list("apps")) {
    const auto a = parse_number<int>(item);
    if (!a || *a < 0 || *a >= adoptions.num_apps()) {
      throw ConfigError("apps: '" + item + "' is not an app id");
    }
    apps.push_back(*a);
  }
  if (apps.empty()) {
    apps.resize(adoptions.num_apps());
    std::iota(apps.begin(), apps.end(), 0);
  }
  RunDir run(cfg, "predict", in.data.content_hash());
  std::vector<PredictionSheet> sheets;
  for (const AppId a : apps) {
    sheets.push_back(score_app(params, in.data.stack, adoptions.indicator(a), popularity[a], a));
  }
  std::ostringstream csv;
  write_sheets_csv(sheets, csv);
  run.write("predictions.csv", csv.str());
  nlohmann::json inputs = in.files;
  inputs.push_back({{"key", "params"},
                    {"path", cfg.text("params", "")},
                    {"sha256", sha256_hex(read_file(cfg.path("params"), "params"))}});
  run.finish(inputs, {{"root", root_seed(cfg)}});
  out << sheets.size() << " apps scored\n" << run.dir().string() << "\n";
  return kExitOk;
}

int cmd_experiment(const RunConfig& cfg, std::ostream& out) {
  const ExperimentSpec spec = experiment_spec(cfg);
  const Inputs in = load_inputs(cfg);
  RunDir run(cfg, "experiment", in.data.content_hash());
  const ExperimentReport report = run_experiment(in.data, spec);
  run.write("report.json", dump(to_json(report)));
  std::ostringstream csv;
  write_report_csv(report, csv);
  run.write("report.csv", csv.str());
  run.finish(in.files, {{"root", spec.seed}, {"repeats", report.provenance["repeat_seeds"]}});
  for (const auto& r : report.results) {
    out << r.label() << ": F1 " << r.aggregate.optimal_f1;
    if (r.aggregate.mp_at_k.count(5)) out << ", MP-5 " << r.aggregate.mp_at_k.at(5);
    out << ", RMSE " << r.aggregate.rmse << "\n";
  }
  out << run.dir().string() << "\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  const SynthSpec spec = synth_spec(cfg);
  const SynthBundle bundle = make_synth_bundle(spec);
  RunDir run(cfg, "synth", "");
  for (const auto& g : bundle.stack.networks) {
    std::ostringstream text;
    write_edge_list(g, text);
    run.write(g.name() + ".csv", text.str());
  }
  std::ostringstream adoptions;
  write_adoptions(bundle.teacher.adoptions, adoptions);
  run.write("adoptions.csv", adoptions.str());
  const nlohmann::json planted = {{"spec", to_json(spec)},
                                  {"params", to_json(bundle.planted)},
                                  {"context_users", bundle.teacher.context_users},
                                  {"target_users", bundle.teacher.target_users},
                                  {"base_popularity", bundle.teacher.base_popularity}};
  run.write("planted.json", dump(planted));
  run.finish(nlohmann::json::array(), {{"root", spec.seed}});
  const auto counts = bundle.teacher.adoptions.users_per_app();
  out << std::accumulate(counts.begin(), counts.end(), 0LL) << " adoptions over " << spec.num_apps
      << " apps\n" << run.dir().string() << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Composite-network app adoption modelling", "appnet"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Common {
    std::string config;
    std::vector<std::string> sets;
    int jobs = 0;
    std::string outdir;
    bool no_normalize = false;
  };
  Common common;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validate", "Check the config and data files, print a summary"},
      {"stats", "Print dataset statistics as JSON"},
      {"train", "Fit the model on every app and write params.json"},
      {"predict", "Score users for apps with a trained params file"},
      {"experiment", "Run an evaluation protocol and write reports"},
      {"synth", "Write a synthetic dataset with planted parameters"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", common.config, "Config file of key = value lines");
    sub->add_option("--set", common.sets, "Override a config key (key=value)")
        ->allow_extra_args(false);
    sub->add_option("--jobs", common.jobs, "Worker threads for repeats")
        ->check(CLI::PositiveNumber);
    sub->add_option("--outdir", common.outdir, "Output root directory");
    sub->add_flag("--no-normalize", common.no_normalize,
                  "Keep raw network weights (same as normalize = none)");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  RunConfig cfg;
  try {
    cfg = common.config.empty() ? RunConfig::parse("", fs::current_path())
                                : RunConfig::load(common.config);
    for (const auto& s : common.sets) cfg.set(s);
    if (common.jobs > 0) cfg.set("jobs=" + std::to_string(common.jobs));
    if (!common.outdir.empty()) cfg.set("outdir=" + fs::absolute(common.outdir).string());
    if (common.no_normalize) cfg.set("normalize=none");
    cfg.check();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (command == "validate") return cmd_validate(cfg, out);
    if (command == "stats") return cmd_stats(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "predict") return cmd_predict(cfg, out);
    if (command == "experiment") return cmd_experiment(cfg, out);
    if (command == "synth") return cmd_synth(cfg, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "error: unknown command\n";
  return kExitConfig;
}

}  // namespace appnet::cli
