#include "appnet/netdata.hpp"

#include "appnet/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <tuple>

namespace appnet {

NetworkKind parse_network_kind(const std::string& text) {
  if (text == "weighted") return NetworkKind::Weighted;
  if (text == "binary") return NetworkKind::Binary;
  throw Error(ErrorKind::InvalidArgument, "unknown network kind '" + text + "'");
}

Symmetrize parse_symmetrize(const std::string& text) {
  if (text == "sum") return Symmetrize::Sum;
  if (text == "max") return Symmetrize::Max;
  if (text == "strict") return Symmetrize::Strict;
  throw Error(ErrorKind::InvalidArgument, "unknown symmetrize mode '" + text + "'");
}

Normalization parse_normalization(const std::string& text) {
  if (text == "none") return Normalization::None;
  if (text == "max") return Normalization::Max;
  if (text == "total") return Normalization::Total;
  throw Error(ErrorKind::InvalidArgument, "unknown normalization '" + text + "'");
}

std::string to_string(NetworkKind kind) {
  return kind == NetworkKind::Binary ? "binary" : "weighted";
}

std::string to_string(Symmetrize mode) {
  switch (mode) {
    case Symmetrize::Sum: return "sum";
    case Symmetrize::Max: return "max";
    case Symmetrize::Strict: return "strict";
  }
  return "sum";
}

std::string to_string(Normalization mode) {
  switch (mode) {
    case Normalization::None: return "none";
    case Normalization::Max: return "max";
    case Normalization::Total: return "total";
  }
  return "none";
}

// ---------------------------------------------------------------------------
// CandidateNetwork

CandidateNetwork::CandidateNetwork(Matrix weights, std::string name, NetworkKind kind)
    : weights_(std::move(weights)), name_(std::move(name)), kind_(kind) {
  if (weights_.rows() != weights_.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "network '" + name_ + "' is not square");
  }
  weights_.prune(0.0);
  weights_.makeCompressed();
  for (int k = 0; k < weights_.outerSize(); ++k) {
    for (Matrix::InnerIterator it(weights_, k); it; ++it) {
      const auto i = static_cast<int>(it.row());
      const auto j = static_cast<int>(it.col());
      const double w = it.value();
      if (!std::isfinite(w)) {
        throw Error(ErrorKind::NonFinite, "network '" + name_ + "' has a non-finite weight");
      }
      if (w < 0.0) {
        throw Error(ErrorKind::NegativeWeight, "network '" + name_ + "' has weight " +
                                                   std::to_string(w) + " at (" +
                                                   std::to_string(i) + "," +
                                                   std::to_string(j) + ")");
      }
      if (i == j) {
        throw Error(ErrorKind::SelfLoop,
                    "network '" + name_ + "' has a self-loop at " + std::to_string(i));
      }
      if (weights_.coeff(j, i) != w) {
        throw Error(ErrorKind::Asymmetric, "network '" + name_ + "' is asymmetric at (" +
                                               std::to_string(i) + "," +
                                               std::to_string(j) + ")");
      }
      if (kind_ == NetworkKind::Binary && w != 1.0) {
        throw Error(ErrorKind::NonBinaryWeight,
                    "binary network '" + name_ + "' has weight " + std::to_string(w));
      }
    }
  }
}

CandidateNetwork CandidateNetwork::from_edges(int num_users, const std::vector<Edge>& edges,
                                              std::string name, NetworkKind kind) {
  if (num_users <= 0) {
    throw Error(ErrorKind::InvalidArgument, "num_users must be positive");
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    if (e.a < 0 || e.a >= num_users || e.b < 0 || e.b >= num_users) {
      throw Error(ErrorKind::IdOutOfRange, "edge (" + std::to_string(e.a) + "," +
                                               std::to_string(e.b) + ") out of range");
    }
    triplets.emplace_back(e.a, e.b, e.weight);
    triplets.emplace_back(e.b, e.a, e.weight);
  }
  Matrix w(num_users, num_users);
  w.setFromTriplets(triplets.begin(), triplets.end());
  return CandidateNetwork(std::move(w), std::move(name), kind);
}

std::size_t CandidateNetwork::num_edges() const {
  return static_cast<std::size_t>(weights_.nonZeros()) / 2;
}

double CandidateNetwork::max_weight() const {
  double m = 0.0;
  for (int k = 0; k < weights_.nonZeros(); ++k) m = std::max(m, weights_.valuePtr()[k]);
  return m;
}

double CandidateNetwork::total_weight() const {
  // Each undirected edge counted once.
  double s = 0.0;
  for (int k = 0; k < weights_.outerSize(); ++k) {
    for (Matrix::InnerIterator it(weights_, k); it; ++it) {
      if (it.row() < it.col()) s += it.value();
    }
  }
  return s;
}

CandidateNetwork CandidateNetwork::scaled(double factor) const {
  if (!(factor >= 0.0) || !std::isfinite(factor)) {
    throw Error(ErrorKind::InvalidArgument, "scale factor must be finite and non-negative");
  }
  Matrix w = weights_ * factor;
  const NetworkKind k = (kind_ == NetworkKind::Binary && factor == 1.0)
                            ? NetworkKind::Binary
                            : NetworkKind::Weighted;
  return CandidateNetwork(std::move(w), name_, k);
}

CandidateNetwork CandidateNetwork::renamed(std::string name) const {
  CandidateNetwork copy = *this;
  copy.name_ = std::move(name);
  return copy;
}

CandidateNetwork normalize_network(const CandidateNetwork& g, Normalization mode) {
  double divisor = 1.0;
  switch (mode) {
    case Normalization::None: return g;
    case Normalization::Max: divisor = g.max_weight(); break;
    case Normalization::Total: divisor = g.total_weight(); break;
  }
  if (divisor <= 0.0 || divisor == 1.0) return g;
  return g.scaled(1.0 / divisor);
}

// ---------------------------------------------------------------------------
// Text parsing helpers

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_integer(std::string_view field, std::size_t line, const char* what) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw Error(ErrorKind::ParseError,
                std::string("cannot parse ") + what + " '" + std::string(field) + "'", line);
  }
  return value;
}

double parse_real(std::string_view field, std::size_t line) {
  // std::from_chars for double is unavailable on older libstdc++.
  std::string copy(field);
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(copy, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (copy.empty() || used != copy.size() || !std::isfinite(value)) {
    throw Error(ErrorKind::ParseError, "cannot parse weight '" + copy + "'", line);
  }
  return value;
}

bool is_skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

std::string format_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

CandidateNetwork load_network_edge_list(std::istream& in, int num_users, NetworkKind kind,
                                        Symmetrize symmetrize, std::string name) {
  if (num_users <= 0) {
    throw Error(ErrorKind::InvalidArgument, "num_users must be positive");
  }
  struct Directed {
    double weight;
    std::size_t line;
  };
  std::map<std::pair<UserId, UserId>, Directed> directed;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (is_skippable(raw)) continue;
    const auto fields = split_fields(trim(raw));
    if (fields.size() < 2 || fields.size() > 3) {
      throw Error(ErrorKind::ParseError, "expected src,dst[,weight]", line_no);
    }
    const auto src = parse_integer<long long>(fields[0], line_no, "src");
    const auto dst = parse_integer<long long>(fields[1], line_no, "dst");
    const double w = fields.size() == 3 ? parse_real(fields[2], line_no) : 1.0;
    if (src < 0 || src >= num_users || dst < 0 || dst >= num_users) {
      throw Error(ErrorKind::IdOutOfRange,
                  "user id out of range [0," + std::to_string(num_users) + ")", line_no);
    }
    if (w < 0.0) {
      throw Error(ErrorKind::NegativeWeight, "negative weight " + format_real(w), line_no);
    }
    if (src == dst) {
      throw Error(ErrorKind::SelfLoop, "self-loop on user " + std::to_string(src), line_no);
    }
    const auto key = std::make_pair(static_cast<UserId>(src), static_cast<UserId>(dst));
    auto [it, inserted] = directed.try_emplace(key, Directed{w, line_no});
    if (!inserted) {
      switch (symmetrize) {
        case Symmetrize::Sum: it->second.weight += w; break;
        case Symmetrize::Max: it->second.weight = std::max(it->second.weight, w); break;
        case Symmetrize::Strict:
          if (it->second.weight != w) {
            throw Error(ErrorKind::Asymmetric,
                        "conflicting duplicate of edge first seen on line " +
                            std::to_string(it->second.line),
                        line_no);
          }
          break;
      }
    }
  }

  std::vector<CandidateNetwork::Edge> edges;
  for (const auto& [key, d] : directed) {
    const auto [a, b] = key;
    const auto reverse = directed.find({b, a});
    const double back = reverse == directed.end() ? 0.0 : reverse->second.weight;
    if (symmetrize == Symmetrize::Strict && back != d.weight) {
      throw Error(ErrorKind::Asymmetric,
                  "edge " + std::to_string(a) + "->" + std::to_string(b) +
                      " has no matching reverse edge of equal weight",
                  d.line);
    }
    if (a > b && reverse != directed.end()) continue;  // handled from the (b,a) side
    double w = d.weight;
    switch (symmetrize) {
      case Symmetrize::Sum: w = d.weight + back; break;
      case Symmetrize::Max: w = std::max(d.weight, back); break;
      case Symmetrize::Strict: w = d.weight; break;
    }
    if (w > 0.0) edges.push_back({std::min(a, b), std::max(a, b), w});
  }
  // from_edges mirrors each edge, so the combined weight is inserted once.
  try {
    return CandidateNetwork::from_edges(num_users, edges, std::move(name), kind);
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(e.what()) + " after symmetrizing");
  }
}

void write_edge_list(const CandidateNetwork& g, std::ostream& out) {
  std::vector<std::tuple<UserId, UserId, double>> rows;
  const auto& w = g.weights();
  for (int k = 0; k < w.outerSize(); ++k) {
    for (CandidateNetwork::Matrix::InnerIterator it(w, k); it; ++it) {
      if (it.row() < it.col()) {
        rows.emplace_back(static_cast<UserId>(it.row()), static_cast<UserId>(it.col()),
                          it.value());
      }
    }
  }
  std::sort(rows.begin(), rows.end());
  if (!g.name().empty()) out << "# " << g.name() << "\n";
  for (const auto& [a, b, v] : rows) out << a << ',' << b << ',' << format_real(v) << '\n';
}

// ---------------------------------------------------------------------------
// AdoptionMatrix

AdoptionMatrix::AdoptionMatrix(int num_users, int num_apps, std::vector<Adoption> entries,
                               std::vector<std::string> app_labels)
    : num_users_(num_users), num_apps_(num_apps), app_labels_(std::move(app_labels)) {
  if (num_users <= 0 || num_apps <= 0) {
    throw Error(ErrorKind::InvalidArgument, "adoption matrix needs positive dimensions");
  }
  if (!app_labels_.empty() && static_cast<int>(app_labels_.size()) != num_apps) {
    throw Error(ErrorKind::DimensionMismatch, "app label count differs from num_apps");
  }
  for (const auto& e : entries) {
    if (e.user < 0 || e.user >= num_users || e.app < 0 || e.app >= num_apps) {
      throw Error(ErrorKind::IdOutOfRange, "adoption (" + std::to_string(e.user) + "," +
                                               std::to_string(e.app) + ") out of range");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Adoption& x, const Adoption& y) {
    return std::tie(x.app, x.user) < std::tie(y.app, y.user);
  });
  for (const auto& e : entries) {
    if (!entries_.empty() && entries_.back().app == e.app && entries_.back().user == e.user) {
      if (entries_.back().timestamp != e.timestamp) {
        throw Error(ErrorKind::ConflictingTimestamp,
                    "user " + std::to_string(e.user) + " app " + std::to_string(e.app) +
                        " listed with different timestamps");
      }
      continue;
    }
    entries_.push_back(e);
  }
  dense_.assign(static_cast<std::size_t>(num_users) * num_apps, 0);
  adopters_.assign(num_apps, {});
  for (const auto& e : entries_) {
    dense_[static_cast<std::size_t>(e.app) * num_users + e.user] = 1;
    adopters_[e.app].push_back(e.user);
  }
}

std::optional<Timestamp> AdoptionMatrix::timestamp(UserId u, AppId a) const {
  const auto it = std::lower_bound(
      entries_.begin(), entries_.end(), std::make_pair(a, u),
      [](const Adoption& e, const std::pair<AppId, UserId>& key) {
        return std::tie(e.app, e.user) < std::tie(key.first, key.second);
      });
  if (it == entries_.end() || it->app != a || it->user != u) return std::nullopt;
  return it->timestamp;
}

bool AdoptionMatrix::has_timestamps() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const Adoption& e) { return e.timestamp.has_value(); });
}

Eigen::VectorXd AdoptionMatrix::indicator(AppId a) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(num_users_);
  for (const UserId u : adopters_[a]) x[u] = 1.0;
  return x;
}

std::vector<int> AdoptionMatrix::apps_per_user() const {
  std::vector<int> counts(num_users_, 0);
  for (const auto& e : entries_) ++counts[e.user];
  return counts;
}

std::vector<int> AdoptionMatrix::users_per_app() const {
  std::vector<int> counts(num_apps_, 0);
  for (AppId a = 0; a < num_apps_; ++a) counts[a] = static_cast<int>(adopters_[a].size());
  return counts;
}

AdoptionMatrix load_adoptions(std::istream& in, int num_users, int num_apps) {
  std::vector<Adoption> entries;
  std::map<std::pair<UserId, AppId>, std::pair<std::optional<Timestamp>, std::size_t>> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (is_skippable(raw)) continue;
    const auto fields = split_fields(trim(raw));
    if (fields.size() < 2 || fields.size() > 3) {
      throw Error(ErrorKind::ParseError, "expected user,app[,timestamp]", line_no);
    }
    Adoption rec;
    const auto user = parse_integer<long long>(fields[0], line_no, "user");
    const auto app = parse_integer<long long>(fields[1], line_no, "app");
    if (user < 0 || user >= num_users) {
      throw Error(ErrorKind::IdOutOfRange,
                  "user id out of range [0," + std::to_string(num_users) + ")", line_no);
    }
    if (app < 0 || app >= num_apps) {
      throw Error(ErrorKind::IdOutOfRange,
                  "app id out of range [0," + std::to_string(num_apps) + ")", line_no);
    }
    rec.user = static_cast<UserId>(user);
    rec.app = static_cast<AppId>(app);
    if (fields.size() == 3 && !fields[2].empty()) {
      rec.timestamp = parse_integer<Timestamp>(fields[2], line_no, "timestamp");
    }
    const auto [it, inserted] =
        seen.try_emplace({rec.user, rec.app}, rec.timestamp, line_no);
    if (!inserted) {
      if (it->second.first != rec.timestamp) {
        throw Error(ErrorKind::ConflictingTimestamp,
                    "duplicate of line " + std::to_string(it->second.second) +
                        " with a different timestamp",
                    line_no);
      }
      continue;
    }
    entries.push_back(rec);
  }
  return AdoptionMatrix(num_users, num_apps, std::move(entries));
}

void write_adoptions(const AdoptionMatrix& adoptions, std::ostream& out) {
  for (const auto& e : adoptions.entries()) {
    out << e.user << ',' << e.app;
    if (e.timestamp) out << ',' << *e.timestamp;
    out << '\n';
  }
}

FilteredAdoptions filter_min_users(const AdoptionMatrix& adoptions, int min_users) {
  if (min_users < 1) throw Error(ErrorKind::InvalidArgument, "min_users must be >= 1");
  FilteredAdoptions out;
  std::vector<AppId> new_id(adoptions.num_apps(), -1);
  for (AppId a = 0; a < adoptions.num_apps(); ++a) {
    if (static_cast<int>(adoptions.adopters(a).size()) >= min_users) {
      new_id[a] = static_cast<AppId>(out.original_app.size());
      out.original_app.push_back(a);
    }
  }
  if (out.original_app.empty()) {
    throw Error(ErrorKind::EmptyData,
                "no app has at least " + std::to_string(min_users) + " adopters");
  }
  std::vector<Adoption> kept;
  for (const auto& e : adoptions.entries()) {
    if (new_id[e.app] >= 0) kept.push_back({e.user, new_id[e.app], e.timestamp});
  }
  std::vector<std::string> labels;
  if (!adoptions.app_labels().empty()) {
    for (const AppId a : out.original_app) labels.push_back(adoptions.app_labels()[a]);
  }
  out.matrix = AdoptionMatrix(adoptions.num_users(),
                              static_cast<int>(out.original_app.size()), std::move(kept),
                              std::move(labels));
  return out;
}

// ---------------------------------------------------------------------------
// NetworkStack

NetworkStack::NetworkStack(std::vector<CandidateNetwork> nets,
                           std::optional<std::vector<double>> pop)
    : networks(std::move(nets)), popularity(std::move(pop)) {
  validate();
}

int NetworkStack::num_users() const {
  return networks.empty() ? 0 : networks.front().num_users();
}

void NetworkStack::validate() const {
  for (const auto& g : networks) {
    if (g.num_users() != num_users()) {
      throw Error(ErrorKind::DimensionMismatch,
                  "network '" + g.name() + "' has " + std::to_string(g.num_users()) +
                      " users, expected " + std::to_string(num_users()));
    }
  }
  if (popularity) {
    for (const double c : *popularity) {
      if (!(c >= 0.0) || !std::isfinite(c)) {
        throw Error(ErrorKind::NegativeWeight, "popularity entries must be finite and >= 0");
      }
    }
  }
}

NetworkStack NetworkStack::with_popularity(std::vector<double> pop) const {
  return NetworkStack(networks, std::move(pop));
}

NetworkStack NetworkStack::without_popularity() const {
  return NetworkStack(networks, std::nullopt);
}

NetworkStack NetworkStack::only(int network_index) const {
  if (network_index < 0 || network_index >= num_networks()) {
    throw Error(ErrorKind::InvalidArgument, "network index out of range");
  }
  return NetworkStack({networks[network_index]}, popularity);
}

std::vector<double> popularity_counts(const AdoptionMatrix& adoptions,
                                      const std::vector<UserId>& visible_users) {
  std::vector<double> counts(adoptions.num_apps(), 0.0);
  std::vector<std::uint8_t> visible(adoptions.num_users(), 0);
  for (const UserId u : visible_users) {
    if (u < 0 || u >= adoptions.num_users()) {
      throw Error(ErrorKind::IdOutOfRange, "visible user " + std::to_string(u));
    }
    visible[u] = 1;
  }
  for (const auto& e : adoptions.entries()) {
    if (visible[e.user]) counts[e.app] += 1.0;
  }
  return counts;
}

std::vector<double> popularity_counts(const AdoptionMatrix& adoptions) {
  std::vector<double> counts(adoptions.num_apps(), 0.0);
  for (const auto& e : adoptions.entries()) counts[e.app] += 1.0;
  return counts;
}

// ---------------------------------------------------------------------------
// Statistics

DatasetStats dataset_stats(const AdoptionMatrix& adoptions) {
  if (adoptions.num_entries() == 0) {
    throw Error(ErrorKind::EmptyData, "adoption matrix has no installations");
  }
  DatasetStats stats;
  stats.num_users = adoptions.num_users();
  stats.num_apps = adoptions.num_apps();
  stats.num_installs = adoptions.num_entries();
  for (const int c : adoptions.users_per_app()) ++stats.users_per_app[c];
  for (const int c : adoptions.apps_per_user()) ++stats.apps_per_user[c];
  stats.mean_apps_per_user =
      static_cast<double>(stats.num_installs) / static_cast<double>(stats.num_users);
  stats.exp_rate = 1.0 / stats.mean_apps_per_user;
  return stats;
}

nlohmann::json to_json(const DatasetStats& stats) {
  auto histogram = [](const std::map<int, int>& h) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [count, freq] : h) arr.push_back({count, freq});
    return arr;
  };
  return {
      {"num_users", stats.num_users},
      {"num_apps", stats.num_apps},
      {"num_installs", stats.num_installs},
      {"mean_apps_per_user", stats.mean_apps_per_user},
      {"users_per_app", histogram(stats.users_per_app)},
      {"apps_per_user", histogram(stats.apps_per_user)},
      {"exp_rate", stats.exp_rate},
  };
}

}  // namespace appnet
