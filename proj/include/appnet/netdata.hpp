#pragma once

// Networks, adoption logs, and the descriptive statistics computed from them.
// Users and apps are dense 0-based integer ids; external names live in label
// vectors carried alongside.

#include <Eigen/SparseCore>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace appnet {

using UserId = int;
using AppId = int;
using Timestamp = std::int64_t;

enum class NetworkKind { Weighted, Binary };
enum class Symmetrize { Sum, Max, Strict };
enum class Normalization { None, Max, Total };

NetworkKind parse_network_kind(const std::string& text);
Symmetrize parse_symmetrize(const std::string& text);
Normalization parse_normalization(const std::string& text);
std::string to_string(NetworkKind kind);
std::string to_string(Symmetrize mode);
std::string to_string(Normalization mode);

// One undirected, non-negative weighted layer over the user population.
// The weight matrix is stored in full (both triangles), with an empty diagonal.
class CandidateNetwork {
 public:
  using Matrix = Eigen::SparseMatrix<double>;

  CandidateNetwork() = default;
  // Validates symmetry, non-negativity, zero diagonal, and binary values.
  CandidateNetwork(Matrix weights, std::string name = {},
                   NetworkKind kind = NetworkKind::Weighted);

  struct Edge {
    UserId a;
    UserId b;
    double weight;
  };
  // Each undirected edge listed once; (a,b) and (b,a) in the same list add up.
  static CandidateNetwork from_edges(int num_users, const std::vector<Edge>& edges,
                                     std::string name = {},
                                     NetworkKind kind = NetworkKind::Weighted);

  int num_users() const { return static_cast<int>(weights_.rows()); }
  const std::string& name() const { return name_; }
  NetworkKind kind() const { return kind_; }
  const Matrix& weights() const { return weights_; }
  double weight(UserId i, UserId j) const { return weights_.coeff(i, j); }
  // Number of undirected edges with positive weight.
  std::size_t num_edges() const;
  double max_weight() const;
  double total_weight() const;

  CandidateNetwork scaled(double factor) const;
  CandidateNetwork renamed(std::string name) const;

 private:
  Matrix weights_;
  std::string name_;
  NetworkKind kind_ = NetworkKind::Weighted;
};

// Parses `src,dst[,weight]` lines with `#` comments. Errors carry the 1-based
// line number of the offending record.
CandidateNetwork load_network_edge_list(std::istream& in, int num_users,
                                        NetworkKind kind = NetworkKind::Weighted,
                                        Symmetrize symmetrize = Symmetrize::Sum,
                                        std::string name = {});
// Canonical form: one `a,b,w` line per edge with a < b, sorted.
void write_edge_list(const CandidateNetwork& g, std::ostream& out);

CandidateNetwork normalize_network(const CandidateNetwork& g, Normalization mode);

struct Adoption {
  UserId user = 0;
  AppId app = 0;
  std::optional<Timestamp> timestamp;

  friend bool operator==(const Adoption&, const Adoption&) = default;
};

// Binary users x apps installation matrix with optional install times.
class AdoptionMatrix {
 public:
  AdoptionMatrix() = default;
  // Rejects out-of-range ids and conflicting duplicates; identical duplicates
  // collapse to one entry.
  AdoptionMatrix(int num_users, int num_apps, std::vector<Adoption> entries,
                 std::vector<std::string> app_labels = {});

  int num_users() const { return num_users_; }
  int num_apps() const { return num_apps_; }
  std::size_t num_entries() const { return entries_.size(); }
  // Sorted by (app, user).
  const std::vector<Adoption>& entries() const { return entries_; }
  const std::vector<std::string>& app_labels() const { return app_labels_; }

  bool adopted(UserId u, AppId a) const {
    return dense_[static_cast<std::size_t>(a) * num_users_ + u] != 0;
  }
  // Sorted adopter ids of one app.
  const std::vector<UserId>& adopters(AppId a) const { return adopters_[a]; }
  std::optional<Timestamp> timestamp(UserId u, AppId a) const;
  // True when every entry carries a timestamp.
  bool has_timestamps() const;

  // 0/1 indicator column for one app, length num_users.
  Eigen::VectorXd indicator(AppId a) const;
  std::vector<int> apps_per_user() const;
  std::vector<int> users_per_app() const;

 private:
  int num_users_ = 0;
  int num_apps_ = 0;
  std::vector<Adoption> entries_;
  std::vector<std::string> app_labels_;
  std::vector<std::uint8_t> dense_;
  std::vector<std::vector<UserId>> adopters_;
};

AdoptionMatrix load_adoptions(std::istream& in, int num_users, int num_apps);
void write_adoptions(const AdoptionMatrix& adoptions, std::ostream& out);

struct FilteredAdoptions {
  AdoptionMatrix matrix;
  // original_app[new_id] is the id in the input matrix.
  std::vector<AppId> original_app;
};

// Keeps the apps with at least `min_users` adopters, re-indexed densely in
// their original order.
FilteredAdoptions filter_min_users(const AdoptionMatrix& adoptions, int min_users);

// The candidate networks plus the optional per-app popularity channel C^a.
struct NetworkStack {
  std::vector<CandidateNetwork> networks;
  std::optional<std::vector<double>> popularity;

  NetworkStack() = default;
  NetworkStack(std::vector<CandidateNetwork> nets,
               std::optional<std::vector<double>> pop = std::nullopt);

  int num_users() const;
  int num_networks() const { return static_cast<int>(networks.size()); }
  bool has_popularity() const { return popularity.has_value(); }
  double popularity_of(AppId a) const { return popularity ? (*popularity)[a] : 0.0; }
  void validate() const;

  NetworkStack with_popularity(std::vector<double> pop) const;
  NetworkStack without_popularity() const;
  NetworkStack only(int network_index) const;
};

// C[a] = number of adopters of a among `visible_users`.
std::vector<double> popularity_counts(const AdoptionMatrix& adoptions,
                                      const std::vector<UserId>& visible_users);
std::vector<double> popularity_counts(const AdoptionMatrix& adoptions);

struct DatasetStats {
  int num_users = 0;
  int num_apps = 0;
  std::size_t num_installs = 0;
  // count -> number of apps (users) with exactly that many users (apps).
  std::map<int, int> users_per_app;
  std::map<int, int> apps_per_user;
  double mean_apps_per_user = 0.0;
  // Maximum-likelihood exponential rate for apps per user.
  double exp_rate = 0.0;
};

DatasetStats dataset_stats(const AdoptionMatrix& adoptions);
nlohmann::json to_json(const DatasetStats& stats);

}  // namespace appnet
