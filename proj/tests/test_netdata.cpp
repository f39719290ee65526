#include "support.hpp"

#include "appnet/error.hpp"
#include "appnet/netdata.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sstream>

using namespace appnet;

namespace {

CandidateNetwork load(const std::string& text, int users, Symmetrize mode = Symmetrize::Sum,
                      NetworkKind kind = NetworkKind::Weighted) {
  std::istringstream in(text);
  return load_network_edge_list(in, users, kind, mode);
}

ErrorKind load_error(const std::string& text, int users, Symmetrize mode = Symmetrize::Sum,
                     std::size_t* line = nullptr) {
  try {
    load(text, users, mode);
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::ParseError;
}

AdoptionMatrix adoptions_from(const std::string& text, int users, int apps) {
  std::istringstream in(text);
  return load_adoptions(in, users, apps);
}

}  // namespace

TEST_CASE("edge list: a single edge is mirrored") {
  const auto g = load("0,1,2.0", 2);
  CHECK(g.weight(0, 1) == 2.0);
  CHECK(g.weight(1, 0) == 2.0);
  CHECK(g.weight(0, 0) == 0.0);
  CHECK(g.num_edges() == 1);
}

TEST_CASE("edge list: sum mode adds both directions") {
  CHECK(load("0,1,2.0\n1,0,3.0", 2).weight(0, 1) == 5.0);
  CHECK(load("0,1,2.0\n1,0,3.0", 2, Symmetrize::Max).weight(1, 0) == 3.0);
}

TEST_CASE("edge list: missing weight defaults to one, comments and blanks skipped") {
  const auto g = load("# calls\n\n0,2\n  # indented comment\n1,2,0.5\n", 3);
  CHECK(g.weight(0, 2) == 1.0);
  CHECK(g.weight(2, 1) == 0.5);
  CHECK(g.num_edges() == 2);
}

TEST_CASE("edge list: invalid records are rejected with line numbers") {
  std::size_t line = 0;
  CHECK(load_error("0,1,-1.0", 2, Symmetrize::Sum, &line) == ErrorKind::NegativeWeight);
  CHECK(line == 1);
  CHECK(load_error("0,1\n0,5", 3, Symmetrize::Sum, &line) == ErrorKind::IdOutOfRange);
  CHECK(line == 2);
  CHECK(load_error("# c\n1,1,1", 3, Symmetrize::Sum, &line) == ErrorKind::SelfLoop);
  CHECK(line == 2);
  CHECK(load_error("0,x,1", 3) == ErrorKind::ParseError);
  CHECK(load_error("0,1,abc", 3) == ErrorKind::ParseError);
  CHECK(load_error("0", 3) == ErrorKind::ParseError);
}

TEST_CASE("edge list: strict mode needs equal reverse edges") {
  const auto g = load("0,1,2\n1,0,2", 2, Symmetrize::Strict);
  CHECK(g.weight(0, 1) == 2.0);
  std::size_t line = 0;
  CHECK(load_error("0,1,2\n1,0,3", 2, Symmetrize::Strict, &line) == ErrorKind::Asymmetric);
  CHECK(load_error("0,1,2", 2, Symmetrize::Strict) == ErrorKind::Asymmetric);
}

TEST_CASE("edge list: binary networks reject non-unit weights") {
  CHECK(load("0,1\n1,0", 2, Symmetrize::Max, NetworkKind::Binary).weight(0, 1) == 1.0);
  CHECK_THROWS_AS(load("0,1,0.5", 2, Symmetrize::Max, NetworkKind::Binary), Error);
  CHECK_THROWS_AS(load("0,1\n1,0", 2, Symmetrize::Sum, NetworkKind::Binary), Error);
}

TEST_CASE("candidate network constructor enforces invariants") {
  using Matrix = CandidateNetwork::Matrix;
  Matrix asym(2, 2);
  asym.insert(0, 1) = 1.0;
  CHECK_THROWS_AS(CandidateNetwork{asym}, Error);
  Matrix loop(2, 2);
  loop.insert(1, 1) = 1.0;
  CHECK_THROWS_AS(CandidateNetwork{loop}, Error);
  Matrix neg(2, 2);
  neg.insert(0, 1) = -1.0;
  neg.insert(1, 0) = -1.0;
  CHECK_THROWS_AS(CandidateNetwork{neg}, Error);
}

TEST_CASE("edge list round trip reproduces the canonical text") {
  testing::Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = testing::random_network(12, 0.3, rng, "g");
    std::ostringstream first;
    write_edge_list(g, first);
    std::istringstream in(first.str());
    const auto back = load_network_edge_list(in, 12, NetworkKind::Weighted, Symmetrize::Sum, "g");
    std::ostringstream second;
    write_edge_list(back, second);
    CHECK(first.str() == second.str());
    CHECK((Eigen::MatrixXd(g.weights()) - Eigen::MatrixXd(back.weights())).norm() == 0.0);
  }
}

TEST_CASE("normalization modes") {
  const auto g = load("0,1,2\n1,2,4", 3);
  const auto m = normalize_network(g, Normalization::Max);
  CHECK(m.weight(0, 1) == doctest::Approx(0.5));
  CHECK(m.weight(1, 2) == doctest::Approx(1.0));
  const auto t = normalize_network(g, Normalization::Total);
  CHECK(t.total_weight() == doctest::Approx(1.0));
  CHECK(normalize_network(g, Normalization::None).weight(1, 2) == 4.0);

  const CandidateNetwork empty(CandidateNetwork::Matrix(3, 3));
  CHECK(normalize_network(empty, Normalization::Max).num_edges() == 0);
  const auto binary = load("0,1\n1,2", 3, Symmetrize::Max, NetworkKind::Binary);
  const auto nb = normalize_network(binary, Normalization::Max);
  CHECK(nb.weight(0, 1) == 1.0);
  CHECK(nb.kind() == NetworkKind::Binary);
}

TEST_CASE("normalized networks stay symmetric and non-negative") {
  testing::Rng rng(5);
  const auto g = testing::random_network(15, 0.4, rng);
  for (const auto mode : {Normalization::Max, Normalization::Total}) {
    const Eigen::MatrixXd w(normalize_network(g, mode).weights());
    CHECK((w - w.transpose()).norm() == 0.0);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.diagonal().norm() == 0.0);
  }
}

TEST_CASE("adoption loading") {
  const auto x = adoptions_from("3,7,1590000000", 4, 8);
  CHECK(x.adopted(3, 7));
  CHECK(x.timestamp(3, 7) == 1590000000);
  CHECK(x.num_entries() == 1);

  const auto empty = adoptions_from("", 3, 2);
  CHECK(empty.num_entries() == 0);
  CHECK(empty.indicator(0).sum() == 0.0);
  CHECK(empty.indicator(1).sum() == 0.0);

  const auto dup = adoptions_from("1,0,5\n1,0,5\n2,0\n2,0", 3, 1);
  CHECK(dup.num_entries() == 2);
  CHECK_FALSE(dup.has_timestamps());

  try {
    adoptions_from("1,0,5\n1,0,6", 3, 1);
    FAIL("expected a conflict");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ConflictingTimestamp);
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(adoptions_from("3,0", 3, 1), Error);
  CHECK_THROWS_AS(adoptions_from("0,1", 3, 1), Error);
}

TEST_CASE("adoption write/load round trip") {
  testing::Rng rng(9);
  const auto x = testing::random_adoptions(10, 6, 0.3, rng, true);
  std::ostringstream out;
  write_adoptions(x, out);
  std::istringstream in(out.str());
  const auto y = load_adoptions(in, 10, 6);
  CHECK(x.entries() == y.entries());
}

TEST_CASE("min-users filter") {
  const auto x = adoptions_from("0,0\n1,0\n2,0\n0,1", 3, 2);
  const auto f = filter_min_users(x, 2);
  CHECK(f.matrix.num_apps() == 1);
  CHECK(f.original_app == std::vector<AppId>{0});
  CHECK(f.matrix.adopters(0).size() == 3);

  const auto one = filter_min_users(x, 1);
  CHECK(one.matrix.num_apps() == 2);
  CHECK(one.matrix.entries() == x.entries());

  testing::Rng rng(3);
  const auto r = testing::random_adoptions(20, 30, 0.08, rng);
  const auto once = filter_min_users(r, 2).matrix;
  const auto twice = filter_min_users(once, 2).matrix;
  CHECK(once.entries() == twice.entries());
  CHECK(once.num_apps() == twice.num_apps());
  CHECK_THROWS_AS(filter_min_users(x, 0), Error);
}

TEST_CASE("popularity counts") {
  const auto x = adoptions_from("1,0\n2,0\n5,0\n0,1\n1,1\n2,1\n3,1\n4,1", 6, 2);
  CHECK(popularity_counts(x, {1, 2, 3})[0] == 2.0);
  CHECK(popularity_counts(x, {}) == std::vector<double>{0.0, 0.0});
  CHECK(popularity_counts(x)[1] == 5.0);
  CHECK(popularity_counts(x, {0, 1, 2, 3, 4, 5}) == popularity_counts(x));
  const auto sums = x.users_per_app();
  CHECK(popularity_counts(x)[0] == sums[0]);
}

TEST_CASE("dataset statistics") {
  const auto x = adoptions_from("0,0\n0,1\n0,2\n1,0", 2, 3);
  const auto stats = dataset_stats(x);
  CHECK(stats.apps_per_user == std::map<int, int>{{1, 1}, {3, 1}});
  CHECK(stats.exp_rate == doctest::Approx(0.5));
  CHECK(stats.users_per_app == std::map<int, int>{{1, 2}, {2, 1}});
  int mass = 0;
  for (const auto& [count, freq] : stats.users_per_app) mass += freq;
  CHECK(mass == stats.num_apps);

  const auto single = adoptions_from("0,0\n1,0\n2,0\n3,0", 4, 1);
  CHECK(dataset_stats(single).users_per_app == std::map<int, int>{{4, 1}});

  CHECK_THROWS_AS(dataset_stats(adoptions_from("", 2, 2)), Error);

  const auto j = to_json(stats);
  CHECK(j["exp_rate"].get<double>() == doctest::Approx(0.5));
  CHECK(j["apps_per_user"][0][0] == 1);
  CHECK(j["apps_per_user"][0][1] == 1);
}

TEST_CASE("network stack validation") {
  testing::Rng rng(1);
  const auto a = testing::random_network(4, 0.5, rng);
  const auto b = testing::random_network(5, 0.5, rng);
  CHECK_THROWS_AS(NetworkStack({a, b}), Error);
  CHECK_THROWS_AS(NetworkStack({a}, std::vector<double>{1.0, -2.0}), Error);
  const NetworkStack s({a}, std::vector<double>{1.0, 2.0});
  CHECK(s.only(0).has_popularity());
  CHECK_FALSE(s.without_popularity().has_popularity());
}
