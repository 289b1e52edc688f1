#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <set>

using namespace ttnheom;
using namespace ttnheom::testing;
using nlohmann::json;

namespace {

int count_bexciton_legs(const ttn::TreeTopology& t, int k) {
  int c = 0;
  for (const auto& n : t.nodes())
    for (const auto& l : n.legs) c += l.kind == ttn::LegKind::Bexciton && l.ref == k;
  return c;
}

void check_structure(const ttn::TreeTopology& t) {
  for (int k = 0; k < t.num_features(); ++k) CHECK(count_bexciton_legs(t, k) == 1);
  const auto& root = t.node(0);
  CHECK(root.legs[0].kind == ttn::LegKind::SystemKet);
  CHECK(root.legs[1].kind == ttn::LegKind::SystemBra);
  CHECK(root.legs[2].kind == ttn::LegKind::Bond);
  for (int s = 1; s < t.num_nodes(); ++s) {
    const auto& n = t.node(s);
    CHECK(n.legs[0].kind == ttn::LegKind::Bond);
    CHECK(n.legs[0].ref == n.parent);
    CHECK(t.node(s - 1).height <= n.height);
    CHECK(n.height == t.node(n.parent).height + 1);
  }
}

ttn::TtnState random_full(const ttn::TreeTopology& topo, unsigned seed) {
  return ttn::decompose_dense(random_edo(topo.depths(), topo.dim(), seed), topo);
}

// Sum over the bexciton-vacuum slice of the dense tensor.
Mat vacuum_slice(const DenseEdo& e) {
  const Index m = e.dim();
  const Index rest = e.size() / (m * m);
  Mat r(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) r(i, j) = e.data[(i * m + j) * rest];
  return r;
}

}  // namespace

TEST_CASE("train and balanced trees on four bexcitons", "[ttn]") {
  const auto train = ttn::make_train({3, 3, 3, 3}, 2);
  REQUIRE(train.num_nodes() == 4);
  check_structure(train);
  // A0(i,j,a1) U1(a1,n1,a2) U2(a2,n2,a3) U3(a3,n3,n4)
  CHECK(train.node(1).legs[1].kind == ttn::LegKind::Bexciton);
  CHECK(train.node(1).legs[2].ref == 2);
  CHECK(train.node(3).legs[1].ref == 2);
  CHECK(train.node(3).legs[2].ref == 3);

  const auto bal = ttn::make_balanced({3, 3, 3, 3}, 2);
  REQUIRE(bal.num_nodes() == 4);
  check_structure(bal);
  // A0(i,j,a1) U1(a1,a2,a3) U2(a2,n1,n2) U3(a3,n3,n4)
  CHECK(bal.node(1).legs[1].kind == ttn::LegKind::Bond);
  CHECK(bal.node(1).legs[2].kind == ttn::LegKind::Bond);
  CHECK(bal.node(2).legs[1].ref == 0);
  CHECK(bal.node(2).legs[2].ref == 1);
  CHECK(bal.node(3).legs[1].ref == 2);
  CHECK(bal.node(3).legs[2].ref == 3);
  CHECK(bal.capacity(1) == 4);
  CHECK(bal.capacity(2) == 9);

  const auto big = ttn::make_balanced(std::vector<int>(20, 20), 2);
  CHECK(big.num_nodes() == 20);
  check_structure(big);
}

TEST_CASE("single bexciton uses a dummy leg", "[ttn]") {
  const auto t = ttn::make_train({5}, 2);
  REQUIRE(t.num_nodes() == 2);
  CHECK(t.node(1).legs[1].kind == ttn::LegKind::Bexciton);
  CHECK(t.node(1).legs[2].kind == ttn::LegKind::Dummy);
  CHECK(t.open_size(t.node(1).legs[2]) == 1);
  CHECK(t.capacity(1) == 4);
}

TEST_CASE("explicit topologies", "[ttn]") {
  const json nodes = json::parse(R"([
    {"id": 0, "legs": ["i", "j", 1]},
    {"id": 1, "legs": [0, 2, 3]},
    {"id": 2, "legs": [1, "n1", "n2"]},
    {"id": 3, "legs": [1, "n3", "n4"]}])");
  const auto t = ttn::make_explicit(nodes, {3, 3, 3, 3}, 2);
  CHECK(t.hash() == ttn::make_balanced({3, 3, 3, 3}, 2).hash());
  CHECK(t.hash() != ttn::make_train({3, 3, 3, 3}, 2).hash());

  auto bad = [&](const char* text) {
    CHECK_THROWS_AS(ttn::make_explicit(json::parse(text), {3, 3, 3, 3}, 2), ttn::TopologyError);
  };
  // bexciton 4 missing
  bad(R"([{"id":0,"legs":["i","j",1]},{"id":1,"legs":[0,2,3]},{"id":2,"legs":[1,"n1","n2"]},
          {"id":3,"legs":[1,"n3","dummy"]}])");
  // bexciton 1 twice
  bad(R"([{"id":0,"legs":["i","j",1]},{"id":1,"legs":[0,2,3]},{"id":2,"legs":[1,"n1","n2"]},
          {"id":3,"legs":[1,"n1","n4"]}])");
  // cycle 1-2-3-1 leaves the tree disconnected from its leaves
  bad(R"([{"id":0,"legs":["i","j",1]},{"id":1,"legs":[0,2,3]},{"id":2,"legs":[1,3,"n1"]},
          {"id":3,"legs":[1,2,"n2"]},{"id":4,"legs":["n3","n4","dummy"]}])");
  // disconnected component
  bad(R"([{"id":0,"legs":["i","j",1]},{"id":1,"legs":[0,"n1","n2"]},{"id":2,"legs":["n3","n4","dummy"]}])");
  // unknown label
  bad(R"([{"id":0,"legs":["i","j",1]},{"id":1,"legs":[0,"x","n2"]}])");
  CHECK_THROWS_AS(ttn::make_topology(ttn::TopologyKind::Explicit, {3}, 2, json::array()), ttn::TopologyError);
}

TEST_CASE("depth-first path crosses every bond twice", "[ttn]") {
  for (const auto& t : {ttn::make_train({3, 3, 3, 3}, 2), ttn::make_balanced({3, 3, 3, 3}, 2),
                        ttn::make_balanced({2, 2, 2, 2, 2}, 2), ttn::make_train({4}, 2),
                        ttn::make_balanced(std::vector<int>(20, 3), 2)}) {
    const auto p = ttn::dfs_path(t);
    REQUIRE(p.size() == static_cast<size_t>(2 * t.num_nodes() - 1));
    CHECK(p.front() == 0);
    CHECK(p.back() == 0);
    std::map<std::pair<int, int>, int> crossings;
    for (size_t k = 1; k < p.size(); ++k) {
      const int a = p[k - 1], b = p[k];
      REQUIRE((t.parent(a) == b || t.parent(b) == a));
      ++crossings[{std::min(a, b), std::max(a, b)}];
    }
    CHECK(crossings.size() == static_cast<size_t>(t.num_nodes() - 1));
    for (const auto& [edge, n] : crossings) CHECK(n == 2);
  }
  CHECK(ttn::dfs_path(ttn::make_train({3, 3, 3, 3}, 2)) == std::vector<int>{0, 1, 2, 3, 2, 1, 0});
}

TEST_CASE("page fill order", "[ttn]") {
  const std::vector<std::pair<Index, Index>> want = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (Index a = 0; a < 6; ++a) CHECK(ttn::page_position(a, 3, 3) == want[static_cast<size_t>(a)]);
  // Narrow grids skip positions that fall outside.
  CHECK(ttn::page_position(1, 1, 3) == std::pair<Index, Index>{0, 1});
  CHECK_THROWS_AS(ttn::page_position(9, 3, 3), ttn::StateError);

  const auto topo = ttn::make_balanced({3, 3, 3, 3}, 2);
  const auto st = ttn::init_state(topo, scenarios::plus_state(), ttn::clamp_ranks(topo, 5));
  const Tensor& u = st.cores[2];
  REQUIRE(u.dim(0) == 5);
  for (Index b = 0; b < 3; ++b)
    for (Index c = 0; c < 3; ++c) CHECK(u(4, b, c) == cplx((b == 1 && c == 1) ? 1.0 : 0.0));
}

TEST_CASE("initial states", "[ttn]") {
  const Mat rho0 = scenarios::plus_state();
  for (const auto& topo : {ttn::make_train({3, 3, 3}, 2), ttn::make_balanced({3, 3, 3, 3}, 2), ttn::make_train({4}, 2)}) {
    for (Index r : {1, 2, 4}) {
      const auto st = ttn::init_state(topo, rho0, ttn::clamp_ranks(topo, r));
      CHECK(ttn::extract_rho(st) == rho0);
      for (double d : ttn::check_semiunitary(st)) CHECK(d == 0.0);
      const auto e = ttn::dense_edo(st);
      CHECK(max_abs(Mat(vacuum_slice(e) - rho0)) == 0.0);
      CHECK(std::abs(e.data.squaredNorm() - rho0.squaredNorm()) <= 1e-15);
      CHECK(st.size() == ttn::size_of(topo, st.ranks()));
    }
  }
  const auto topo = ttn::make_balanced({3, 3, 3, 3}, 2);
  Mat bad = rho0;
  bad(0, 0) = 2.0;
  CHECK_THROWS_AS(ttn::init_state(topo, bad, ttn::clamp_ranks(topo, 1)), ttn::StateError);
  bad = rho0;
  bad(0, 1) = cplx(0.5, 0.1);
  CHECK_THROWS_AS(ttn::init_state(topo, bad, ttn::clamp_ranks(topo, 1)), ttn::StateError);
  auto ranks = ttn::clamp_ranks(topo, 1);
  ranks[2] = 10;
  CHECK_THROWS_AS(ttn::init_state(topo, rho0, ranks), ttn::StateError);
  CHECK_THROWS_AS(ttn::validate_ranks(topo, ranks), ttn::StateError);
}

TEST_CASE("extract_rho matches the dense vacuum slice", "[ttn]") {
  for (const auto& topo : {ttn::make_train({3, 4, 2}, 2), ttn::make_balanced({2, 3, 4, 3}, 2), ttn::make_train({4}, 3)}) {
    const auto st = random_full(topo, 5);
    const Mat want = vacuum_slice(ttn::dense_edo(st));
    CHECK(max_abs(Mat(ttn::extract_rho(st) - want)) <= 1e-13 * max_abs(want));
  }
}

TEST_CASE("hierarchical decomposition round trip", "[ttn]") {
  for (const auto& topo : {ttn::make_balanced({3, 3, 3, 3}, 2), ttn::make_train({3, 3, 3, 3}, 2),
                           ttn::make_balanced({2, 3, 2, 3, 2}, 2)}) {
    const auto e = random_edo(topo.depths(), topo.dim(), 21);
    const auto st = ttn::decompose_dense(e, topo);
    for (double d : ttn::check_semiunitary(st)) CHECK(d <= 1e-12);
    CHECK(max_abs(Vec(ttn::dense_edo(st).data - e.data)) <= 1e-12 * max_abs(e.data));
    const auto again = ttn::decompose_dense(ttn::dense_edo(st), topo);
    CHECK(max_abs(Vec(ttn::dense_edo(again).data - e.data)) <= 1e-12 * max_abs(e.data));
  }
}

TEST_CASE("truncated states respect the bond rank", "[ttn]") {
  const auto topo = ttn::make_train({3, 3, 3, 3}, 2);
  auto ranks = ttn::full_ranks(topo);
  ranks[3] = 2;
  ranks[2] = 6;
  const auto st = ttn::decompose_dense(random_edo(topo.depths(), 2, 8), topo, ranks);
  for (double d : ttn::check_semiunitary(st)) CHECK(d <= 1e-12);
  // Bond 3 separates (i, j, n1, n2) from (n3, n4), which are the trailing axes.
  const Vec d = ttn::dense_edo(st).data;
  const Eigen::Map<const RowMat> unfold(d.data(), d.size() / 9, 9);
  const Eigen::JacobiSVD<RowMat> svd(unfold);
  const auto& s = svd.singularValues();
  CHECK(s[2] <= 1e-12 * s[0]);
  CHECK(s[1] > 1e-3 * s[0]);
}

TEST_CASE("semi-unitarity check flags non-isometric cores", "[ttn]") {
  const auto topo = ttn::make_balanced({3, 3, 3, 3}, 2);
  auto st = ttn::init_state(topo, scenarios::plus_state(), ttn::clamp_ranks(topo, 2));
  st.cores[2].flat() = random_vec(st.cores[2].size(), 3);
  const auto dev = ttn::check_semiunitary(st);
  CHECK(dev[0] == 0.0);
  CHECK(dev[1] == 0.0);
  CHECK(dev[2] > 0.1);
}

TEST_CASE("regauge restores exact isometries without changing the tensor", "[ttn]") {
  const auto topo = ttn::make_balanced({3, 3, 3, 3}, 2);
  auto st = random_full(topo, 4);
  for (size_t s = 1; s < st.cores.size(); ++s) st.cores[s].flat() *= 1.5;
  const Vec before = ttn::dense_edo(st).data;
  ttn::regauge(st);
  for (double d : ttn::check_semiunitary(st)) CHECK(d <= 1e-13);
  CHECK(max_abs(Vec(ttn::dense_edo(st).data - before)) <= 1e-12 * max_abs(before));
}

TEST_CASE("bookkeeping sizes of the balanced twenty-bexciton tree", "[ttn]") {
  const auto topo = ttn::make_balanced(std::vector<int>(20, 20), 2);
  const std::vector<std::pair<Index, double>> table = {{40, 0.7e6}, {60, 2.2e6}, {80, 4.9e6}};
  for (const auto& [r, want] : table) {
    const double got = static_cast<double>(ttn::size_of(topo, ttn::clamp_ranks(topo, r)));
    INFO("rank " << r << " size " << got);
    CHECK(std::abs(got - want) <= 0.1 * want);
  }
  const auto ranks = ttn::clamp_ranks(topo, 7);
  Index sum = 0;
  for (int s = 0; s < topo.num_nodes(); ++s) {
    const auto d = ttn::node_dims(topo, ranks, s);
    sum += d[0] * d[1] * d[2];
  }
  CHECK(ttn::size_of(topo, ranks) == sum);
}

TEST_CASE("dense contraction guard", "[ttn]") {
  const auto topo = ttn::make_balanced(std::vector<int>(20, 20), 2);
  const auto st = ttn::init_state(topo, scenarios::plus_state(), ttn::clamp_ranks(topo, 1));
  CHECK_THROWS_AS(ttn::dense_edo(st), ttn::StateError);
}

TEST_CASE("checkpoint round trip", "[ttn]") {
  const auto topo = ttn::make_balanced({3, 3, 3, 3}, 2);
  auto st = ttn::decompose_dense(random_edo(topo.depths(), 2, 6), topo, ttn::clamp_ranks(topo, 3));
  st.time = 12.5;
  const auto path = (std::filesystem::temp_directory_path() / "ttnheom_ckpt_test.ttn").string();
  ttn::save_checkpoint(path, st, "{\"note\": 1}");
  const auto back = ttn::load_checkpoint(path, topo);
  CHECK(back.metadata == "{\"note\": 1}");
  CHECK(back.state.time == 12.5);
  CHECK(back.state.ranks() == st.ranks());
  for (size_t s = 0; s < st.cores.size(); ++s) CHECK(back.state.cores[s].flat() == st.cores[s].flat());
  CHECK_THROWS_AS(ttn::load_checkpoint(path, ttn::make_train({3, 3, 3, 3}, 2)), ttn::StateError);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 16);
  CHECK_THROWS_AS(ttn::load_checkpoint(path, topo), ttn::StateError);
  std::filesystem::remove(path);
}
