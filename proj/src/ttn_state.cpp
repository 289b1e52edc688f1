#include "ttnheom/ttn.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

namespace ttnheom::ttn {

namespace {

constexpr char kMagic[8] = {'T', 'T', 'N', 'H', 'E', 'O', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

// Subtree below a bond as a row basis: rows = bond index, columns = open legs in leg order.
struct Branch {
  RowMat t;
  std::vector<int> features;
};

Branch leg_branch(const TreeTopology& topo, const Leg& leg, const std::vector<Branch>& below) {
  if (leg.kind == LegKind::Bond) return below[static_cast<size_t>(leg.ref)];
  if (leg.kind == LegKind::Bexciton) {
    const Index n = topo.open_size(leg);
    return {RowMat::Identity(n, n), {leg.ref}};
  }
  return {RowMat::Ones(1, 1), {}};
}

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw StateError("checkpoint: truncated file");
  return v;
}

}  // namespace

Ranks TtnState::ranks() const {
  Ranks r(cores.size(), 1);
  for (size_t s = 1; s < cores.size(); ++s) r[s] = cores[s].dim(0);
  return r;
}

Index TtnState::max_rank() const {
  Index m = 1;
  for (size_t s = 1; s < cores.size(); ++s) m = std::max(m, cores[s].dim(0));
  return m;
}

Index TtnState::size() const {
  Index n = 0;
  for (const auto& c : cores) n += c.size();
  return n;
}

std::pair<Index, Index> page_position(Index a, Index d1, Index d2) {
  Index count = 0;
  for (Index diag = 0; diag <= d1 + d2 - 2; ++diag) {
    const Index hi = std::min(diag, d1 - 1);
    const Index lo = std::max<Index>(0, diag - (d2 - 1));
    const Index len = hi - lo + 1;
    if (a < count + len) {
      const Index beta = hi - (a - count);
      return {beta, diag - beta};
    }
    count += len;
  }
  throw StateError("page index exceeds the page grid");
}

TtnState init_state(const TreeTopology& topo, const Mat& rho0, const Ranks& ranks) {
  const Index m = topo.dim();
  if (rho0.rows() != m || rho0.cols() != m) throw StateError("init_state: rho0 has the wrong shape");
  if ((rho0 - rho0.adjoint()).cwiseAbs().maxCoeff() > 1e-10) throw StateError("init_state: rho0 is not Hermitian");
  if (std::abs(rho0.trace() - cplx(1.0)) > 1e-10) throw StateError("init_state: rho0 must have unit trace");
  validate_ranks(topo, ranks, true);

  TtnState st;
  st.topo = topo;
  st.cores.resize(static_cast<size_t>(topo.num_nodes()));
  Tensor a0({m, m, ranks[1]});
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) a0(i, j, 0) = rho0(i, j);
  st.cores[0] = std::move(a0);
  for (int s = 1; s < topo.num_nodes(); ++s) {
    const auto d = node_dims(topo, ranks, s);
    Tensor u({d[0], d[1], d[2]});
    for (Index a = 0; a < d[0]; ++a) {
      const auto [b, g] = page_position(a, d[1], d[2]);
      u(a, b, g) = 1.0;
    }
    st.cores[static_cast<size_t>(s)] = std::move(u);
  }
  return st;
}

Mat extract_rho(const TtnState& state) {
  const TreeTopology& topo = state.topo;
  const int n = topo.num_nodes();
  std::vector<Vec> t(static_cast<size_t>(n));
  for (int s = n - 1; s >= 1; --s) {
    const Tensor& u = state.cores[static_cast<size_t>(s)];
    const Node& node = topo.node(s);
    auto leg_vec = [&](int l) -> Vec {
      const Leg& leg = node.legs[static_cast<size_t>(l)];
      if (leg.kind == LegKind::Bond) return t[static_cast<size_t>(leg.ref)];
      Vec e = Vec::Zero(u.dim(l));
      e[0] = 1.0;
      return e;
    };
    const Vec v1 = leg_vec(1);
    const Vec v2 = leg_vec(2);
    Eigen::Map<const RowMat> x(u.data(), u.dim(0) * u.dim(1), u.dim(2));
    const Vec y = x * v2;
    Eigen::Map<const RowMat> ym(y.data(), u.dim(0), u.dim(1));
    t[static_cast<size_t>(s)] = ym * v1;
  }
  const Tensor& a0 = state.cores[0];
  const Index m = a0.dim(0);
  Eigen::Map<const RowMat> x(a0.data(), m * m, a0.dim(2));
  const Vec r = x * t[1];
  Mat rho(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) rho(i, j) = r[i * m + j];
  return rho;
}

// Branch of bond 1: the whole non-root tree as a row basis.
Branch root_branch(const TtnState& state) {
  const TreeTopology& topo = state.topo;
  const int n = topo.num_nodes();
  std::vector<Branch> br(static_cast<size_t>(n));
  for (int s = n - 1; s >= 1; --s) {
    const Node& node = topo.node(s);
    const Branch b1 = leg_branch(topo, node.legs[1], br);
    const Branch b2 = leg_branch(topo, node.legs[2], br);
    const Tensor& u = state.cores[static_cast<size_t>(s)];
    const Tensor x = apply_leg(u, 2, Mat(b2.t.transpose()));
    const Tensor y = apply_leg(x, 1, Mat(b1.t.transpose()));
    Branch b;
    b.t = Eigen::Map<const RowMat>(y.data(), y.dim(0), y.dim(1) * y.dim(2));
    b.features = b1.features;
    b.features.insert(b.features.end(), b2.features.begin(), b2.features.end());
    br[static_cast<size_t>(s)] = std::move(b);
  }
  return std::move(br[1]);
}

DenseEdo dense_edo(const TtnState& state, Index guard) {
  const TreeTopology& topo = state.topo;
  std::vector<Index> dims{topo.dim(), topo.dim()};
  for (int n : topo.depths()) dims.push_back(n);
  if (dense_size(dims) > guard) throw StateError("dense_edo: size exceeds the guard");

  const Branch b1 = root_branch(state);
  const Tensor full = apply_leg(state.cores[0], 2, Mat(b1.t.transpose()));

  // Axes are (i, j, features in leg order); bring them to (i, j, n_1 .. n_K).
  const auto& feats = b1.features;
  std::vector<Index> cur{topo.dim(), topo.dim()};
  for (int k : feats) cur.push_back(topo.depths()[static_cast<size_t>(k)]);
  std::vector<int> perm{0, 1};
  for (int k = 0; k < topo.num_features(); ++k)
    perm.push_back(2 + static_cast<int>(std::find(feats.begin(), feats.end(), k) - feats.begin()));
  DenseEdo edo;
  edo.dims = dims;
  edo.data = permute_axes(full.flat(), cur, perm);
  edo.time = state.time;
  return edo;
}

void regauge(TtnState& st, bool absorb_root) {
  const TreeTopology& topo = st.topo;
  for (int s = topo.num_nodes() - 1; s >= 1; --s) {
    Tensor& u = st.cores[static_cast<size_t>(s)];
    const Mat x = unfold(u, 0).transpose();
    const Mat q = orthonormal_columns(x);
    const Mat r = q.adjoint() * x;
    u = fold(RowMat(q.transpose()), 0, u.dims());
    const int p = topo.parent(s);
    if (p == 0 && !absorb_root) continue;
    Tensor& c = st.cores[static_cast<size_t>(p)];
    c = apply_leg(c, topo.leg_in_parent(s), r);
  }
}

TtnState decompose_dense(const DenseEdo& edo, const TreeTopology& topo, std::optional<Ranks> ranks) {
  const Ranks r = ranks ? *ranks : full_ranks(topo);
  validate_ranks(topo, r);
  const int n = topo.num_nodes();
  const int nk = topo.num_features();
  if (static_cast<int>(edo.dims.size()) != nk + 2) throw StateError("decompose_dense: EDO order does not match tree");

  // Leg-order features of each subtree.
  std::vector<std::vector<int>> order(static_cast<size_t>(n));
  for (int s = n - 1; s >= 1; --s)
    for (int l = 1; l < 3; ++l) {
      const Leg& leg = topo.node(s).legs[static_cast<size_t>(l)];
      if (leg.kind == LegKind::Bond) {
        const auto& c = order[static_cast<size_t>(leg.ref)];
        order[static_cast<size_t>(s)].insert(order[static_cast<size_t>(s)].end(), c.begin(), c.end());
      } else if (leg.kind == LegKind::Bexciton) {
        order[static_cast<size_t>(s)].push_back(leg.ref);
      }
    }

  std::vector<RowMat> basis(static_cast<size_t>(n));
  for (int s = 1; s < n; ++s) {
    const auto& sub = order[static_cast<size_t>(s)];
    std::vector<int> perm{0, 1};
    for (int k = 0; k < nk; ++k)
      if (std::find(sub.begin(), sub.end(), k) == sub.end()) perm.push_back(k + 2);
    Index cols = 1;
    for (int k : sub) {
      perm.push_back(k + 2);
      cols *= edo.dims[static_cast<size_t>(k + 2)];
    }
    const Vec p = permute_axes(edo.data, edo.dims, perm);
    const Mat x = Eigen::Map<const RowMat>(p.data(), p.size() / cols, cols);
    const Svd sv = svd_thin(x);
    const Index rank = r[static_cast<size_t>(s)];
    RowMat b = RowMat::Zero(rank, cols);
    const Index have = std::min<Index>(rank, sv.v.cols());
    b.topRows(have) = sv.v.leftCols(have).adjoint();
    if (have < rank) {
      // Complete the row basis when the EDO itself has lower rank.
      Mat q = Mat::Zero(cols, rank);
      q.leftCols(have) = sv.v.leftCols(have);
      for (Index c = have, e = 0; c < rank; ++e) {
        Vec v = Vec::Zero(cols);
        v[e] = 1.0;
        v -= q.leftCols(c) * (q.leftCols(c).adjoint() * v);
        if (v.norm() > 1e-8) q.col(c++) = v / v.norm();
      }
      b = q.adjoint();
    }
    basis[static_cast<size_t>(s)] = std::move(b);
  }

  TtnState st;
  st.topo = topo;
  st.time = edo.time;
  st.cores.resize(static_cast<size_t>(n));
  for (int s = 1; s < n; ++s) {
    const Node& node = topo.node(s);
    auto leg_basis = [&](int l) -> RowMat {
      const Leg& leg = node.legs[static_cast<size_t>(l)];
      if (leg.kind == LegKind::Bond) return basis[static_cast<size_t>(leg.ref)];
      const Index d = topo.open_size(leg);
      return RowMat::Identity(d, d);
    };
    const RowMat b1 = leg_basis(1);
    const RowMat b2 = leg_basis(2);
    const auto d = node_dims(topo, r, s);
    Tensor u({d[0], d[1], d[2]});
    const RowMat& bs = basis[static_cast<size_t>(s)];
    for (Index a = 0; a < d[0]; ++a) {
      Eigen::Map<const RowMat> xa(bs.row(a).data(), b1.cols(), b2.cols());
      const RowMat ua = b1.conjugate() * xa * b2.adjoint();
      Eigen::Map<RowMat>(u.data() + a * d[1] * d[2], d[1], d[2]) = ua;
    }
    st.cores[static_cast<size_t>(s)] = std::move(u);
  }
  const auto& all = order[1];
  std::vector<int> perm{0, 1};
  for (int k : all) perm.push_back(k + 2);
  const Vec p = permute_axes(edo.data, edo.dims, perm);
  // Truncated bases are not nested, so the cores are re-orthonormalized and the root is
  // the projection onto the branch they actually span.
  regauge(st, false);
  const Index m = edo.dims[0];
  Eigen::Map<const RowMat> x(p.data(), m * m, p.size() / (m * m));
  const RowMat a = x * root_branch(st).t.adjoint();
  Tensor a0({m, m, r[1]});
  Eigen::Map<RowMat>(a0.data(), m * m, r[1]) = a;
  st.cores[0] = std::move(a0);
  return st;
}

std::vector<double> check_semiunitary(const TtnState& state) {
  std::vector<double> dev(state.cores.size(), 0.0);
  for (size_t s = 1; s < state.cores.size(); ++s) {
    const Tensor& u = state.cores[s];
    Eigen::Map<const RowMat> x(u.data(), u.dim(0), u.size() / u.dim(0));
    const Mat g = x.conjugate() * x.transpose();
    dev[s] = (g - Mat::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
  }
  return dev;
}

void save_checkpoint(const std::string& path, const TtnState& state, const std::string& metadata) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StateError("checkpoint: cannot open " + tmp);
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    put(out, state.topo.hash());
    put(out, state.time);
    put(out, static_cast<std::uint32_t>(state.cores.size()));
    for (size_t s = 1; s < state.cores.size(); ++s) put(out, static_cast<std::uint64_t>(state.cores[s].dim(0)));
    put(out, static_cast<std::uint64_t>(metadata.size()));
    out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    for (const Tensor& c : state.cores) {
      put(out, static_cast<std::uint32_t>(c.order()));
      for (Index d : c.dims()) put(out, static_cast<std::uint64_t>(d));
      out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(cplx)));
    }
    if (!out) throw StateError("checkpoint: write failed");
  }
  std::rename(tmp.c_str(), path.c_str());
}

Checkpoint load_checkpoint(const std::string& path, const TreeTopology& topo) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw StateError("checkpoint: bad magic");
  if (get<std::uint32_t>(in) != kVersion) throw StateError("checkpoint: unsupported version");
  if (get<std::uint64_t>(in) != topo.hash()) throw StateError("checkpoint: topology does not match");
  Checkpoint cp;
  cp.state.topo = topo;
  cp.state.time = get<double>(in);
  const auto n = get<std::uint32_t>(in);
  if (static_cast<int>(n) != topo.num_nodes()) throw StateError("checkpoint: node count mismatch");
  Ranks ranks(n, 1);
  for (std::uint32_t s = 1; s < n; ++s) ranks[s] = static_cast<Index>(get<std::uint64_t>(in));
  validate_ranks(topo, ranks);
  const auto mlen = get<std::uint64_t>(in);
  cp.metadata.resize(mlen);
  in.read(cp.metadata.data(), static_cast<std::streamsize>(mlen));
  cp.state.cores.resize(n);
  for (std::uint32_t s = 0; s < n; ++s) {
    const auto order = get<std::uint32_t>(in);
    if (order != 3) throw StateError("checkpoint: cores must be order 3");
    std::vector<Index> dims;
    for (std::uint32_t k = 0; k < order; ++k) dims.push_back(static_cast<Index>(get<std::uint64_t>(in)));
    Tensor c(dims);
    const auto expect = s == 0 ? std::array<Index, 3>{topo.dim(), topo.dim(), ranks[1]} : node_dims(topo, ranks, static_cast<int>(s));
    if (!std::equal(dims.begin(), dims.end(), expect.begin())) throw StateError("checkpoint: core shape mismatch");
    in.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(c.size() * sizeof(cplx)));
    if (!in) throw StateError("checkpoint: truncated payload");
    cp.state.cores[s] = std::move(c);
  }
  return cp;
}

}  // namespace ttnheom::ttn
