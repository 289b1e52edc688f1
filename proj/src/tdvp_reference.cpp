#include "ttnheom/tdvp.hpp"

#include <Eigen/Eigenvalues>

#include <string>

namespace ttnheom::tdvp {

using ttn::Leg;
using ttn::LegKind;

namespace {

Eigen::Map<const RowMat> rows0(const Tensor& t) { return {t.data(), t.dim(0), t.size() / t.dim(0)}; }

// Term m's factor on one leg of core s; std::nullopt for the identity.
std::optional<Mat> leg_factor(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, size_t m,
                              int s, int l) {
  const Leg& leg = st.topo.node(s).legs[static_cast<size_t>(l)];
  if (leg.kind == LegKind::Bond) return mf.at(m, leg.ref);
  if (leg.kind == LegKind::Bexciton && g.terms[m].bex == leg.ref) return g.terms[m].h_bex;
  return std::nullopt;
}

Tensor apply_system(const Tensor& t, const gen::SopGenerator& g, size_t m) {
  Tensor x = t;
  if (const auto& gt = g.h_gt(m)) x = apply_leg(x, 0, *gt);
  if (const auto& lt = g.h_lt(m)) x = apply_leg(x, 1, *lt);
  return x;
}

Tensor apply_sibling(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, size_t m, int p,
                     int ko) {
  const Tensor& u = st.cores[static_cast<size_t>(p)];
  if (const auto f = leg_factor(st, mf, g, m, p, ko)) return apply_leg(u, ko, *f);
  return u;
}

Mat pinv_hermitian(const Mat& d) {
  const Mat h = 0.5 * (d + d.adjoint());
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  const RVec& ev = es.eigenvalues();
  const double cut = 1e-14 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  RVec inv(ev.size());
  for (Index k = 0; k < ev.size(); ++k) inv[k] = std::abs(ev[k]) > cut ? 1.0 / ev[k] : 0.0;
  return es.eigenvectors() * inv.cast<cplx>().asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace

const std::optional<Mat>& MeanFieldCache::at(size_t m, int s) const {
  if (!done.at(static_cast<size_t>(s)))
    throw OrderError("mean field of bond " + std::to_string(s) + " read before it was built");
  return f.at(m)[static_cast<size_t>(s)];
}

const Mat& DensityCache::density(int s) const {
  if (!done.at(static_cast<size_t>(s))) throw OrderError("density of bond " + std::to_string(s) + " read early");
  return d[static_cast<size_t>(s)];
}

const Mat& DensityCache::weighted(size_t m, int s) const {
  if (!done.at(static_cast<size_t>(s))) throw OrderError("density of bond " + std::to_string(s) + " read early");
  return g.at(m)[static_cast<size_t>(s)];
}

const Mat& RegularizedCache::weighted(size_t m, int s) const {
  if (!done.at(static_cast<size_t>(s))) throw OrderError("regularized weights of bond " + std::to_string(s) + " read early");
  return dbar.at(m)[static_cast<size_t>(s)];
}

MeanFieldCache build_mean_fields(const ttn::TtnState& st, const gen::SopGenerator& g) {
  const int n = st.topo.num_nodes();
  MeanFieldCache mf;
  mf.f.assign(g.terms.size(), std::vector<std::optional<Mat>>(static_cast<size_t>(n)));
  mf.done.assign(static_cast<size_t>(n), 0);
  for (int s = n - 1; s >= 1; --s) {
    const Tensor& u = st.cores[static_cast<size_t>(s)];
    for (size_t m = 0; m < g.terms.size(); ++m) {
      const auto f1 = leg_factor(st, mf, g, m, s, 1);
      const auto f2 = leg_factor(st, mf, g, m, s, 2);
      if (!f1 && !f2) continue;
      Tensor x = u;
      if (f1) x = apply_leg(x, 1, *f1);
      if (f2) x = apply_leg(x, 2, *f2);
      mf.f[m][static_cast<size_t>(s)] = leg_overlap(u, x, 0);
    }
    mf.done[static_cast<size_t>(s)] = 1;
  }
  return mf;
}

DensityCache build_density(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, double t) {
  const int n = st.topo.num_nodes();
  const size_t nt = g.terms.size();
  DensityCache dc;
  dc.d.assign(static_cast<size_t>(n), Mat());
  dc.g.assign(nt, std::vector<Mat>(static_cast<size_t>(n)));
  dc.done.assign(static_cast<size_t>(n), 0);
  for (int s = 1; s < n; ++s) {
    const int p = st.topo.parent(s);
    const int ks = st.topo.leg_in_parent(s);
    const Tensor& u = st.cores[static_cast<size_t>(p)];
    if (p == 0) {
      dc.d[static_cast<size_t>(s)] = leg_overlap(u, u, 2);
      for (size_t m = 0; m < nt; ++m)
        dc.g[m][static_cast<size_t>(s)] = g.coefficient(m, t) * leg_overlap(u, apply_system(u, g, m), 2);
    } else {
      const int ko = 3 - ks;
      dc.d[static_cast<size_t>(s)] = leg_overlap(u, apply_leg(u, 0, dc.density(p)), ks);
      for (size_t m = 0; m < nt; ++m)
        dc.g[m][static_cast<size_t>(s)] =
            leg_overlap(u, apply_leg(apply_sibling(st, mf, g, m, p, ko), 0, dc.weighted(m, p)), ks);
    }
    dc.done[static_cast<size_t>(s)] = 1;
  }
  return dc;
}

RegularizedCache build_regularized(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g,
                                   double t, double epsilon) {
  const int n = st.topo.num_nodes();
  const size_t nt = g.terms.size();
  RegularizedCache rc;
  rc.epsilon = epsilon;
  rc.w.assign(static_cast<size_t>(n), Mat());
  rc.sigma.assign(static_cast<size_t>(n), RVec());
  rc.v.assign(static_cast<size_t>(n), Mat());
  rc.a_hat.assign(static_cast<size_t>(n), Tensor());
  rc.dbar.assign(nt, std::vector<Mat>(static_cast<size_t>(n)));
  rc.done.assign(static_cast<size_t>(n), 0);
  for (int s = 1; s < n; ++s) {
    const int p = st.topo.parent(s);
    const int ks = st.topo.leg_in_parent(s);
    const Tensor& zi = p == 0 ? st.cores[0] : rc.a_hat[static_cast<size_t>(p)];
    const Svd sv = svd_thin(Mat(unfold(zi, ks).transpose()));
    rc.w[static_cast<size_t>(s)] = sv.u;
    rc.sigma[static_cast<size_t>(s)] = sv.s;
    rc.v[static_cast<size_t>(s)] = sv.v;
    const Mat wh = sv.u.adjoint();
    for (size_t m = 0; m < nt; ++m) {
      Tensor z = p == 0 ? apply_system(st.cores[0], g, m)
                        : apply_leg(apply_sibling(st, mf, g, m, p, 3 - ks), 0, rc.weighted(m, p));
      if (p == 0) z.flat() *= g.coefficient(m, t);
      rc.dbar[m][static_cast<size_t>(s)] = wh * unfold(z, ks).transpose();
    }
    rc.a_hat[static_cast<size_t>(s)] =
        apply_leg(st.cores[static_cast<size_t>(s)], 0, Mat(sv.s.cast<cplx>().asDiagonal() * sv.v.adjoint()));
    rc.done[static_cast<size_t>(s)] = 1;
  }
  return rc;
}

Tensor term_children_action(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, size_t m,
                            int s) {
  Tensor x = st.cores[static_cast<size_t>(s)];
  if (const auto f1 = leg_factor(st, mf, g, m, s, 1)) x = apply_leg(x, 1, *f1);
  if (const auto f2 = leg_factor(st, mf, g, m, s, 2)) x = apply_leg(x, 2, *f2);
  return x;
}

Tensor root_rhs(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, double t) {
  const Tensor& a0 = st.cores[0];
  Tensor out(a0.dims());
  for (size_t m = 0; m < g.terms.size(); ++m) {
    const auto& f = mf.at(m, 1);
    const Tensor x = apply_system(f ? apply_leg(a0, 2, *f) : a0, g, m);
    out.flat() += g.coefficient(m, t) * x.flat();
  }
  return out;
}

std::vector<Tensor> su_rhs_regularized(const ttn::TtnState& st, const MeanFieldCache& mf, const RegularizedCache& reg,
                                       const gen::SopGenerator& g) {
  const int n = st.topo.num_nodes();
  std::vector<Tensor> out(static_cast<size_t>(n));
  for (int s = 1; s < n; ++s) {
    const Tensor& u = st.cores[static_cast<size_t>(s)];
    RowMat acc = RowMat::Zero(reg.sigma[static_cast<size_t>(s)].size(), u.size() / u.dim(0));
    for (size_t m = 0; m < g.terms.size(); ++m)
      acc.noalias() += reg.weighted(m, s) * rows0(term_children_action(st, mf, g, m, s));
    RVec inv = reg.sigma[static_cast<size_t>(s)];
    for (Index k = 0; k < inv.size(); ++k) inv[k] = 1.0 / std::max(inv[k], reg.epsilon);
    Tensor z(u.dims());
    Eigen::Map<RowMat>(z.data(), u.dim(0), u.size() / u.dim(0)) =
        reg.v[static_cast<size_t>(s)] * (inv.cast<cplx>().asDiagonal() * acc);
    project_out(u, z);
    out[static_cast<size_t>(s)] = std::move(z);
  }
  return out;
}

std::vector<Tensor> su_rhs_inverse(const ttn::TtnState& st, const MeanFieldCache& mf, const DensityCache& dens,
                                   const gen::SopGenerator& g) {
  const int n = st.topo.num_nodes();
  std::vector<Tensor> out(static_cast<size_t>(n));
  for (int s = 1; s < n; ++s) {
    const Tensor& u = st.cores[static_cast<size_t>(s)];
    RowMat acc = RowMat::Zero(u.dim(0), u.size() / u.dim(0));
    for (size_t m = 0; m < g.terms.size(); ++m)
      acc.noalias() += dens.weighted(m, s) * rows0(term_children_action(st, mf, g, m, s));
    Tensor z(u.dims());
    Eigen::Map<RowMat>(z.data(), u.dim(0), u.size() / u.dim(0)) = pinv_hermitian(dens.density(s)) * acc;
    project_out(u, z);
    out[static_cast<size_t>(s)] = std::move(z);
  }
  return out;
}

}  // namespace ttnheom::tdvp
