#include "ttnheom/tdvp.hpp"

#include <algorithm>
#include <string>

namespace ttnheom::tdvp {

using ttn::Leg;
using ttn::LegKind;

namespace {

Mat accumulate(const Mat& into, const Mat& add) { return into.size() == 0 ? add : Mat(into + add); }

Eigen::Map<const RowMat> rows0(const Tensor& t) { return {t.data(), t.dim(0), t.size() / t.dim(0)}; }

}  // namespace

Channels Channels::from(const gen::SopGenerator& g) {
  Channels ch;
  const size_t nk = g.depths.size();
  ch.bex_complete.assign(nk, Mat());
  for (const auto& term : g.terms)
    if (term.bex >= 0 && term.sys_id >= 0 &&
        std::find(ch.sigmas.begin(), ch.sigmas.end(), term.sys_id) == ch.sigmas.end())
      ch.sigmas.push_back(term.sys_id);
  ch.bex_sigma.assign(nk, std::vector<Mat>(ch.sigmas.size()));
  for (size_t m = 0; m < g.terms.size(); ++m) {
    const auto& term = g.terms[m];
    if (term.bex < 0) {
      ch.sys_terms.push_back(m);
      continue;
    }
    if (term.time_dependent()) throw gen::GeneratorError("channels: bexciton terms must have constant coefficients");
    const size_t k = static_cast<size_t>(term.bex);
    const Mat h = term.coeff * term.h_bex;
    if (term.sys_id < 0) {
      ch.bex_complete[k] = accumulate(ch.bex_complete[k], h);
    } else {
      const size_t c = static_cast<size_t>(std::find(ch.sigmas.begin(), ch.sigmas.end(), term.sys_id) - ch.sigmas.begin());
      ch.bex_sigma[k][c] = accumulate(ch.bex_sigma[k][c], h);
    }
  }
  return ch;
}

void Environments::reset(int num_nodes) {
  down_.assign(static_cast<size_t>(num_nodes), Env{});
  up_.assign(static_cast<size_t>(num_nodes), Env{});
  down_ok_.assign(static_cast<size_t>(num_nodes), 0);
  up_ok_.assign(static_cast<size_t>(num_nodes), 0);
}

const Env& Environments::down(int b) const {
  if (!down_ok_.at(static_cast<size_t>(b)))
    throw OrderError("leaf-side environment of bond " + std::to_string(b) + " read before it was built");
  return down_[static_cast<size_t>(b)];
}

const Env& Environments::up(int b) const {
  if (!up_ok_.at(static_cast<size_t>(b)))
    throw OrderError("root-side environment of bond " + std::to_string(b) + " read before it was built");
  return up_[static_cast<size_t>(b)];
}

void Environments::set_down(int b, Env e) {
  down_.at(static_cast<size_t>(b)) = std::move(e);
  down_ok_[static_cast<size_t>(b)] = 1;
}

void Environments::set_up(int b, Env e) {
  up_.at(static_cast<size_t>(b)) = std::move(e);
  up_ok_[static_cast<size_t>(b)] = 1;
}

void Environments::invalidate() {
  std::fill(down_ok_.begin(), down_ok_.end(), 0);
  std::fill(up_ok_.begin(), up_ok_.end(), 0);
}

Engine::Engine(const gen::SopGenerator& g) : gen_(&g), ch_(Channels::from(g)) {}

Sources Engine::node_sources(const ttn::TreeTopology& topo, int s) const {
  Sources src(3);
  const auto& node = topo.node(s);
  for (int l = 0; l < 3; ++l) {
    const Leg& leg = node.legs[static_cast<size_t>(l)];
    switch (leg.kind) {
      case LegKind::SystemKet:
        src[static_cast<size_t>(l)] = {SourceKind::Ket, -1};
        break;
      case LegKind::SystemBra:
        src[static_cast<size_t>(l)] = {SourceKind::Bra, -1};
        break;
      case LegKind::Bexciton:
        src[static_cast<size_t>(l)] = {SourceKind::Bex, leg.ref};
        break;
      case LegKind::Dummy:
        src[static_cast<size_t>(l)] = {SourceKind::Dummy, -1};
        break;
      case LegKind::Bond:
        src[static_cast<size_t>(l)] = (l == 0 && s != 0) ? Source{SourceKind::Up, s} : Source{SourceKind::Down, leg.ref};
        break;
    }
  }
  return src;
}

const Mat* Engine::leg_complete(const Source& s) const {
  const Mat* m = nullptr;
  if (s.kind == SourceKind::Bex) m = &ch_.bex_complete[static_cast<size_t>(s.ref)];
  else if (s.kind == SourceKind::Down) m = &envs_.down(s.ref).complete;
  return (m && m->size() > 0) ? m : nullptr;
}

const Mat* Engine::leg_sigma(const Source& s, int c) const {
  const Mat* m = nullptr;
  if (s.kind == SourceKind::Bex) m = &ch_.bex_sigma[static_cast<size_t>(s.ref)][static_cast<size_t>(c)];
  else if (s.kind == SourceKind::Down) m = &envs_.down(s.ref).sigma[static_cast<size_t>(c)];
  return (m && m->size() > 0) ? m : nullptr;
}

const Mat* Engine::up_complete(const Source& s) const {
  const Mat& m = envs_.up(s.ref).complete;
  return m.size() > 0 ? &m : nullptr;
}

const Mat* Engine::up_sigma(const Source& s, int c) const {
  const Mat& m = envs_.up(s.ref).sigma[static_cast<size_t>(c)];
  return m.size() > 0 ? &m : nullptr;
}

void Engine::apply_sys_op(const Tensor& t, int ket, int bra, const gen::SystemOp& op, cplx scale, Tensor& out) const {
  if (op.gt && op.lt) {
    apply_leg_add(apply_leg(t, ket, *op.gt), bra, *op.lt, scale, out);
  } else if (op.gt) {
    apply_leg_add(t, ket, *op.gt, scale, out);
  } else if (op.lt) {
    apply_leg_add(t, bra, *op.lt, scale, out);
  } else {
    out.flat() += scale * t.flat();
  }
}

Tensor Engine::apply(const Tensor& t, const Sources& src, double time) const {
  Tensor out(t.dims());
  int ket = -1, bra = -1, up = -1;
  for (int l = 0; l < static_cast<int>(src.size()); ++l) {
    if (src[static_cast<size_t>(l)].kind == SourceKind::Ket) ket = l;
    if (src[static_cast<size_t>(l)].kind == SourceKind::Bra) bra = l;
    if (src[static_cast<size_t>(l)].kind == SourceKind::Up) up = l;
  }
  static const gen::SystemOp kIdentity;
  if (ket >= 0) {
    for (size_t m : ch_.sys_terms) {
      const int sid = gen_->terms[m].sys_id;
      apply_sys_op(t, ket, bra, sid < 0 ? kIdentity : gen_->sys_ops[static_cast<size_t>(sid)],
                   gen_->coefficient(m, time), out);
    }
  } else if (up >= 0) {
    if (const Mat* m = up_complete(src[static_cast<size_t>(up)])) apply_leg_add(t, up, *m, 1.0, out);
  }
  for (int l = 0; l < static_cast<int>(src.size()); ++l)
    if (const Mat* m = leg_complete(src[static_cast<size_t>(l)])) apply_leg_add(t, l, *m, 1.0, out);
  if (ket < 0 && up < 0) return out;
  for (int c = 0; c < ch_.num_sigma(); ++c) {
    std::optional<Tensor> y;
    for (int l = 0; l < static_cast<int>(src.size()); ++l)
      if (const Mat* m = leg_sigma(src[static_cast<size_t>(l)], c)) {
        if (!y) y.emplace(t.dims());
        apply_leg_add(t, l, *m, 1.0, *y);
      }
    if (!y) continue;
    if (ket >= 0) {
      apply_sys_op(*y, ket, bra, gen_->sys_ops[static_cast<size_t>(ch_.sigmas[static_cast<size_t>(c)])], 1.0, out);
    } else if (const Mat* m = up_sigma(src[static_cast<size_t>(up)], c)) {
      apply_leg_add(*y, up, *m, 1.0, out);
    }
  }
  return out;
}

Env Engine::down_env(const Tensor& u, const Sources& src) const {
  Env e;
  e.sigma.assign(static_cast<size_t>(ch_.num_sigma()), Mat());
  std::optional<Tensor> z;
  for (int l = 1; l < static_cast<int>(src.size()); ++l)
    if (const Mat* m = leg_complete(src[static_cast<size_t>(l)])) {
      if (!z) z.emplace(u.dims());
      apply_leg_add(u, l, *m, 1.0, *z);
    }
  if (z) e.complete = leg_overlap(u, *z, 0);
  for (int c = 0; c < ch_.num_sigma(); ++c) {
    std::optional<Tensor> y;
    for (int l = 1; l < static_cast<int>(src.size()); ++l)
      if (const Mat* m = leg_sigma(src[static_cast<size_t>(l)], c)) {
        if (!y) y.emplace(u.dims());
        apply_leg_add(u, l, *m, 1.0, *y);
      }
    if (y) e.sigma[static_cast<size_t>(c)] = leg_overlap(u, *y, 0);
  }
  return e;
}

Env Engine::up_env(const Tensor& t, const Sources& src, int leg, double time) const {
  Env e;
  e.sigma.assign(static_cast<size_t>(ch_.num_sigma()), Mat());
  Sources rest = src;
  rest[static_cast<size_t>(leg)] = {SourceKind::Dummy, -1};
  e.complete = leg_overlap(t, apply(t, rest, time), leg);
  int ket = -1, bra = -1, up = -1;
  for (int l = 0; l < static_cast<int>(src.size()); ++l) {
    if (rest[static_cast<size_t>(l)].kind == SourceKind::Ket) ket = l;
    if (rest[static_cast<size_t>(l)].kind == SourceKind::Bra) bra = l;
    if (rest[static_cast<size_t>(l)].kind == SourceKind::Up) up = l;
  }
  for (int c = 0; c < ch_.num_sigma(); ++c) {
    if (ket >= 0) {
      Tensor y(t.dims());
      apply_sys_op(t, ket, bra, gen_->sys_ops[static_cast<size_t>(ch_.sigmas[static_cast<size_t>(c)])], 1.0, y);
      e.sigma[static_cast<size_t>(c)] = leg_overlap(t, y, leg);
    } else if (up >= 0) {
      if (const Mat* m = up_sigma(rest[static_cast<size_t>(up)], c))
        e.sigma[static_cast<size_t>(c)] = leg_overlap(t, apply_leg(t, up, *m), leg);
    }
  }
  return e;
}

void Engine::build_down(const ttn::TtnState& st, int s) {
  envs_.set_down(s, down_env(st.cores[static_cast<size_t>(s)], node_sources(st.topo, s)));
}

void Engine::build_up(const ttn::TtnState& st, int child, double time) {
  const int p = st.topo.parent(child);
  envs_.set_up(child, up_env(st.cores[static_cast<size_t>(p)], node_sources(st.topo, p), st.topo.leg_in_parent(child),
                             time));
}

void Engine::build_all_down(const ttn::TtnState& st) {
  envs_.reset(st.topo.num_nodes());
  for (int s = st.topo.num_nodes() - 1; s >= 1; --s) build_down(st, s);
}

void project_out(const Tensor& u, Tensor& z) {
  const auto ur = rows0(u);
  Eigen::Map<RowMat> zr(z.data(), z.dim(0), z.size() / z.dim(0));
  const Mat overlap = zr * ur.adjoint();
  zr.noalias() -= overlap * ur;
}

namespace {

// Root-side weights of one bond: sigma V^dagger and the channel-resolved D-bar matrices.
struct Weighted {
  Mat id;
  Mat complete;
  std::vector<Mat> sigma;
  Tensor a_hat;
};

}  // namespace

void Engine::direct_rhs(const ttn::TtnState& st, double time, double eps, std::vector<Tensor>& out) {
  const auto& topo = st.topo;
  const int n = topo.num_nodes();
  const int ns = ch_.num_sigma();
  build_all_down(st);
  out.resize(static_cast<size_t>(n));
  const Tensor& a0 = st.cores[0];
  out[0] = apply(a0, node_sources(topo, 0), time);

  std::vector<Weighted> wb(static_cast<size_t>(n));
  for (int s = 1; s < n; ++s) {
    const int p = topo.parent(s);
    const int ks = topo.leg_in_parent(s);
    const Tensor* zi = nullptr;
    Tensor zc;
    std::vector<Tensor> zs(static_cast<size_t>(ns));
    if (p == 0) {
      zi = &a0;
      Sources src = node_sources(topo, 0);
      src[2] = {SourceKind::Dummy, -1};
      zc = apply(a0, src, time);
      for (int c = 0; c < ns; ++c) {
        zs[static_cast<size_t>(c)] = Tensor(a0.dims());
        apply_sys_op(a0, 0, 1, gen_->sys_ops[static_cast<size_t>(ch_.sigmas[static_cast<size_t>(c)])], 1.0,
                     zs[static_cast<size_t>(c)]);
      }
    } else {
      const Tensor& u = st.cores[static_cast<size_t>(p)];
      const Weighted& wp = wb[static_cast<size_t>(p)];
      const Sources src = node_sources(topo, p);
      const int ko = 3 - ks;
      zi = &wp.a_hat;
      zc = apply_leg(u, 0, wp.complete);
      if (const Mat* m = leg_complete(src[static_cast<size_t>(ko)])) apply_leg_add(wp.a_hat, ko, *m, 1.0, zc);
      for (int c = 0; c < ns; ++c) {
        if (const Mat* m = leg_sigma(src[static_cast<size_t>(ko)], c))
          apply_leg_add(apply_leg(u, ko, *m), 0, wp.sigma[static_cast<size_t>(c)], 1.0, zc);
        zs[static_cast<size_t>(c)] = apply_leg(u, 0, wp.sigma[static_cast<size_t>(c)]);
      }
    }

    const Mat x = unfold(*zi, ks).transpose();
    const Svd sv = svd_thin(x);
    const Mat wh = sv.u.adjoint();
    Weighted& w = wb[static_cast<size_t>(s)];
    w.id = sv.s.cast<cplx>().asDiagonal() * sv.v.adjoint();
    w.complete = wh * unfold(zc, ks).transpose();
    w.sigma.resize(static_cast<size_t>(ns));
    for (int c = 0; c < ns; ++c) w.sigma[static_cast<size_t>(c)] = wh * unfold(zs[static_cast<size_t>(c)], ks).transpose();

    const Tensor& u = st.cores[static_cast<size_t>(s)];
    if (!topo.children(s).empty()) w.a_hat = apply_leg(u, 0, w.id);

    const Sources src = node_sources(topo, s);
    Tensor hc(u.dims());
    for (int l = 1; l < 3; ++l)
      if (const Mat* m = leg_complete(src[static_cast<size_t>(l)])) apply_leg_add(u, l, *m, 1.0, hc);
    RowMat acc = w.id * rows0(hc);
    acc.noalias() += w.complete * rows0(u);
    for (int c = 0; c < ns; ++c) {
      std::optional<Tensor> y;
      for (int l = 1; l < 3; ++l)
        if (const Mat* m = leg_sigma(src[static_cast<size_t>(l)], c)) {
          if (!y) y.emplace(u.dims());
          apply_leg_add(u, l, *m, 1.0, *y);
        }
      if (y) acc.noalias() += w.sigma[static_cast<size_t>(c)] * rows0(*y);
    }
    RVec inv = sv.s;
    for (Index k = 0; k < inv.size(); ++k) inv[k] = 1.0 / std::max(inv[k], eps);
    Tensor z(u.dims());
    Eigen::Map<RowMat>(z.data(), u.dim(0), u.size() / u.dim(0)).noalias() =
        sv.v * (inv.cast<cplx>().asDiagonal() * acc);
    project_out(u, z);
    out[static_cast<size_t>(s)] = std::move(z);
  }
}

}  // namespace ttnheom::tdvp
