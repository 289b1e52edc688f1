#include "ttnheom/propagate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

namespace ttnheom::prop {

using tdvp::Source;
using tdvp::SourceKind;
using tdvp::Sources;

namespace {

int leg_toward(const ttn::TreeTopology& topo, int r, int s) {
  if (s != 0 && topo.parent(s) == r) return topo.leg_in_parent(s);
  if (r != 0 && topo.parent(r) == s) return 0;
  throw std::logic_error("nodes " + std::to_string(r) + " and " + std::to_string(s) + " are not adjacent");
}

bool is_down(const ttn::TreeTopology& topo, int r, int s) { return s != 0 && topo.parent(s) == r; }

void flatten(const std::vector<Tensor>& cores, OdeState& x) {
  size_t n = 0;
  for (const auto& c : cores) n += static_cast<size_t>(2 * c.size());
  x.resize(n);
  double* p = x.data();
  for (const auto& c : cores) {
    std::memcpy(p, c.data(), static_cast<size_t>(c.size()) * sizeof(cplx));
    p += 2 * c.size();
  }
}

void unflatten(const OdeState& x, std::vector<Tensor>& cores) {
  const double* p = x.data();
  for (auto& c : cores) {
    std::memcpy(static_cast<void*>(c.data()), p, static_cast<size_t>(c.size()) * sizeof(cplx));
    p += 2 * c.size();
  }
}

// Orthonormal columns q extended to k columns with unit vectors orthogonalized against them.
Mat complete_columns(const Mat& q, Index k) {
  if (q.cols() >= k) return q.leftCols(k);
  Mat out = Mat::Zero(q.rows(), k);
  out.leftCols(q.cols()) = q;
  for (Index c = q.cols(), e = 0; c < k && e < q.rows(); ++e) {
    Vec v = Vec::Zero(q.rows());
    v[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) v -= out.leftCols(c) * (out.leftCols(c).adjoint() * v);
    if (v.norm() > 1e-8) out.col(c++) = v / v.norm();
  }
  return out;
}

Tensor with_leg(const RowMat& m, int leg, std::vector<Index> dims) {
  dims[static_cast<size_t>(leg)] = m.rows();
  return fold(m, leg, dims);
}

}  // namespace

Strategy parse_strategy(const std::string& s) {
  if (s == "direct") return Strategy::Direct;
  if (s == "ps1") return Strategy::Ps1;
  if (s == "ps2") return Strategy::Ps2;
  if (s == "mixed") return Strategy::Mixed;
  throw std::invalid_argument("unknown propagator '" + s + "' (direct, ps1, ps2, mixed)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Direct:
      return "direct";
    case Strategy::Ps1:
      return "ps1";
    case Strategy::Ps2:
      return "ps2";
    case Strategy::Mixed:
      return "mixed";
  }
  return "direct";
}

Propagator::Propagator(const gen::SopGenerator& g, RunConfig cfg)
    : gen_(&g), cfg_(std::move(cfg)), engine_(g), h_direct_(cfg_.direct.ode.h_init) {}

void Propagator::evolve(Tensor& t, const Sources& src, double tau, double time) {
  if (tau == 0.0) return;
  OdeState x(static_cast<size_t>(2 * t.size()));
  std::memcpy(x.data(), t.data(), x.size() * sizeof(double));
  Tensor work = t;
  auto rhs = [&](const OdeState& y, OdeState& dy, double) {
    std::memcpy(static_cast<void*>(work.data()), y.data(), y.size() * sizeof(double));
    poll(time);
    const Tensor d = engine_.apply(work, src, time);
    dy.resize(y.size());
    std::memcpy(dy.data(), d.data(), dy.size() * sizeof(double));
  };
  double h = std::min(std::abs(tau), cfg_.ps.ode.h_max);
  try {
    integrate_rk45(x, 0.0, tau, rhs, cfg_.ps.ode, h);
  } catch (const StepUnderflow& e) {
    throw PropagationError(std::string("PS sub-step failed: ") + e.what(), time);
  }
  std::memcpy(static_cast<void*>(t.data()), x.data(), x.size() * sizeof(double));
}

void Propagator::evolve_node(ttn::TtnState& st, int s, double tau, double time) {
  evolve(st.cores[static_cast<size_t>(s)], engine_.node_sources(st.topo, s), tau, time);
}

void Propagator::move1(ttn::TtnState& st, int r, int s, double tau, double time) {
  const auto& topo = st.topo;
  const int l = leg_toward(topo, r, s);
  const int ls = leg_toward(topo, s, r);
  Tensor& tr = st.cores[static_cast<size_t>(r)];
  const Index d = tr.dim(l);
  // k < d only when the other legs cannot carry d; the bond then shrinks without loss.
  const Svd sv = svd_thin(Mat(unfold(tr, l).transpose()));
  const Index k = sv.s.size();
  tr = with_leg(RowMat(sv.u.transpose()), l, tr.dims());
  const Sources src_r = engine_.node_sources(topo, r);
  const bool down = is_down(topo, r, s);
  if (down) engine_.envs().set_up(s, engine_.up_env(tr, src_r, l, time));
  else engine_.envs().set_down(r, engine_.down_env(tr, src_r));
  Tensor m({k, d});
  Eigen::Map<RowMat>(m.data(), k, d) = sv.s.cast<cplx>().asDiagonal() * sv.v.adjoint();
  if (tau != 0.0) {
    const Sources src_m = down ? Sources{{SourceKind::Up, s}, {SourceKind::Down, s}}
                               : Sources{{SourceKind::Down, r}, {SourceKind::Up, r}};
    evolve(m, src_m, tau, time);
  }
  Tensor& ts = st.cores[static_cast<size_t>(s)];
  ts = apply_leg(ts, ls, Mat(Eigen::Map<const RowMat>(m.data(), k, d)));
}

void Propagator::move2(ttn::TtnState& st, int r, int s, double tau, double time) {
  const auto& topo = st.topo;
  const int l = leg_toward(topo, r, s);
  const int ls = leg_toward(topo, s, r);
  Tensor& tr = st.cores[static_cast<size_t>(r)];
  Tensor& ts = st.cores[static_cast<size_t>(s)];
  const Sources src_r = engine_.node_sources(topo, r);
  const Sources src_s = engine_.node_sources(topo, s);
  Sources src;
  for (int k = 0; k < 3; ++k)
    if (k != l) src.push_back(src_r[static_cast<size_t>(k)]);
  for (int k = 0; k < 3; ++k)
    if (k != ls) src.push_back(src_s[static_cast<size_t>(k)]);
  Tensor m = contract(tr, l, ts, ls);
  evolve(m, src, tau, time);

  const Index rows = m.dim(0) * m.dim(1);
  const Index cols = m.dim(2) * m.dim(3);
  const Mat x = Eigen::Map<const RowMat>(m.data(), rows, cols);
  const int bond = is_down(topo, r, s) ? s : r;
  // The s side may exceed its column count: extra rows of S V^dagger are zero and give the
  // next sweep room to populate the bond.
  const Index cap = std::min({cfg_.ps.max_rank, topo.capacity(bond), rows});
  const Svd sv = svd_leading(x, std::min(cap, cols));
  Index count = 0;
  for (Index k = 0; k < sv.s.size(); ++k)
    if (sv.s[k] >= cfg_.ps.svd_tol) ++count;
  const Index want = static_cast<Index>(std::ceil(cfg_.ps.rank_headroom * static_cast<double>(count)));
  const Index keep = std::max<Index>(1, std::min(want, cap));
  const Index have = std::min<Index>(keep, sv.s.size());
  const double kept = sv.s.head(have).squaredNorm();
  truncation_ += std::max(0.0, x.squaredNorm() - kept);

  tr = with_leg(RowMat(complete_columns(sv.u.leftCols(have), keep).transpose()), l, tr.dims());
  RowMat sv_rows = RowMat::Zero(keep, cols);
  sv_rows.topRows(have) = sv.s.head(have).cast<cplx>().asDiagonal() * sv.v.leftCols(have).adjoint();
  ts = with_leg(sv_rows, ls, ts.dims());
  if (is_down(topo, r, s)) engine_.envs().set_up(s, engine_.up_env(tr, src_r, l, time));
  else engine_.envs().set_down(r, engine_.down_env(tr, src_r));
}

void Propagator::record_semiunitary(const ttn::TtnState& st) {
  const auto dev = ttn::check_semiunitary(st);
  max_su_dev_ = std::max(max_su_dev_, *std::max_element(dev.begin(), dev.end()));
}

void Propagator::step_ps1(ttn::TtnState& st, double dt) {
  const double t = st.time;
  const double half = 0.5 * dt;
  const auto path = ttn::dfs_path(st.topo);
  const int len = static_cast<int>(path.size());
  engine_.build_all_down(st);
  for (int i = 0; i + 1 < len; ++i) {
    const int r = path[static_cast<size_t>(i)];
    const int s = path[static_cast<size_t>(i + 1)];
    if (is_down(st.topo, r, s)) {
      move1(st, r, s, 0.0, t);
    } else {
      evolve_node(st, r, half, t);
      move1(st, r, s, -half, t);
    }
  }
  evolve_node(st, 0, half, t);
  // Exact adjoint of the forward sweep along the reversed path.
  evolve_node(st, 0, half, t);
  for (int i = len - 1; i >= 1; --i) {
    const int r = path[static_cast<size_t>(i)];
    const int s = path[static_cast<size_t>(i - 1)];
    if (is_down(st.topo, r, s)) {
      move1(st, r, s, -half, t);
      evolve_node(st, s, half, t);
    } else {
      move1(st, r, s, 0.0, t);
    }
  }
  st.time = t + dt;
  record_semiunitary(st);
}

void Propagator::step_ps2(ttn::TtnState& st, double dt) {
  const double t = st.time;
  const double half = 0.5 * dt;
  const auto path = ttn::dfs_path(st.topo);
  const int len = static_cast<int>(path.size());
  engine_.build_all_down(st);
  for (int i = 0; i + 1 < len; ++i) {
    const int r = path[static_cast<size_t>(i)];
    const int s = path[static_cast<size_t>(i + 1)];
    if (is_down(st.topo, r, s)) {
      move1(st, r, s, 0.0, t);
    } else {
      move2(st, r, s, half, t);
      evolve_node(st, s, -half, t);
    }
  }
  evolve_node(st, 0, half, t);
  evolve_node(st, 0, half, t);
  for (int i = len - 1; i >= 1; --i) {
    const int r = path[static_cast<size_t>(i)];
    const int s = path[static_cast<size_t>(i - 1)];
    if (is_down(st.topo, r, s)) {
      evolve_node(st, r, -half, t);
      move2(st, r, s, half, t);
    } else {
      move1(st, r, s, 0.0, t);
    }
  }
  st.time = t + dt;
  record_semiunitary(st);
}

void Propagator::step_direct(ttn::TtnState& st, double t_end) {
  if (t_end <= st.time) return;
  OdeState x;
  flatten(st.cores, x);
  ttn::TtnState work = st;
  std::vector<Tensor> d;
  auto rhs = [&](const OdeState& y, OdeState& dy, double t) {
    unflatten(y, work.cores);
    poll(t);
    engine_.direct_rhs(work, t, cfg_.direct.epsilon, d);
    flatten(d, dy);
  };
  try {
    integrate_rk45(x, st.time, t_end - st.time, rhs, cfg_.direct.ode, h_direct_);
  } catch (const StepUnderflow& e) {
    throw PropagationError(std::string("direct integration aborted: ") + e.what(), e.time);
  }
  unflatten(x, st.cores);
  st.time = t_end;
  ++direct_segments_;
  const auto dev = ttn::check_semiunitary(st);
  const double worst = *std::max_element(dev.begin(), dev.end());
  if (worst > 1e-8)
    warnings_.push_back("semi-unitarity drift " + std::to_string(worst) + " at t = " + std::to_string(st.time) + " fs");
  if (cfg_.direct.reorthonormalize_every > 0 && direct_segments_ % cfg_.direct.reorthonormalize_every == 0)
    ttn::regauge(st);
}

void Propagator::poll(double time) const {
  if (interrupt_ && interrupt_()) throw Interrupted("interrupted", time);
}

void Propagator::advance(ttn::TtnState& st, double t_end) {
  constexpr double kSlack = 1e-12;
  auto ps_until = [&](auto step) {
    while (st.time < t_end - kSlack) {
      const double dt = std::min(cfg_.ps.delta, t_end - st.time);
      step(dt);
    }
    st.time = std::max(st.time, t_end);
  };
  switch (cfg_.strategy) {
    case Strategy::Direct:
      step_direct(st, t_end);
      return;
    case Strategy::Ps1:
      ps_until([&](double dt) { step_ps1(st, dt); });
      return;
    case Strategy::Ps2:
      ps_until([&](double dt) { step_ps2(st, dt); });
      return;
    case Strategy::Mixed:
      while (!switched_ && st.time < t_end - kSlack) {
        step_ps2(st, std::min(cfg_.ps.delta, t_end - st.time));
        if (st.max_rank() >= cfg_.switch_rank) switched_ = true;
      }
      if (switched_) step_direct(st, t_end);
      st.time = std::max(st.time, t_end);
      return;
  }
}

Sample observe(const ttn::TtnState& st) {
  Sample s;
  s.t_fs = st.time;
  s.rho = ttn::extract_rho(st);
  s.purity = purity(s.rho);
  s.max_rank = st.max_rank();
  s.ttn_size = st.size();
  s.ranks = st.ranks();
  return s;
}

Conservation conservation(const Mat& rho) {
  Conservation c;
  c.trace_error = std::abs(rho.trace() - cplx(1.0));
  c.hermiticity_error = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  c.purity_excess = purity(rho) - 1.0;
  return c;
}

Trajectory run(Propagator& prop, ttn::TtnState state, double t_end, double output_dt, const SampleCallback& on_sample) {
  using clock = std::chrono::steady_clock;
  const RunConfig& cfg = prop.config();
  Trajectory traj;
  auto last_mark = clock::now();
  auto last_checkpoint = last_mark;
  ttn::TtnState good = state;
  auto metadata = [&] {
    nlohmann::json m;
    m["strategy"] = to_string(cfg.strategy);
    m["switched"] = prop.switched();
    m["h_direct"] = prop.direct_step();
    return m.dump();
  };
  auto record = [&] {
    Sample s = observe(state);
    const auto now = clock::now();
    s.wall_ms = std::chrono::duration<double, std::milli>(now - last_mark).count();
    last_mark = now;
    const Conservation c = conservation(s.rho);
    if (c.trace_error > 1e-7 || c.hermiticity_error > 1e-7 || c.purity_excess > 1e-7)
      prop.warnings().push_back("conservation violated at t = " + std::to_string(s.t_fs) + " fs");
    if (s.purity < 1.0 / static_cast<double>(s.rho.rows()) - 0.05)
      prop.warnings().push_back("purity below 1/M at t = " + std::to_string(s.t_fs) + " fs");
    if (on_sample) on_sample(s, state, prop);
    traj.samples.push_back(std::move(s));
    good = state;
    if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every_s > 0 &&
        std::chrono::duration<double>(now - last_checkpoint).count() >= cfg.checkpoint_every_s) {
      ttn::save_checkpoint(cfg.checkpoint_path, state, metadata());
      last_checkpoint = now;
    }
  };

  record();
  const double t0 = state.time;
  try {
    long k = 1;
    while (output_dt > 0 && state.time < t_end - 1e-12) {
      const double t1 = std::min(t_end, t0 + static_cast<double>(k) * output_dt);
      prop.advance(state, t1);
      record();
      ++k;
    }
    if (output_dt <= 0 && t_end > state.time) {
      prop.advance(state, t_end);
      record();
    }
  } catch (const PropagationError&) {
    if (!cfg.checkpoint_path.empty()) ttn::save_checkpoint(cfg.checkpoint_path, good, metadata());
    traj.warnings = prop.warnings();
    throw;
  }
  if (!cfg.checkpoint_path.empty()) ttn::save_checkpoint(cfg.checkpoint_path, state, metadata());
  traj.warnings = prop.warnings();
  return traj;
}

Trajectory run(const gen::SopGenerator& g, ttn::TtnState state, const RunConfig& cfg, double t_end, double output_dt,
               const SampleCallback& on_sample) {
  Propagator prop(g, cfg);
  return run(prop, std::move(state), t_end, output_dt, on_sample);
}

}  // namespace ttnheom::prop
