#include "ttnheom/oracle.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

namespace ttnheom::oracle {

DenseEdo initial_edo(const Mat& rho0, const std::vector<int>& depths, Index guard) {
  DenseEdo edo;
  edo.dims = {rho0.rows(), rho0.cols()};
  for (int n : depths) edo.dims.push_back(n);
  const Index size = dense_size(edo.dims);
  if (size > guard) throw GuardError("dense EDO of " + std::to_string(size) + " elements exceeds the guard");
  edo.data = Vec::Zero(size);
  const Index stride = size / (rho0.rows() * rho0.cols());
  for (Index i = 0; i < rho0.rows(); ++i)
    for (Index j = 0; j < rho0.cols(); ++j) edo.data[(i * rho0.cols() + j) * stride] = rho0(i, j);
  return edo;
}

void apply_axis_add(const Vec& in, const std::vector<Index>& dims, int axis, const Mat& op, cplx scale, Vec& out) {
  Index pre = 1, post = 1;
  for (int a = 0; a < axis; ++a) pre *= dims[static_cast<size_t>(a)];
  for (size_t a = static_cast<size_t>(axis) + 1; a < dims.size(); ++a) post *= dims[a];
  const Index d = dims[static_cast<size_t>(axis)];
  const Mat sop = scale * op;
  for (Index p = 0; p < pre; ++p) {
    Eigen::Map<const RowMat> x(in.data() + p * d * post, d, post);
    Eigen::Map<RowMat> y(out.data() + p * d * post, d, post);
    y.noalias() += sop * x;
  }
}

Vec dense_rhs(const DenseEdo& edo, const gen::SopGenerator& g, double t) {
  if (static_cast<int>(edo.dims.size()) != g.num_features() + 2) throw GuardError("dense_rhs: EDO order mismatch");
  Vec out = Vec::Zero(edo.data.size());
  Vec tmp(edo.data.size());
  for (size_t m = 0; m < g.terms.size(); ++m) {
    const auto& term = g.terms[m];
    const cplx c = g.coefficient(m, t);
    if (c == cplx(0.0)) continue;
    // Chain the factors; the last one accumulates into out.
    std::vector<std::pair<int, const Mat*>> ops;
    if (const auto& gt = g.h_gt(m)) ops.emplace_back(0, &*gt);
    if (const auto& lt = g.h_lt(m)) ops.emplace_back(1, &*lt);
    if (term.bex >= 0) ops.emplace_back(2 + term.bex, &term.h_bex);
    if (ops.empty()) {
      out += c * edo.data;
      continue;
    }
    Vec cur = edo.data;
    for (size_t k = 0; k + 1 < ops.size(); ++k) {
      tmp.setZero();
      apply_axis_add(cur, edo.dims, ops[k].first, *ops[k].second, 1.0, tmp);
      cur.swap(tmp);
    }
    apply_axis_add(cur, edo.dims, ops.back().first, *ops.back().second, c, out);
  }
  return out;
}

namespace {

void to_ode(const Vec& v, OdeState& x) {
  x.resize(static_cast<size_t>(2 * v.size()));
  std::memcpy(x.data(), v.data(), x.size() * sizeof(double));
}

void from_ode(const OdeState& x, Vec& v) {
  v.resize(static_cast<Index>(x.size() / 2));
  std::memcpy(static_cast<void*>(v.data()), x.data(), x.size() * sizeof(double));
}

}  // namespace

DenseEdo dense_propagate(DenseEdo edo, const gen::SopGenerator& g, double t_end, const IntegratorConfig& cfg) {
  OdeState x;
  to_ode(edo.data, x);
  DenseEdo work = edo;
  auto rhs = [&](const OdeState& y, OdeState& dy, double t) {
    from_ode(y, work.data);
    const Vec d = dense_rhs(work, g, t);
    to_ode(d, dy);
  };
  double h = cfg.h_init;
  integrate_rk45(x, edo.time, t_end - edo.time, rhs, cfg, h);
  from_ode(x, edo.data);
  edo.time = t_end;
  return edo;
}

Trajectory dense_run(const gen::SopGenerator& g, const Mat& rho0, double t_end, double output_dt,
                     const IntegratorConfig& cfg, Index guard) {
  DenseEdo edo = initial_edo(rho0, g.depths, guard);
  Trajectory traj;
  const auto start = std::chrono::steady_clock::now();
  auto record = [&] {
    Sample s;
    s.t_fs = edo.time;
    s.rho = edo.rho();
    s.purity = purity(s.rho);
    s.ttn_size = edo.size();
    s.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    traj.samples.push_back(std::move(s));
  };
  record();
  OdeState x;
  to_ode(edo.data, x);
  DenseEdo work = edo;
  auto rhs = [&](const OdeState& y, OdeState& dy, double t) {
    from_ode(y, work.data);
    to_ode(dense_rhs(work, g, t), dy);
  };
  double h = cfg.h_init;
  const long n = output_dt > 0 ? std::lround(std::floor(t_end / output_dt + 1e-9)) : 0;
  for (long k = 1; k <= n; ++k) {
    const double t1 = std::min(t_end, static_cast<double>(k) * output_dt);
    integrate_rk45(x, edo.time, t1 - edo.time, rhs, cfg, h);
    from_ode(x, edo.data);
    edo.time = t1;
    record();
  }
  if (edo.time < t_end - 1e-12) {
    integrate_rk45(x, edo.time, t_end - edo.time, rhs, cfg, h);
    from_ode(x, edo.data);
    edo.time = t_end;
    record();
  }
  return traj;
}

}  // namespace ttnheom::oracle
