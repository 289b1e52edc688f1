#include "ttnheom/verify.hpp"

#include "ttnheom/bath.hpp"
#include "ttnheom/oracle.hpp"
#include "ttnheom/propagate.hpp"
#include "ttnheom/scenarios.hpp"
#include "ttnheom/tdvp.hpp"
#include "ttnheom/units.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace ttnheom::verify {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// Worst conservation figures over every sample of every TTN run in the suite.
struct Audit {
  double trace = 0.0;
  double hermiticity = 0.0;
  double purity_excess = -1.0;
  double semiunitary = 0.0;
  int runs = 0;
  int ps_runs = 0;

  void add(const Trajectory& traj, const prop::Propagator& p, bool ps) {
    for (const auto& s : traj.samples) {
      const auto c = prop::conservation(s.rho);
      trace = std::max(trace, c.trace_error);
      hermiticity = std::max(hermiticity, c.hermiticity_error);
      purity_excess = std::max(purity_excess, c.purity_excess);
    }
    ++runs;
    if (ps) {
      semiunitary = std::max(semiunitary, p.max_semiunitary_deviation());
      ++ps_runs;
    }
  }
};

struct Context {
  Audit audit;
};

bool uses_ps(prop::Strategy s) { return s != prop::Strategy::Direct; }

Trajectory ttn_run(Context& ctx, const gen::SopGenerator& g, const ttn::TreeTopology& topo, const ttn::Ranks& ranks,
                   const prop::RunConfig& cfg, double t_end, double output_dt) {
  prop::Propagator p(g, cfg);
  auto traj = prop::run(p, ttn::init_state(topo, scenarios::plus_state(), ranks), t_end, output_dt);
  ctx.audit.add(traj, p, uses_ps(cfg.strategy));
  return traj;
}

IntegratorConfig tight_ode() {
  IntegratorConfig c;
  c.rtol = 1e-10;
  c.atol = 1e-12;
  c.h_init = 1e-4;
  c.h_max = 0.5;
  c.h_min = 1e-12;
  return c;
}

prop::RunConfig oracle_grade(prop::Strategy s) {
  prop::RunConfig cfg;
  cfg.strategy = s;
  cfg.direct.ode = tight_ode();
  cfg.direct.epsilon = 1e-8;
  cfg.ps.ode = tight_ode();
  cfg.ps.delta = 0.01;
  cfg.ps.svd_tol = 1e-12;
  return cfg;
}

const std::vector<prop::Strategy> kStrategies = {prop::Strategy::Direct, prop::Strategy::Ps1, prop::Strategy::Ps2};

// ---------------------------------------------------------------------------------------
// A1: full-rank TTN against the dense oracle on the solvent-only bath.

gen::SopGenerator solvent(int depth, double e, double v) {
  const auto fs = bath::decompose(scenarios::thymine_solvent(), scenarios::kRoomTemperature, 0);
  return scenarios::assemble(scenarios::two_level(e, v), fs, depth);
}

Result a1(Context& ctx) {
  Result r;
  r.id = "A1";
  const auto g = solvent(8, 0.0, 1000.0);
  const auto topo = ttn::make_train(g.depths, 2);
  const auto ref = oracle::dense_run(g, scenarios::plus_state(), 100.0, 1.0);
  double worst = 0.0;
  std::ostringstream os;
  for (auto s : kStrategies) {
    const auto traj = ttn_run(ctx, g, topo, ttn::full_ranks(topo), oracle_grade(s), 100.0, 1.0);
    const double d = max_rho_difference(traj, ref);
    worst = std::max(worst, d);
    os << prop::to_string(s) << ' ' << sci(d) << ' ';
  }
  r.passed = worst <= 1e-6;
  r.detail = "max |drho| = " + sci(worst) + " (" + os.str() + "limit 1e-6)";
  return r;
}

// ---------------------------------------------------------------------------------------
// A2 / A3: reduced bath, rank 16.

gen::SopGenerator reduced(int depth) {
  const auto fs = bath::decompose(scenarios::thymine_reduced(), scenarios::kRoomTemperature, 1);
  return scenarios::assemble(scenarios::two_level(0.0, 1000.0), fs, depth);
}

prop::RunConfig reduced_config(prop::Strategy s) {
  prop::RunConfig cfg;
  cfg.strategy = s;
  cfg.direct.ode.rtol = 1e-8;
  cfg.direct.ode.atol = 1e-10;
  cfg.direct.ode.h_min = 1e-12;
  cfg.direct.epsilon = 1e-4;
  cfg.ps.ode = cfg.direct.ode;
  cfg.ps.delta = 0.05;
  cfg.ps.svd_tol = 1e-9;
  cfg.ps.max_rank = 16;
  cfg.switch_rank = 16;
  return cfg;
}

Result a2(Context& ctx) {
  Result r;
  r.id = "A2";
  const auto g = reduced(8);
  const auto topo = ttn::make_balanced(g.depths, 2);
  const auto ranks = ttn::clamp_ranks(topo, 16);
  std::vector<Trajectory> runs;
  for (auto s : kStrategies) runs.push_back(ttn_run(ctx, g, topo, ranks, reduced_config(s), 200.0, 2.0));
  double worst = 0.0;
  std::ostringstream os;
  for (size_t a = 0; a < runs.size(); ++a)
    for (size_t b = a + 1; b < runs.size(); ++b) {
      const double d = max_rho_difference(runs[a], runs[b]);
      worst = std::max(worst, d);
      os << prop::to_string(kStrategies[a]) << '/' << prop::to_string(kStrategies[b]) << ' ' << sci(d) << ' ';
    }
  r.passed = worst <= 1e-4;
  r.detail = "max pairwise |drho| = " + sci(worst) + " (" + os.str() + "limit 1e-4)";
  return r;
}

Result a3(Context& ctx) {
  Result r;
  r.id = "A3";
  const auto g = reduced(8);
  std::vector<Trajectory> runs;
  for (auto kind : {ttn::TopologyKind::Train, ttn::TopologyKind::Balanced}) {
    const auto topo = ttn::make_topology(kind, g.depths, 2);
    runs.push_back(ttn_run(ctx, g, topo, ttn::clamp_ranks(topo, 1), reduced_config(prop::Strategy::Mixed), 200.0,
                           2.0));
  }
  const double d = max_rho_difference(runs[0], runs[1]);
  r.passed = d <= 1e-4;
  r.detail = "train vs balanced (mixed) max |drho| = " + sci(d) + " (limit 1e-4)";
  return r;
}

// ---------------------------------------------------------------------------------------
// A4: decomposition of the full bath against direct quadrature.

Result a4(Context&) {
  Result r;
  r.id = "A4";
  const auto comps = scenarios::thymine_bath();
  const auto fs = bath::decompose(comps, scenarios::kRoomTemperature, 3);
  double scale = 0.0, err = 0.0;
  std::vector<std::pair<cplx, cplx>> pts;
  // The Drude-Lorentz tail makes Re C(t) diverge at t = 0, so the grid starts one step in.
  for (int i = 1; i <= 400; ++i) {
    const double t = 0.5 * i;
    pts.emplace_back(bath::reconstruct(fs, t), bath::bcf_quadrature(comps, scenarios::kRoomTemperature, t));
  }
  for (const auto& [a, b] : pts) scale = std::max(scale, std::abs(b));
  for (const auto& [a, b] : pts) err = std::max(err, std::abs(a - b) / scale);
  r.passed = fs.size() == 20 && err <= 2e-2;
  r.detail = "K = " + std::to_string(fs.size()) + " (want 20), max relative error " + sci(err) +
             " on (0, 200] fs (limit 2e-2)";
  return r;
}

// ---------------------------------------------------------------------------------------
// A5: pure dephasing against the second-order cumulant of the decomposed correlation function.

Result a5(Context& ctx) {
  Result r;
  r.id = "A5";
  const auto fs = bath::decompose(scenarios::thymine_solvent(), scenarios::kRoomTemperature, 0);
  const auto g = scenarios::assemble(scenarios::two_level(0.0, 0.0), fs, 48);
  const auto topo = ttn::make_train(g.depths, 2);
  const auto traj = ttn_run(ctx, g, topo, ttn::full_ranks(topo), oracle_grade(prop::Strategy::Direct), 100.0, 1.0);

  using boost::math::quadrature::gauss_kronrod;
  auto inner = [&](double s) {
    return gauss_kronrod<double, 31>::integrate([&](double u) { return bath::reconstruct(fs, u).real(); }, 0.0, s, 10,
                                                1e-13);
  };
  double pop = 0.0, rel = 0.0, peak = 0.0;
  std::vector<std::pair<double, double>> pairs;
  for (const auto& s : traj.samples) {
    pop = std::max({pop, std::abs(s.rho(0, 0) - 0.5), std::abs(s.rho(1, 1) - 0.5)});
    // C is in cm^-2; the double time integral needs fs^-2.
    const double phi =
        s.t_fs > 0 ? per_fs(1.0) * per_fs(1.0) * gauss_kronrod<double, 31>::integrate(inner, 0.0, s.t_fs, 10, 1e-12) : 0.0;
    const double want = 0.5 * std::exp(-phi);
    pairs.emplace_back(std::abs(s.rho(0, 1)), want);
    peak = std::max(peak, want);
  }
  for (const auto& [got, want] : pairs) rel = std::max(rel, std::abs(got - want) / peak);
  r.passed = pop <= 1e-9 && rel <= 1e-4;
  r.detail = "population drift " + sci(pop) + " (limit 1e-9), |rho01| vs cumulant " + sci(rel) +
             " relative to max (limit 1e-4)";
  return r;
}

// ---------------------------------------------------------------------------------------
// A6: conservation over every TTN run performed so far.

Result a6(Context& ctx) {
  Result r;
  r.id = "A6";
  const auto& a = ctx.audit;
  r.passed = a.runs > 0 && a.trace <= 1e-7 && a.hermiticity <= 1e-7 && a.semiunitary <= 1e-10 &&
             a.purity_excess <= 1e-7;
  r.detail = std::to_string(a.runs) + " runs: trace " + sci(a.trace) + ", hermiticity " + sci(a.hermiticity) +
             ", semi-unitarity (" + std::to_string(a.ps_runs) + " PS runs) " + sci(a.semiunitary) +
             ", purity - 1 " + sci(a.purity_excess);
  return r;
}

// ---------------------------------------------------------------------------------------
// A7: local error order of PS1.

Result a7(Context&) {
  Result r;
  r.id = "A7";
  const auto g = solvent(8, 0.0, 1000.0);
  const auto topo = ttn::make_train(g.depths, 2);
  const auto st0 = ttn::init_state(topo, scenarios::plus_state(), ttn::full_ranks(topo));
  const auto e0 = ttn::dense_edo(st0);
  std::vector<double> defect;
  std::ostringstream os;
  auto cfg = oracle_grade(prop::Strategy::Ps1);
  cfg.ps.ode.rtol = 1e-13;
  cfg.ps.ode.atol = 1e-15;
  IntegratorConfig ref = tight_ode();
  ref.rtol = 1e-13;
  ref.atol = 1e-15;
  for (double dt : {0.04, 0.02, 0.01}) {
    prop::Propagator p(g, cfg);
    auto st = st0;
    p.step_ps1(st, dt);
    const auto exact = oracle::dense_propagate(e0, g, dt, ref);
    const double d = (ttn::dense_edo(st).data - exact.data).cwiseAbs().maxCoeff();
    defect.push_back(d);
    os << "dt " << dt << ": " << sci(d) << "; ";
  }
  const double q1 = defect[0] / std::max(defect[1], 1e-300);
  const double q2 = defect[1] / std::max(defect[2], 1e-300);
  r.passed = q1 >= 4 && q1 <= 16 && q2 >= 4 && q2 <= 16;
  r.detail = os.str() + "ratios " + sci(q1) + ", " + sci(q2) + " (want within [4, 16])";
  if (defect[0] < 1e-12) r.detail += "; defects at roundoff, the full-rank splitting is exact here";
  return r;
}

// ---------------------------------------------------------------------------------------
// A8: flagship run on the full bath.

gen::SopGenerator flagship(double e) {
  const auto fs = bath::decompose(scenarios::thymine_bath(), scenarios::kRoomTemperature, 3);
  return scenarios::assemble(scenarios::two_level(e, 1000.0), fs, 20);
}

prop::RunConfig flagship_config() {
  prop::RunConfig cfg;
  cfg.strategy = prop::Strategy::Mixed;
  cfg.ps.delta = 0.1;
  cfg.ps.svd_tol = 1e-7;
  cfg.ps.max_rank = 60;
  cfg.switch_rank = 60;
  return cfg;
}

double a8_budget_s() {
  if (const char* v = std::getenv("TTNHEOM_A8_BUDGET_S")) return std::stod(v);
  return 7200.0;
}

// Runs until t_end or until the wall budget is spent; samples recorded so far are kept.
struct BudgetedRun {
  Trajectory traj;
  bool finished = false;
  std::string abort;
};

BudgetedRun budgeted_run(Context& ctx, const gen::SopGenerator& g, const ttn::TreeTopology& topo,
                         const ttn::Ranks& ranks, double t_end, double output_dt, double budget_s) {
  BudgetedRun out;
  const auto start = std::chrono::steady_clock::now();
  prop::Propagator p(g, flagship_config());
  p.set_interrupt(
      [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > budget_s; });
  auto keep = [&](const Sample& s, const ttn::TtnState&, const prop::Propagator&) { out.traj.samples.push_back(s); };
  try {
    prop::run(p, ttn::init_state(topo, scenarios::plus_state(), ranks), t_end, output_dt, keep);
    out.finished = true;
  } catch (const prop::Interrupted&) {
  } catch (const prop::PropagationError& e) {
    out.abort = e.what();
  }
  ctx.audit.add(out.traj, p, true);
  return out;
}

Result a8(Context& ctx) {
  Result r;
  r.id = "A8";
  const double budget = a8_budget_s();
  const auto g0 = flagship(0.0);
  const auto g1 = flagship(5000.0);
  const auto topo = ttn::make_balanced(g0.depths, 2);
  const auto ranks = ttn::clamp_ranks(topo, 1);

  const auto early0 = budgeted_run(ctx, g0, topo, ranks, 5.0, 0.25, budget / 4);
  const auto early1 = budgeted_run(ctx, g1, topo, ranks, 5.0, 0.25, budget / 4);
  double early = 0.0;
  const size_t n_early = std::min(early0.traj.samples.size(), early1.traj.samples.size());
  for (size_t i = 0; i < n_early; ++i)
    early = std::max(early, std::abs(early0.traj.samples[i].purity - early1.traj.samples[i].purity));
  const double t_early = n_early ? early0.traj.samples[n_early - 1].t_fs : 0.0;

  const auto main = budgeted_run(ctx, g0, topo, ranks, 120.0, 1.0, budget / 2);
  const auto& ms = main.traj.samples;
  const double t_last = ms.empty() ? 0.0 : ms.back().t_fs;
  double p_min = 2.0, t_min = 0.0;
  for (const auto& s : ms)
    if (s.t_fs <= 100.0 && s.purity < p_min) {
      p_min = s.purity;
      t_min = s.t_fs;
    }
  const double p_end = ms.empty() ? 0.0 : ms.back().purity;
  const bool starts = !ms.empty() && std::abs(ms.front().purity - 1.0) <= 1e-12;
  const bool recovers = p_end > p_min + 1e-3;

  r.passed = main.abort.empty() && t_last >= 100.0 && starts && p_min >= 0.45 && p_min <= 0.60 && recovers &&
             early0.finished && early1.finished && early <= 1e-3;
  std::ostringstream os;
  os << "reached " << t_last << " fs" << (main.abort.empty() ? "" : " (aborted: " + main.abort + ")")
     << (main.finished || !main.abort.empty() ? "" : " (wall budget spent)") << ", max rank "
     << (ms.empty() ? 0 : ms.back().max_rank) << ", purity min " << p_min << " at " << t_min
     << " fs (want [0.45, 0.60]), final " << p_end << ", early E=0 vs 5000 " << sci(early) << " up to " << t_early
     << " fs (limit 1e-3 to 5 fs), budget " << budget << " s";
  r.detail = os.str();
  return r;
}

// ---------------------------------------------------------------------------------------
// A9: core tensor sizes of the balanced K=20 tree.

Result a9(Context&) {
  Result r;
  r.id = "A9";
  const std::vector<int> depths(20, 20);
  const auto topo = ttn::make_balanced(depths, 2);
  const std::pair<Index, double> want[] = {{40, 0.7e6}, {60, 2.2e6}, {80, 4.9e6}};
  std::ostringstream os;
  bool ok = true;
  for (const auto& [rank, size] : want) {
    const Index n = ttn::size_of(topo, ttn::clamp_ranks(topo, rank));
    const double rel = static_cast<double>(n) / size - 1.0;
    ok = ok && std::abs(rel) <= 0.10;
    os << "R=" << rank << ": " << n << " (" << (rel >= 0 ? "+" : "") << std::lround(100 * rel) << "%) ";
  }
  r.passed = ok;
  r.detail = os.str() + "(limit +-10%)";
  return r;
}

// ---------------------------------------------------------------------------------------
// A10: K=4 balanced tree, structure of the generated equations and full-rank equivalence.

Result a10(Context&) {
  Result r;
  r.id = "A10";
  const auto g = reduced(3);
  const auto topo = ttn::make_balanced(g.depths, 2);
  std::vector<std::string> problems;

  // Wiring: root (i, j, a1); node 1 (a1, a2, a3); node 2 (a2, n1, n2); node 3 (a3, n3, n4).
  using ttn::LegKind;
  auto leg_is = [&](int s, int l, LegKind k, int ref) {
    const auto& leg = topo.node(s).legs[static_cast<size_t>(l)];
    return leg.kind == k && leg.ref == ref;
  };
  const bool wired = topo.num_nodes() == 4 && leg_is(0, 0, LegKind::SystemKet, -1) &&
                     leg_is(0, 1, LegKind::SystemBra, -1) && leg_is(0, 2, LegKind::Bond, 1) &&
                     leg_is(1, 0, LegKind::Bond, 0) && leg_is(1, 1, LegKind::Bond, 2) && leg_is(1, 2, LegKind::Bond, 3) &&
                     leg_is(2, 0, LegKind::Bond, 1) && leg_is(2, 1, LegKind::Bexciton, 0) &&
                     leg_is(2, 2, LegKind::Bexciton, 1) && leg_is(3, 0, LegKind::Bond, 1) &&
                     leg_is(3, 1, LegKind::Bexciton, 2) && leg_is(3, 2, LegKind::Bexciton, 3);
  if (!wired) problems.push_back("tree wiring");
  if (g.terms.size() != 22) problems.push_back("term count " + std::to_string(g.terms.size()) + " (want 22)");

  const auto st = ttn::decompose_dense(
      [&] {
        DenseEdo e;
        e.dims = {2, 2, 3, 3, 3, 3};
        e.data = Vec(dense_size(e.dims));
        for (Index i = 0; i < e.data.size(); ++i)
          e.data[i] = cplx(std::sin(0.7 * static_cast<double>(i) + 0.3), std::cos(1.3 * static_cast<double>(i)));
        return e;
      }(),
      topo);

  // Mean fields written out index by index.
  const auto mf = tdvp::build_mean_fields(st, g);
  const std::array<int, 4> want_count = {0, 20, 10, 10};
  double mf_err = 0.0;
  for (int s = 1; s < 4; ++s) {
    int count = 0;
    for (size_t m = 0; m < g.terms.size(); ++m) {
      if (!mf.at(m, s)) continue;
      ++count;
      const Tensor& u = st.cores[static_cast<size_t>(s)];
      const Index d = u.dim(0);
      Mat f = Mat::Zero(d, d);
      const int k = g.terms[m].bex;
      for (Index a = 0; a < d; ++a)
        for (Index b = 0; b < d; ++b)
          for (Index x = 0; x < u.dim(1); ++x)
            for (Index y = 0; y < u.dim(2); ++y)
              for (Index x2 = 0; x2 < u.dim(1); ++x2)
                for (Index y2 = 0; y2 < u.dim(2); ++y2) {
                  cplx h1 = x == x2 ? 1.0 : 0.0, h2 = y == y2 ? 1.0 : 0.0;
                  if (s == 1) {
                    const bool left = k == 0 || k == 1;
                    const auto& fl = mf.at(m, 2);
                    const auto& fr = mf.at(m, 3);
                    if (left && fl) h1 = (*fl)(x, x2);
                    if (!left && fr) h2 = (*fr)(y, y2);
                  } else {
                    const int k1 = s == 2 ? 0 : 2;
                    if (k == k1) h1 = g.terms[m].h_bex(x, x2);
                    if (k == k1 + 1) h2 = g.terms[m].h_bex(y, y2);
                  }
                  f(a, b) += std::conj(u(a, x, y)) * h1 * h2 * u(b, x2, y2);
                }
      mf_err = std::max(mf_err, (f - *mf.at(m, s)).cwiseAbs().maxCoeff());
    }
    if (count != want_count[static_cast<size_t>(s)])
      problems.push_back("bond " + std::to_string(s) + " carries " + std::to_string(count) + " mean fields");
  }
  if (mf_err > 1e-12) problems.push_back("mean-field mismatch " + sci(mf_err));

  tdvp::Engine eng(g);
  std::vector<Tensor> d;
  eng.direct_rhs(st, 0.0, 1e-12, d);
  Vec tangent;
  for (size_t s = 0; s < st.cores.size(); ++s) {
    ttn::TtnState one = st;
    one.cores[s] = d[s];
    const Vec part = ttn::dense_edo(one).data;
    tangent = tangent.size() ? Vec(tangent + part) : part;
  }
  const Vec want = oracle::dense_rhs(ttn::dense_edo(st), g, 0.0);
  const double rel = (tangent - want).cwiseAbs().maxCoeff() / want.cwiseAbs().maxCoeff();
  if (rel > 1e-7) problems.push_back("derivative mismatch " + sci(rel));

  r.passed = problems.empty();
  std::ostringstream os;
  os << "wiring " << (wired ? "ok" : "wrong") << ", " << g.terms.size() << " terms, mean fields per bond 20/10/10"
     << ", index-wise mean fields " << sci(mf_err) << ", full-rank derivative vs dense " << sci(rel)
     << " (limit 1e-7)";
  for (const auto& p : problems) os << "; problem: " << p;
  r.detail = os.str();
  return r;
}

using Criterion = std::function<Result(Context&)>;

const std::map<std::string, Criterion>& registry() {
  static const std::map<std::string, Criterion> m = {{"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5},
                                                     {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}, {"A10", a10}};
  return m;
}

}  // namespace

Suite parse_suite(const std::string& s) {
  if (s == "small") return Suite::Small;
  if (s == "full") return Suite::Full;
  throw std::invalid_argument("unknown suite '" + s + "' (small, full)");
}

std::vector<std::string> criteria(Suite suite) {
  if (suite == Suite::Small) return {"A1", "A4", "A5", "A7", "A9", "A10", "A6"};
  return {"A1", "A2", "A3", "A4", "A5", "A7", "A8", "A9", "A10", "A6"};
}

std::string format(const Result& r) {
  char head[64];
  std::snprintf(head, sizeof head, "%-4s %s  [%.1f s]  ", r.id.c_str(), r.passed ? "PASS" : "FAIL", r.seconds);
  return head + r.detail;
}

std::vector<Result> run_criteria(const std::vector<std::string>& ids, std::ostream& out) {
  Context ctx;
  std::vector<Result> results;
  for (const auto& id : ids) {
    const auto it = registry().find(id);
    if (it == registry().end()) throw std::invalid_argument("unknown criterion " + id);
    const auto start = std::chrono::steady_clock::now();
    Result r;
    try {
      r = it->second(ctx);
    } catch (const std::exception& e) {
      r.id = id;
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out << format(r) << std::endl;
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<Result> run_suite(Suite suite, std::ostream& out) { return run_criteria(criteria(suite), out); }

}  // namespace ttnheom::verify
