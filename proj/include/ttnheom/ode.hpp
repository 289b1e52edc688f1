#pragma once

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom {

// Embedded Dormand-Prince 4(5) with proportional step control. Times in fs.
struct IntegratorConfig {
  double rtol = 1e-5;
  double atol = 1e-7;
  double h_init = 1e-3;
  double h_max = 1.0;
  double h_min = 1e-7;
};

class StepUnderflow : public std::runtime_error {
 public:
  StepUnderflow(const std::string& what, double t, double h) : std::runtime_error(what), time(t), step(h) {}
  double time;
  double step;
};

using OdeState = std::vector<double>;

struct OdeStats {
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

// Integrates dx/dtau = sign * rhs(x, t0 + sign * tau) over tau in [0, |span|]. `h` carries the
// step size between calls. rhs(const OdeState& x, OdeState& dx, double t).
template <typename Rhs>
OdeStats integrate_rk45(OdeState& x, double t0, double span, Rhs&& rhs, const IntegratorConfig& cfg, double& h) {
  namespace ode = boost::numeric::odeint;
  OdeStats stats;
  if (span == 0.0) return stats;
  const double sign = span > 0 ? 1.0 : -1.0;
  const double length = std::abs(span);
  auto system = [&](const OdeState& y, OdeState& dy, double tau) {
    ++stats.evaluations;
    rhs(y, dy, t0 + sign * tau);
    if (sign < 0)
      for (double& v : dy) v = -v;
  };
  auto stepper = ode::make_controlled(cfg.atol, cfg.rtol, cfg.h_max, ode::runge_kutta_dopri5<OdeState>());
  double tau = 0.0;
  if (!(h > 0.0)) h = cfg.h_init;
  h = std::min(h, cfg.h_max);
  while (tau < length) {
    double dt = std::min(h, length - tau);
    const bool last = dt >= length - tau;
    const double before = dt;
    if (stepper.try_step(system, x, tau, dt) == ode::success) {
      ++stats.accepted;
      // Remember the proposal rather than a step clipped to the interval end.
      if (!last || dt > before) h = dt;
    } else {
      ++stats.rejected;
      h = dt;
      if (h < cfg.h_min)
        throw StepUnderflow("integrator step size fell below " + std::to_string(cfg.h_min) + " fs", t0 + sign * tau, h);
    }
    for (double v : x)
      if (!std::isfinite(v)) throw StepUnderflow("integrator produced non-finite values", t0 + sign * tau, h);
  }
  return stats;
}

}  // namespace ttnheom
