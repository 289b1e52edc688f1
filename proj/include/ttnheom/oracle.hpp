#pragma once

#include "ttnheom/dense.hpp"
#include "ttnheom/generator.hpp"
#include "ttnheom/ode.hpp"
#include "ttnheom/trajectory.hpp"

#include <stdexcept>

namespace ttnheom::oracle {

class GuardError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline IntegratorConfig reference_config() {
  IntegratorConfig c;
  c.rtol = 1e-9;
  c.atol = 1e-11;
  c.h_init = 1e-4;
  c.h_max = 0.5;
  return c;
}

// rho0 (x) |0 .. 0>.
DenseEdo initial_edo(const Mat& rho0, const std::vector<int>& depths, Index guard = kDenseGuard);

// out[.., x', ..] += scale * sum_x op[x', x] in[.., x, ..] along one axis.
void apply_axis_add(const Vec& in, const std::vector<Index>& dims, int axis, const Mat& op, cplx scale, Vec& out);

// Sum over generator terms applied mode-wise.
Vec dense_rhs(const DenseEdo& edo, const gen::SopGenerator& g, double t);

Trajectory dense_run(const gen::SopGenerator& g, const Mat& rho0, double t_end, double output_dt,
                     const IntegratorConfig& cfg = reference_config(), Index guard = kDenseGuard);

// Dense state at t_end.
DenseEdo dense_propagate(DenseEdo edo, const gen::SopGenerator& g, double t_end,
                         const IntegratorConfig& cfg = reference_config());

}  // namespace ttnheom::oracle
