#pragma once

#include "ttnheom/generator.hpp"
#include "ttnheom/ode.hpp"
#include "ttnheom/tdvp.hpp"
#include "ttnheom/trajectory.hpp"
#include "ttnheom/ttn.hpp"

#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom::prop {

enum class Strategy { Direct, Ps1, Ps2, Mixed };

Strategy parse_strategy(const std::string& s);
std::string to_string(Strategy s);

struct DirectConfig {
  IntegratorConfig ode;
  double epsilon = 1e-4;
  // Re-orthonormalize the semi-unitary cores after every n direct segments (0 = never).
  int reorthonormalize_every = 0;
};

struct PsConfig {
  double delta = 0.1;
  double svd_tol = 1e-7;
  Index max_rank = std::numeric_limits<int>::max();
  double rank_headroom = 2.0;
  IntegratorConfig ode;
};

struct RunConfig {
  Strategy strategy = Strategy::Direct;
  DirectConfig direct;
  PsConfig ps;
  Index switch_rank = 60;
  std::string checkpoint_path;
  double checkpoint_every_s = 0.0;
};

class PropagationError : public std::runtime_error {
 public:
  PropagationError(const std::string& what, double t) : std::runtime_error(what), time(t) {}
  double time;
};

// Raised when the interrupt hook asks a running propagation to stop.
class Interrupted : public PropagationError {
 public:
  using PropagationError::PropagationError;
};

class Propagator {
 public:
  Propagator(const gen::SopGenerator& g, RunConfig cfg);

  // One second-order PS step of length dt; ranks fixed.
  void step_ps1(ttn::TtnState& st, double dt);
  // One second-order two-site PS step of length dt; ranks adapt.
  void step_ps2(ttn::TtnState& st, double dt);
  // Regularized direct integration of all cores up to t_end.
  void step_direct(ttn::TtnState& st, double t_end);
  // Advances to t_end with the configured strategy.
  void advance(ttn::TtnState& st, double t_end);

  const RunConfig& config() const { return cfg_; }
  bool switched() const { return switched_; }
  void set_switched(bool s) { switched_ = s; }
  double direct_step() const { return h_direct_; }
  void set_direct_step(double h) { h_direct_ = h; }
  double truncation_weight() const { return truncation_; }
  double max_semiunitary_deviation() const { return max_su_dev_; }
  std::vector<std::string>& warnings() { return warnings_; }
  tdvp::Engine& engine() { return engine_; }
  // Polled before every generator application; returning true raises Interrupted.
  void set_interrupt(std::function<bool()> f) { interrupt_ = std::move(f); }

 private:
  void evolve(Tensor& t, const tdvp::Sources& src, double tau, double time);
  void evolve_node(ttn::TtnState& st, int s, double tau, double time);
  void move1(ttn::TtnState& st, int r, int s, double tau, double time);
  void move2(ttn::TtnState& st, int r, int s, double tau, double time);
  void record_semiunitary(const ttn::TtnState& st);
  void poll(double time) const;

  const gen::SopGenerator* gen_;
  RunConfig cfg_;
  tdvp::Engine engine_;
  bool switched_ = false;
  double h_direct_ = 0.0;
  long direct_segments_ = 0;
  double truncation_ = 0.0;
  double max_su_dev_ = 0.0;
  std::vector<std::string> warnings_;
  std::function<bool()> interrupt_;
};

Sample observe(const ttn::TtnState& st);

using SampleCallback = std::function<void(const Sample&, const ttn::TtnState&, const Propagator&)>;

// Samples at t0, t0 + output_dt, ... up to t_end. When a checkpoint path is configured the
// last sampled state is written there periodically and before a failure is rethrown.
Trajectory run(Propagator& prop, ttn::TtnState state, double t_end, double output_dt,
               const SampleCallback& on_sample = {});
Trajectory run(const gen::SopGenerator& g, ttn::TtnState state, const RunConfig& cfg, double t_end, double output_dt,
               const SampleCallback& on_sample = {});

// Conservation diagnostics of one sample.
struct Conservation {
  double trace_error = 0.0;
  double hermiticity_error = 0.0;
  double purity_excess = 0.0;
};
Conservation conservation(const Mat& rho);

}  // namespace ttnheom::prop
