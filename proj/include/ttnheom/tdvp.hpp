#pragma once

#include "ttnheom/generator.hpp"
#include "ttnheom/linalg.hpp"
#include "ttnheom/ttn.hpp"

#include <optional>
#include <stdexcept>
#include <vector>

namespace ttnheom::tdvp {

// Conventions. Environments and Gram matrices put the conjugated (bra) index first:
//   f[a', a] = sum conj(U[a', ..]) (H U)[a, ..],   D[a', a] = sum conj(A[.., a']) A[.., a].
// Semi-unitary cores obey D dU = sum_m G_m (H_m U) (1 - U^dagger U), G_m being D with the
// root-side part of term m inserted on the ket side.

class OrderError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The generator regrouped by what a term touches: system only ("sys terms"), one bexciton
// only, or one system operator sigma times one bexciton.
struct Channels {
  std::vector<int> sigmas;                  // sys_ids of coupling operators
  std::vector<size_t> sys_terms;            // term indices with no bexciton factor
  std::vector<Mat> bex_complete;            // per k, sum of pure-bexciton terms (empty if none)
  std::vector<std::vector<Mat>> bex_sigma;  // [k][sigma], coefficient-weighted bexciton factors

  static Channels from(const gen::SopGenerator& g);
  int num_sigma() const { return static_cast<int>(sigmas.size()); }
};

enum class SourceKind { Ket, Bra, Bex, Dummy, Down, Up };

// What sits behind one leg of a tensor being acted on.
struct Source {
  SourceKind kind = SourceKind::Dummy;
  int ref = -1;  // bexciton index or bond id
};
using Sources = std::vector<Source>;

// Environment of one directed bond. Toward the leaves the sigma channels carry the
// coefficient-weighted bexciton factors; toward the root they carry the bare sigma.
struct Env {
  Mat complete;            // empty when no term lies wholly in the region
  std::vector<Mat> sigma;  // per channel; empty when absent
};

class Environments {
 public:
  void reset(int num_nodes);
  const Env& down(int b) const;
  const Env& up(int b) const;
  void set_down(int b, Env e);
  void set_up(int b, Env e);
  void invalidate();

 private:
  std::vector<Env> down_, up_;
  std::vector<char> down_ok_, up_ok_;
};

class Engine {
 public:
  explicit Engine(const gen::SopGenerator& g);

  const gen::SopGenerator& generator() const { return *gen_; }
  const Channels& channels() const { return ch_; }
  Environments& envs() { return envs_; }
  const Environments& envs() const { return envs_; }

  Sources node_sources(const ttn::TreeTopology& topo, int s) const;

  // Generator projected onto a tensor whose legs see the given sources.
  Tensor apply(const Tensor& t, const Sources& src, double time) const;
  // Environment through leg 0 of a core whose other legs lead toward the leaves.
  Env down_env(const Tensor& u, const Sources& src) const;
  // Environment through `leg` of a tensor whose other legs hold the system side.
  Env up_env(const Tensor& t, const Sources& src, int leg, double time) const;

  void build_down(const ttn::TtnState& st, int s);
  void build_up(const ttn::TtnState& st, int child, double time);
  void build_all_down(const ttn::TtnState& st);

  // Regularized TDVP derivative of every core; the state must be in root gauge.
  void direct_rhs(const ttn::TtnState& st, double time, double eps, std::vector<Tensor>& out);

 private:
  const Mat* leg_complete(const Source& s) const;
  const Mat* leg_sigma(const Source& s, int c) const;
  const Mat* up_complete(const Source& s) const;
  const Mat* up_sigma(const Source& s, int c) const;
  void apply_sys_op(const Tensor& t, int ket, int bra, const gen::SystemOp& op, cplx scale, Tensor& out) const;

  const gen::SopGenerator* gen_;
  Channels ch_;
  Environments envs_;
};

// Projection onto the complement of the row space of a row-orthonormal core:
// z <- z - (z u^dagger) u, with u and z unfolded along leg 0.
void project_out(const Tensor& u, Tensor& z);

// ---------------------------------------------------------------------------------------
// Literal per-term path: one mean field per (term, bond), kept for verification of the
// channel sums above.

// f[m][s]; std::nullopt stands for the identity sentinel.
struct MeanFieldCache {
  std::vector<std::vector<std::optional<Mat>>> f;
  std::vector<char> done;

  const std::optional<Mat>& at(size_t m, int s) const;
};

struct DensityCache {
  std::vector<Mat> d;               // d[s]
  std::vector<std::vector<Mat>> g;  // g[m][s], coefficient included
  std::vector<char> done;

  const Mat& density(int s) const;
  const Mat& weighted(size_t m, int s) const;
};

struct RegularizedCache {
  double epsilon = 1e-4;
  std::vector<Mat> w;                  // left factors, rows = other legs of the parent
  std::vector<RVec> sigma;             // descending
  std::vector<Mat> v;                  // right factors (R_s x k)
  std::vector<Tensor> a_hat;           // A(s) = (sigma V^dagger) U(s)
  std::vector<std::vector<Mat>> dbar;  // dbar[m][s], k x R_s
  std::vector<char> done;

  const Mat& weighted(size_t m, int s) const;
};

MeanFieldCache build_mean_fields(const ttn::TtnState& st, const gen::SopGenerator& g);
DensityCache build_density(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, double t);
RegularizedCache build_regularized(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g,
                                   double t, double epsilon);
Tensor root_rhs(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, double t);
// Derivatives of U(1) .. U(n-1) (entry 0 left empty).
std::vector<Tensor> su_rhs_regularized(const ttn::TtnState& st, const MeanFieldCache& mf, const RegularizedCache& reg,
                                       const gen::SopGenerator& g);
// Same equation solved with the explicit pseudo-inverse of D.
std::vector<Tensor> su_rhs_inverse(const ttn::TtnState& st, const MeanFieldCache& mf, const DensityCache& dens,
                                   const gen::SopGenerator& g);
// Rows of term m's children-side action on core s: (H_m U)(a, ..).
Tensor term_children_action(const ttn::TtnState& st, const MeanFieldCache& mf, const gen::SopGenerator& g, size_t m,
                            int s);

}  // namespace ttnheom::tdvp
