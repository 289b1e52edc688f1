#pragma once

#include "ttnheom/bath.hpp"
#include "ttnheom/linalg.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ttnheom::gen {

class GeneratorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class EnvelopeKind { Constant, Sinusoid, GaussianPulse };

// Scalar drive envelope. frequency in cm^-1, center and width in fs.
struct Envelope {
  EnvelopeKind kind = EnvelopeKind::Constant;
  double amplitude = 1.0;
  double frequency = 0.0;
  double phase = 0.0;
  double center = 0.0;
  double width = 1.0;

  double operator()(double t_fs) const;
};

struct Drive {
  Envelope envelope;
  Mat matrix;
};

// Energies in cm^-1.
struct SystemModel {
  int dim = 0;
  Mat h0;
  std::vector<Drive> drives;
  std::map<std::string, Mat> couplings;

  void validate() const;
};

struct BexcitonSpace {
  std::vector<int> depths;
  std::vector<cplx> metric_z;
};

struct Ladder {
  Mat raise;
  Mat lower;
};
Ladder ladder_ops(int n);

// System factor of a term. gt acts on the ket index i, lt on the bra index j, both as
// plain matrices on that index; an absent factor is the identity. The superoperator
// A^< (rho -> rho A^dagger) is stored as lt = conj(A).
struct SystemOp {
  std::optional<Mat> gt;
  std::optional<Mat> lt;
};

// One product term coeff * env(t) * h_gt (x) h_lt (x) h_bex. Rates in fs^-1.
struct SopTerm {
  cplx coeff{1.0, 0.0};
  int sys_id = -1;    // index into SopGenerator::sys_ops, -1 for identity
  int bex = -1;       // bexciton index k, -1 for identity
  Mat h_bex;          // N_k x N_k when bex >= 0
  int envelope = -1;  // index into SopGenerator::envelopes, -1 when constant

  bool time_dependent() const { return envelope >= 0; }
};

struct SopGenerator {
  int dim = 0;
  std::vector<int> depths;
  std::vector<SystemOp> sys_ops;
  std::vector<Envelope> envelopes;
  std::vector<SopTerm> terms;

  int num_features() const { return static_cast<int>(depths.size()); }
  cplx coefficient(size_t m, double t_fs) const;
  const std::optional<Mat>& h_gt(size_t m) const;
  const std::optional<Mat>& h_lt(size_t m) const;
};

std::vector<cplx> default_metric(const bath::FeatureSet& features);

SopGenerator build_generator(const SystemModel& model, const bath::FeatureSet& features,
                             const BexcitonSpace& space);

}  // namespace ttnheom::gen
