#include "ttnheom/generator.hpp"

#include "ttnheom/units.hpp"

#include <cmath>

namespace ttnheom::gen {

namespace {

const cplx kI(0.0, 1.0);
const std::optional<Mat> kNoFactor;

bool hermitian(const Mat& a, double tol) { return (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol; }

bool same(const std::optional<Mat>& a, const std::optional<Mat>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->rows() == b->rows() && a->cols() == b->cols() && *a == *b;
}

int intern(std::vector<SystemOp>& ops, SystemOp op) {
  for (size_t k = 0; k < ops.size(); ++k)
    if (same(ops[k].gt, op.gt) && same(ops[k].lt, op.lt)) return static_cast<int>(k);
  ops.push_back(std::move(op));
  return static_cast<int>(ops.size() - 1);
}

}  // namespace

double Envelope::operator()(double t_fs) const {
  switch (kind) {
    case EnvelopeKind::Constant:
      return amplitude;
    case EnvelopeKind::Sinusoid:
      return amplitude * std::cos(per_fs(frequency) * t_fs + phase);
    case EnvelopeKind::GaussianPulse: {
      const double x = (t_fs - center) / width;
      return amplitude * std::exp(-0.5 * x * x);
    }
  }
  return 0.0;
}

void SystemModel::validate() const {
  if (dim < 1) throw GeneratorError("system: dim must be positive");
  auto check = [&](const Mat& m, const std::string& what) {
    if (m.rows() != dim || m.cols() != dim) throw GeneratorError(what + ": expected a " + std::to_string(dim) + "x" +
                                                                 std::to_string(dim) + " matrix");
    if (!hermitian(m, 1e-12)) throw GeneratorError(what + ": matrix is not Hermitian");
  };
  check(h0, "h0");
  for (const auto& d : drives) {
    check(d.matrix, "drive");
    if (d.envelope.kind == EnvelopeKind::GaussianPulse && !(d.envelope.width > 0.0))
      throw GeneratorError("drive: gaussian width must be positive");
  }
  for (const auto& [id, q] : couplings) check(q, "coupling '" + id + "'");
}

Ladder ladder_ops(int n) {
  if (n < 2) throw GeneratorError("ladder_ops: depth must be at least 2");
  Ladder l{Mat::Zero(n, n), Mat::Zero(n, n)};
  for (int k = 0; k + 1 < n; ++k) {
    l.raise(k + 1, k) = std::sqrt(static_cast<double>(k + 1));
    l.lower(k, k + 1) = std::sqrt(static_cast<double>(k + 1));
  }
  return l;
}

cplx SopGenerator::coefficient(size_t m, double t_fs) const {
  const SopTerm& term = terms[m];
  if (term.envelope < 0) return term.coeff;
  return term.coeff * envelopes[static_cast<size_t>(term.envelope)](t_fs);
}

const std::optional<Mat>& SopGenerator::h_gt(size_t m) const {
  const int s = terms[m].sys_id;
  return s < 0 ? kNoFactor : sys_ops[static_cast<size_t>(s)].gt;
}

const std::optional<Mat>& SopGenerator::h_lt(size_t m) const {
  const int s = terms[m].sys_id;
  return s < 0 ? kNoFactor : sys_ops[static_cast<size_t>(s)].lt;
}

std::vector<cplx> default_metric(const bath::FeatureSet& features) {
  std::vector<cplx> z;
  z.reserve(features.features.size());
  for (const auto& f : features.features) {
    const double re = f.c.real();
    z.push_back(re > 0.0 ? kI * std::sqrt(re) : kI * std::sqrt(std::abs(f.c)));
  }
  return z;
}

SopGenerator build_generator(const SystemModel& model, const bath::FeatureSet& features,
                             const BexcitonSpace& space) {
  model.validate();
  const size_t nk = features.features.size();
  if (space.depths.size() != nk) throw GeneratorError("generator: one depth per feature required");
  if (space.metric_z.size() != nk) throw GeneratorError("generator: one metric scalar per feature required");

  SopGenerator g;
  g.dim = model.dim;
  g.depths = space.depths;

  const double unit = per_fs(1.0);
  auto hamiltonian = [&](const Mat& h, int envelope) {
    SopTerm left;
    left.coeff = -kI * unit;
    left.sys_id = intern(g.sys_ops, {h, std::nullopt});
    left.envelope = envelope;
    g.terms.push_back(left);
    SopTerm right;
    right.coeff = kI * unit;
    right.sys_id = intern(g.sys_ops, {std::nullopt, Mat(h.conjugate())});
    right.envelope = envelope;
    g.terms.push_back(right);
  };
  hamiltonian(model.h0, -1);
  for (const auto& d : model.drives) {
    g.envelopes.push_back(d.envelope);
    hamiltonian(d.matrix, static_cast<int>(g.envelopes.size() - 1));
  }

  for (size_t k = 0; k < nk; ++k) {
    const auto& f = features.features[k];
    const auto q = model.couplings.find(f.coupling_id);
    if (q == model.couplings.end()) throw GeneratorError("generator: unresolved coupling_id '" + f.coupling_id + "'");
    const cplx z = space.metric_z[k];
    if (z == cplx(0.0)) throw GeneratorError("generator: zero metric for feature " + std::to_string(k));
    const Ladder l = ladder_ops(space.depths[k]);
    const int qgt = intern(g.sys_ops, {q->second, std::nullopt});
    const int qlt = intern(g.sys_ops, {std::nullopt, Mat(q->second.conjugate())});
    const int bk = static_cast<int>(k);

    g.terms.push_back({f.gamma_exp * unit, -1, bk, l.raise * l.lower, -1});
    g.terms.push_back({f.c / z * unit, qgt, bk, l.raise, -1});
    g.terms.push_back({-f.c_bar / z * unit, qlt, bk, l.raise, -1});
    g.terms.push_back({-z * unit, qgt, bk, l.lower, -1});
    g.terms.push_back({z * unit, qlt, bk, l.lower, -1});
  }
  return g;
}

}  // namespace ttnheom::gen
