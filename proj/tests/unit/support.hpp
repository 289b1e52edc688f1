#pragma once

#include "ttnheom/dense.hpp"
#include "ttnheom/generator.hpp"
#include "ttnheom/scenarios.hpp"
#include "ttnheom/ttn.hpp"

#include <random>

namespace ttnheom::testing {

inline Vec random_vec(Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d;
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = cplx(d(rng), d(rng));
  return v;
}

inline Mat random_mat(Index r, Index c, unsigned seed) {
  const Vec v = random_vec(r * c, seed);
  return Eigen::Map<const Mat>(v.data(), r, c);
}

inline Mat random_hermitian(Index n, unsigned seed) {
  const Mat a = random_mat(n, n, seed);
  return (a + a.adjoint()) / 2.0;
}

inline DenseEdo random_edo(const std::vector<int>& depths, int dim, unsigned seed) {
  DenseEdo e;
  e.dims = {dim, dim};
  for (int n : depths) e.dims.push_back(n);
  e.data = random_vec(dense_size(e.dims), seed);
  return e;
}

// Two-level system under the solvent term with n_pade Padé corrections.
inline gen::SopGenerator solvent_generator(int n_pade, int depth, double e = 0.0, double v = 1000.0) {
  const auto fs = bath::decompose(scenarios::thymine_solvent(), scenarios::kRoomTemperature, n_pade);
  return scenarios::assemble(scenarios::two_level(e, v), fs, depth);
}

inline gen::SopGenerator reduced_generator(int depth, double e = 0.0, double v = 1000.0) {
  const auto fs = bath::decompose(scenarios::thymine_reduced(), scenarios::kRoomTemperature, 1);
  return scenarios::assemble(scenarios::two_level(e, v), fs, depth);
}

// Derivative of the dense EDO along the core velocities: the contraction is linear in
// each core, so it is the sum of contractions with one core replaced.
inline Vec tangent_edo(const ttn::TtnState& st, const std::vector<Tensor>& dcores) {
  Vec out;
  for (size_t s = 0; s < st.cores.size(); ++s) {
    ttn::TtnState one = st;
    one.cores[s] = dcores[s];
    const Vec d = ttn::dense_edo(one).data;
    if (out.size() == 0) out = d;
    else out += d;
  }
  return out;
}

inline double max_abs(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }
inline double max_abs(const Mat& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace ttnheom::testing
