#pragma once

#include "ttnheom/linalg.hpp"

#include <vector>

namespace ttnheom {

inline constexpr Index kDenseGuard = 10'000'000;

// Uncompressed EDO Omega[i, j, n_1 .. n_K], row-major, dims (M, M, N_1 .. N_K).
struct DenseEdo {
  std::vector<Index> dims;
  Vec data;
  double time = 0.0;

  Index dim() const { return dims.at(0); }
  Index size() const { return data.size(); }
  // Omega[:, :, 0 .. 0]
  Mat rho() const;
};

// Element count of a dense tensor with these dims; saturates instead of overflowing.
Index dense_size(const std::vector<Index>& dims);

// out has dims[perm[0]], dims[perm[1]], ...; out axis a is input axis perm[a].
Vec permute_axes(const Vec& data, const std::vector<Index>& dims, const std::vector<int>& perm);

}  // namespace ttnheom
