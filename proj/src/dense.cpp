#include "ttnheom/dense.hpp"

#include <limits>
#include <stdexcept>

namespace ttnheom {

Mat DenseEdo::rho() const {
  const Index m = dims.at(0);
  const Index stride = data.size() / (m * m);
  Mat r(m, m);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j) r(i, j) = data[(i * m + j) * stride];
  return r;
}

Index dense_size(const std::vector<Index>& dims) {
  constexpr Index cap = std::numeric_limits<Index>::max() / 4;
  Index p = 1;
  for (Index d : dims) {
    if (d > 0 && p > cap / d) return cap;
    p *= d;
  }
  return p;
}

Vec permute_axes(const Vec& data, const std::vector<Index>& dims, const std::vector<int>& perm) {
  const size_t n = dims.size();
  if (perm.size() != n) throw std::invalid_argument("permute_axes: permutation length mismatch");
  std::vector<Index> in_stride(n, 1);
  for (size_t a = n - 1; a > 0; --a) in_stride[a - 1] = in_stride[a] * dims[a];
  std::vector<Index> od(n), os(n);
  for (size_t a = 0; a < n; ++a) {
    od[a] = dims[static_cast<size_t>(perm[a])];
    os[a] = in_stride[static_cast<size_t>(perm[a])];
  }
  Vec out(data.size());
  std::vector<Index> idx(n, 0);
  Index src = 0;
  for (Index k = 0; k < data.size(); ++k) {
    out[k] = data[src];
    for (size_t a = n; a-- > 0;) {
      if (++idx[a] < od[a]) {
        src += os[a];
        break;
      }
      src -= os[a] * (od[a] - 1);
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace ttnheom
