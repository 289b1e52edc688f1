#include "ttnheom/linalg.hpp"

#define lapack_complex_float std::complex<float>
#define lapack_complex_double std::complex<double>
#include <lapacke.h>

#include <algorithm>
#include <numeric>
#include <random>

namespace ttnheom {

namespace {

Index product(const std::vector<Index>& dims, size_t begin, size_t end) {
  Index p = 1;
  for (size_t k = begin; k < end; ++k) p *= dims[k];
  return p;
}

using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

void fix_phases(Svd& r) {
  for (Index c = 0; c < r.u.cols(); ++c) {
    Index imax = 0;
    r.u.col(c).cwiseAbs().maxCoeff(&imax);
    const cplx p = r.u(imax, c);
    const double ap = std::abs(p);
    if (ap == 0.0) continue;
    const cplx ph = std::conj(p) / ap;
    r.u.col(c) *= ph;
    r.v.col(c) *= ph;
  }
}

}  // namespace

Tensor::Tensor(std::vector<Index> dims) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 4) throw LinalgError("tensor order must be 1..4");
  for (Index d : dims_)
    if (d < 1) throw LinalgError("tensor dimensions must be positive");
  data_ = Vec::Zero(product(dims_, 0, dims_.size()));
}

Tensor apply_leg(const Tensor& t, int leg, const Mat& op) {
  std::vector<Index> dims = t.dims();
  dims[static_cast<size_t>(leg)] = op.rows();
  Tensor out(dims);
  apply_leg_add(t, leg, op, cplx(1.0), out);
  return out;
}

void apply_leg_add(const Tensor& t, int leg, const Mat& op, cplx scale, Tensor& out) {
  const auto& dims = t.dims();
  const size_t l = static_cast<size_t>(leg);
  if (op.cols() != dims[l]) throw LinalgError("apply_leg: operator/leg size mismatch");
  const Index pre = product(dims, 0, l);
  const Index post = product(dims, l + 1, dims.size());
  const Index d = dims[l];
  const Index dn = op.rows();
  if (out.size() != pre * dn * post) throw LinalgError("apply_leg_add: output shape mismatch");
  if (post == 1) {
    ConstRowMap x(t.data(), pre, d);
    RowMap y(out.data(), pre, dn);
    y.noalias() += scale * (x * op.transpose());
    return;
  }
  for (Index p = 0; p < pre; ++p) {
    ConstRowMap x(t.data() + p * d * post, d, post);
    RowMap y(out.data() + p * dn * post, dn, post);
    if (scale == cplx(1.0))
      y.noalias() += op * x;
    else
      y.noalias() += scale * (op * x);
  }
}

RowMat unfold(const Tensor& t, int leg) {
  const auto& dims = t.dims();
  const size_t l = static_cast<size_t>(leg);
  const Index pre = product(dims, 0, l);
  const Index post = product(dims, l + 1, dims.size());
  const Index d = dims[l];
  if (pre == 1) return ConstRowMap(t.data(), d, post);
  RowMat m(d, pre * post);
  if (post == 1) {
    m = ConstRowMap(t.data(), pre, d).transpose();
    return m;
  }
  for (Index p = 0; p < pre; ++p) m.middleCols(p * post, post) = ConstRowMap(t.data() + p * d * post, d, post);
  return m;
}

Tensor fold(const RowMat& m, int leg, const std::vector<Index>& dims) {
  Tensor t(dims);
  const size_t l = static_cast<size_t>(leg);
  const Index pre = product(dims, 0, l);
  const Index post = product(dims, l + 1, dims.size());
  const Index d = dims[l];
  if (m.rows() != d || m.cols() != pre * post) throw LinalgError("fold: shape mismatch");
  if (pre == 1) {
    RowMap(t.data(), d, post) = m;
  } else if (post == 1) {
    RowMap(t.data(), pre, d) = m.transpose();
  } else {
    for (Index p = 0; p < pre; ++p) RowMap(t.data() + p * d * post, d, post) = m.middleCols(p * post, post);
  }
  return t;
}

Mat leg_overlap(const Tensor& bra, const Tensor& ket, int leg) {
  const auto& db = bra.dims();
  const auto& dk = ket.dims();
  const size_t l = static_cast<size_t>(leg);
  const Index pre = product(dk, 0, l);
  const Index post = product(dk, l + 1, dk.size());
  if (product(db, 0, l) != pre || product(db, l + 1, db.size()) != post)
    throw LinalgError("leg_overlap: shape mismatch");
  const Index d1 = db[l];
  const Index d2 = dk[l];
  if (post == 1) {
    ConstRowMap b(bra.data(), pre, d1);
    ConstRowMap k(ket.data(), pre, d2);
    return b.adjoint() * k;
  }
  Mat e = Mat::Zero(d1, d2);
  for (Index p = 0; p < pre; ++p) {
    ConstRowMap b(bra.data() + p * d1 * post, d1, post);
    ConstRowMap k(ket.data() + p * d2 * post, d2, post);
    e.noalias() += b.conjugate() * k.transpose();
  }
  return e;
}

Tensor contract(const Tensor& a, int leg_a, const Tensor& b, int leg_b) {
  if (a.dim(leg_a) != b.dim(leg_b)) throw LinalgError("contract: bond size mismatch");
  std::vector<Index> dims;
  for (int k = 0; k < a.order(); ++k)
    if (k != leg_a) dims.push_back(a.dim(k));
  for (int k = 0; k < b.order(); ++k)
    if (k != leg_b) dims.push_back(b.dim(k));
  const RowMat ua = unfold(a, leg_a);
  const RowMat ub = unfold(b, leg_b);
  Tensor out(dims);
  RowMap(out.data(), ua.cols(), ub.cols()).noalias() = ua.transpose() * ub;
  return out;
}

Svd svd_thin(const Mat& a) {
  if (!a.allFinite()) throw LinalgError("svd: non-finite input");
  const lapack_int m = static_cast<lapack_int>(a.rows());
  const lapack_int n = static_cast<lapack_int>(a.cols());
  const lapack_int k = std::min(m, n);
  Svd r;
  r.s.resize(k);
  r.u.resize(m, k);
  Mat vt(k, n);
  if (k == 0) {
    r.v.resize(n, 0);
    return r;
  }
  Mat work = a;
  lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'S', m, n, work.data(), m, r.s.data(), r.u.data(), m,
                                   vt.data(), k);
  if (info != 0) {
    work = a;
    std::vector<double> superb(static_cast<size_t>(std::max<lapack_int>(1, k - 1)));
    info = LAPACKE_zgesvd(LAPACK_COL_MAJOR, 'S', 'S', m, n, work.data(), m, r.s.data(), r.u.data(), m, vt.data(),
                          k, superb.data());
  }
  if (info != 0) throw LinalgError("svd: LAPACK failed to converge");
  r.v = vt.adjoint();
  fix_phases(r);
  return r;
}

Svd svd_leading(const Mat& a, Index k) {
  const Index mn = std::min(a.rows(), a.cols());
  k = std::min(k, mn);
  constexpr Index kDenseLimit = 600;
  if (mn <= kDenseLimit || 2 * (k + 16) >= mn) {
    Svd full = svd_thin(a);
    Svd r;
    r.u = full.u.leftCols(k);
    r.s = full.s.head(k);
    r.v = full.v.leftCols(k);
    return r;
  }
  if (!a.allFinite()) throw LinalgError("svd: non-finite input");
  const Index l = k + 16;
  std::mt19937_64 rng(0x5eed5eedULL);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat omega(a.cols(), l);
  for (Index j = 0; j < l; ++j)
    for (Index i = 0; i < a.cols(); ++i) omega(i, j) = cplx(g(rng), g(rng));
  Mat q = orthonormal_columns(a * omega);
  for (int it = 0; it < 3; ++it) {
    Mat z = orthonormal_columns(a.adjoint() * q);
    q = orthonormal_columns(a * z);
  }
  const Mat b = q.adjoint() * a;
  Svd small = svd_thin(b);
  Svd r;
  r.u = q * small.u.leftCols(k);
  r.s = small.s.head(k);
  r.v = small.v.leftCols(k);
  fix_phases(r);
  return r;
}

Mat orthonormal_columns(const Mat& a) {
  Eigen::HouseholderQR<Mat> qr(a);
  const Index k = std::min(a.rows(), a.cols());
  Mat q = qr.householderQ() * Mat::Identity(a.rows(), k);
  return q;
}

}  // namespace ttnheom
