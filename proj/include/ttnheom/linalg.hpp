#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <vector>

namespace ttnheom {

using cplx = std::complex<double>;
using Index = Eigen::Index;
using Mat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic>;
using RowMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;

class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense complex tensor of order 1..4, stored row-major (last leg fastest).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> dims);

  int order() const { return static_cast<int>(dims_.size()); }
  Index dim(int leg) const { return dims_[static_cast<size_t>(leg)]; }
  const std::vector<Index>& dims() const { return dims_; }
  Index size() const { return data_.size(); }

  Vec& flat() { return data_; }
  const Vec& flat() const { return data_; }
  cplx* data() { return data_.data(); }
  const cplx* data() const { return data_.data(); }

  cplx& operator()(Index a, Index b, Index c) { return data_[(a * dims_[1] + b) * dims_[2] + c]; }
  cplx operator()(Index a, Index b, Index c) const { return data_[(a * dims_[1] + b) * dims_[2] + c]; }
  cplx& operator()(Index a, Index b, Index c, Index d) {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }
  cplx operator()(Index a, Index b, Index c, Index d) const {
    return data_[((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d];
  }

  void set_zero() { data_.setZero(); }

 private:
  std::vector<Index> dims_;
  Vec data_;
};

// out[.., x', ..] = sum_x op[x', x] t[.., x, ..] on the given leg.
Tensor apply_leg(const Tensor& t, int leg, const Mat& op);

// out += scale * apply_leg(t, leg, op); out must already have the result shape.
void apply_leg_add(const Tensor& t, int leg, const Mat& op, cplx scale, Tensor& out);

// Matricization with the given leg as rows and the remaining legs (in order) as columns.
RowMat unfold(const Tensor& t, int leg);

// Inverse of unfold.
Tensor fold(const RowMat& m, int leg, const std::vector<Index>& dims);

// E[a', a] = sum over all other legs of conj(bra[.., a', ..]) * ket[.., a, ..].
Mat leg_overlap(const Tensor& bra, const Tensor& ket, int leg);

// Contracts leg_a of a with leg_b of b. Result legs: remaining legs of a, then remaining legs of b.
Tensor contract(const Tensor& a, int leg_a, const Tensor& b, int leg_b);

// A = u * diag(s) * v^H with s descending. Each column of u has its largest-magnitude
// entry real and positive.
struct Svd {
  Mat u;
  RVec s;
  Mat v;
};

Svd svd_thin(const Mat& a);

// Leading k singular triplets. Falls back to svd_thin for small matrices and otherwise
// uses a seeded randomized range finder with power iterations.
Svd svd_leading(const Mat& a, Index k);

// Orthonormal basis for the column space of a (thin Householder QR with phase fixing).
Mat orthonormal_columns(const Mat& a);

}  // namespace ttnheom
