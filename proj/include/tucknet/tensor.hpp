#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstring>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "tucknet/errors.hpp"
#include "tucknet/rng.hpp"

namespace tucknet {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense N-way array with row-major (last mode fastest) storage.
///
/// Values are plain data: copying, moving and sharing across threads after
/// construction are all safe. All algebra lives in free functions so the
/// class stays a minimal carrier.
template <typename Scalar = double>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<Index> shape)
      : shape_(std::move(shape)), data_(VectorX<Scalar>::Zero(checked_size(shape_))) {}

  Tensor(std::vector<Index> shape, VectorX<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw ShapeError("tensor data length does not match its shape");
    }
  }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor constant(std::vector<Index> shape, Scalar v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor identity(Index n) {
    Tensor t({n, n});
    for (Index i = 0; i < n; ++i) t.data_[i * n + i] = Scalar(1);
    return t;
  }

  Index order() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  const std::vector<Index>& shape() const { return shape_; }

  Index dim(Index mode) const {
    check_mode(mode);
    return shape_[static_cast<std::size_t>(mode)];
  }

  void check_mode(Index mode) const {
    if (mode < 0 || mode >= order()) {
      std::ostringstream msg;
      msg << "mode " << mode << " out of range for order-" << order() << " tensor";
      throw ModeError(msg.str());
    }
  }

  // Flat row-major access.
  Scalar operator[](Index i) const { return data_[i]; }
  Scalar& operator[](Index i) { return data_[i]; }

  Scalar at(std::span<const Index> idx) const { return data_[offset(idx)]; }
  Scalar& at(std::span<const Index> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<Index> idx) const {
    return at(std::span<const Index>(idx.begin(), idx.size()));
  }
  Scalar& at(std::initializer_list<Index> idx) {
    return at(std::span<const Index>(idx.begin(), idx.size()));
  }

  const Scalar* data() const { return data_.data(); }
  Scalar* data() { return data_.data(); }
  const VectorX<Scalar>& vec() const { return data_; }
  VectorX<Scalar>& vec() { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Row-major strides: stride[order-1] == 1.
  std::vector<Index> strides() const {
    std::vector<Index> s(shape_.size(), 1);
    for (Index k = order() - 2; k >= 0; --k) {
      s[static_cast<std::size_t>(k)] =
          s[static_cast<std::size_t>(k + 1)] * shape_[static_cast<std::size_t>(k + 1)];
    }
    return s;
  }

  std::string shape_string() const {
    std::ostringstream s;
    s << "(";
    for (std::size_t k = 0; k < shape_.size(); ++k) s << (k ? "," : "") << shape_[k];
    s << ")";
    return s.str();
  }

 private:
  static Index checked_size(const std::vector<Index>& shape) {
    if (shape.empty()) throw ShapeError("tensor order must be at least 1");
    Index n = 1;
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("tensor mode sizes must be positive");
      n *= d;
    }
    return n;
  }

  Index offset(std::span<const Index> idx) const {
    if (static_cast<Index>(idx.size()) != order()) {
      throw ShapeError("index arity does not match tensor order");
    }
    Index off = 0, stride = 1;
    for (Index k = order() - 1; k >= 0; --k) {
      off += idx[static_cast<std::size_t>(k)] * stride;
      stride *= shape_[static_cast<std::size_t>(k)];
    }
    return off;
  }

  std::vector<Index> shape_;
  VectorX<Scalar> data_;
};

using TensorXd = Tensor<double>;

// --- Matrix bridging -------------------------------------------------------

template <typename Scalar>
Eigen::Map<const MatrixRM<Scalar>> as_matrix(const Tensor<Scalar>& t) {
  if (t.order() != 2) throw ShapeError("as_matrix requires an order-2 tensor");
  return {t.data(), t.dim(0), t.dim(1)};
}

template <typename Scalar>
Eigen::Map<MatrixRM<Scalar>> as_matrix(Tensor<Scalar>& t) {
  if (t.order() != 2) throw ShapeError("as_matrix requires an order-2 tensor");
  return {t.data(), t.dim(0), t.dim(1)};
}

template <typename Scalar, typename Derived>
Tensor<Scalar> from_matrix(const Eigen::MatrixBase<Derived>& m) {
  Tensor<Scalar> t({m.rows(), m.cols()});
  as_matrix(t) = m;
  return t;
}

inline TensorXd from_matrix(const Eigen::MatrixXd& m) { return from_matrix<double>(m); }

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& t) {
  Tensor<Scalar> out({t.dim(1), t.dim(0)});
  as_matrix(out) = as_matrix(t).transpose();
  return out;
}

// --- Unfolding --------------------------------------------------------------

/// Mode-n matricization. Row i holds every entry whose mode-n index is i;
/// the column index flattens the remaining modes in increasing mode order
/// with the last one fastest, so that refold(unfold(x, n)) == x bit-exactly.
template <typename Scalar = double>
struct Unfolding {
  std::vector<Index> source_shape;
  Index mode = 0;
  Tensor<Scalar> matrix;  // shape (D_n, prod of remaining mode sizes)
};

namespace detail {

template <typename Scalar>
void split_extents(const Tensor<Scalar>& x, Index mode, Index& outer, Index& inner) {
  outer = 1;
  inner = 1;
  for (Index k = 0; k < mode; ++k) outer *= x.dim(k);
  for (Index k = mode + 1; k < x.order(); ++k) inner *= x.dim(k);
}

}  // namespace detail

template <typename Scalar>
Unfolding<Scalar> unfold(const Tensor<Scalar>& x, Index mode) {
  x.check_mode(mode);
  Index outer = 0, inner = 0;
  detail::split_extents(x, mode, outer, inner);
  const Index dn = x.dim(mode);
  const Index cols = outer * inner;

  Tensor<Scalar> m({dn, cols});
  const Scalar* src = x.data();
  Scalar* dst = m.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index r = 0; r < dn; ++r) {
      std::memcpy(dst + r * cols + o * inner, src + (o * dn + r) * inner,
                  sizeof(Scalar) * static_cast<std::size_t>(inner));
    }
  }
  return {x.shape(), mode, std::move(m)};
}

/// Inverse of unfold for an arbitrary target shape whose mode `mode` equals
/// the matrix row count and whose remaining extents match the column layout.
template <typename Scalar>
Tensor<Scalar> fold(const Tensor<Scalar>& matrix, const std::vector<Index>& target_shape,
                    Index mode) {
  Tensor<Scalar> out(target_shape);
  out.check_mode(mode);
  Index outer = 0, inner = 0;
  detail::split_extents(out, mode, outer, inner);
  const Index dn = out.dim(mode);
  const Index cols = outer * inner;
  if (matrix.order() != 2 || matrix.dim(0) != dn || matrix.dim(1) != cols) {
    throw ShapeError("fold: matrix shape " + matrix.shape_string() +
                     " does not match target " + out.shape_string());
  }
  const Scalar* src = matrix.data();
  Scalar* dst = out.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index r = 0; r < dn; ++r) {
      std::memcpy(dst + (o * dn + r) * inner, src + r * cols + o * inner,
                  sizeof(Scalar) * static_cast<std::size_t>(inner));
    }
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> refold(const Unfolding<Scalar>& u) {
  return fold(u.matrix, u.source_shape, u.mode);
}

// --- Contractions -----------------------------------------------------------

/// n-mode product x ×_n m: contracts mode n of x (size D_n) with the columns
/// of m (shape R×D_n), replacing that mode's extent with R.
template <typename Scalar>
Tensor<Scalar> mode_product(const Tensor<Scalar>& x, const Tensor<Scalar>& m, Index mode) {
  x.check_mode(mode);
  if (m.order() != 2) throw ShapeError("mode_product: m must be a matrix");
  if (m.dim(1) != x.dim(mode)) {
    std::ostringstream msg;
    msg << "mode_product: matrix has " << m.dim(1) << " columns but mode " << mode
        << " of " << x.shape_string() << " has size " << x.dim(mode);
    throw ShapeError(msg.str());
  }
  const Unfolding<Scalar> xu = unfold(x, mode);
  Tensor<Scalar> prod({m.dim(0), xu.matrix.dim(1)});
  as_matrix(prod).noalias() = as_matrix(m) * as_matrix(xu.matrix);

  std::vector<Index> out_shape = x.shape();
  out_shape[static_cast<std::size_t>(mode)] = m.dim(0);
  return fold(prod, out_shape, mode);
}

/// Applies one factor per mode: core ×_0 F^(0) ×_1 ... ×_{N-1} F^(N-1).
template <typename Scalar>
Tensor<Scalar> tucker_reconstruct(const Tensor<Scalar>& core,
                                  std::span<const Tensor<Scalar>> factors) {
  if (static_cast<Index>(factors.size()) != core.order()) {
    throw ShapeError("tucker_reconstruct: need one factor per mode");
  }
  Tensor<Scalar> acc = core;
  for (Index k = 0; k < core.order(); ++k) {
    acc = mode_product(acc, factors[static_cast<std::size_t>(k)], k);
  }
  return acc;
}

template <typename Scalar>
Tensor<Scalar> tucker_reconstruct(const Tensor<Scalar>& core,
                                  const std::vector<Tensor<Scalar>>& factors) {
  return tucker_reconstruct(core, std::span<const Tensor<Scalar>>(factors));
}

// --- Norms ------------------------------------------------------------------

template <typename Scalar>
Scalar frobenius_norm(const Tensor<Scalar>& x) {
  return x.vec().norm();
}

template <typename Scalar>
Scalar relative_error(const Tensor<Scalar>& approx, const Tensor<Scalar>& reference) {
  if (!approx.same_shape(reference)) throw ShapeError("relative_error: shape mismatch");
  const Scalar denom = reference.vec().norm();
  const Scalar diff = (approx.vec() - reference.vec()).norm();
  return denom == Scalar(0) ? diff : diff / denom;
}

template <typename Scalar>
bool bitwise_equal(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), sizeof(Scalar) * static_cast<std::size_t>(a.size())) == 0;
}

// --- Decomposition -----------------------------------------------------------

template <typename Scalar = double>
struct TuckerDecomposition {
  Tensor<Scalar> core;                  // shape == requested ranks
  std::vector<Tensor<Scalar>> factors;  // factor k: (D_k, R_k), orthonormal columns
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> leading_left_singular_vectors(const Tensor<Scalar>& x, Index mode, Index rank) {
  const Unfolding<Scalar> xu = unfold(x, mode);
  const MatrixX<Scalar> m = as_matrix(xu.matrix);  // col-major copy for the solver
  // Full U keeps the factor well-defined even when the requested rank exceeds
  // the unfolding's column count (an orthonormal complement fills the tail).
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m, Eigen::ComputeFullU);
  if (svd.info() != Eigen::Success) {
    throw NumericError("hosvd: SVD failed on mode " + std::to_string(mode));
  }
  Tensor<Scalar> f({x.dim(mode), rank});
  as_matrix(f) = svd.matrixU().leftCols(rank);
  return f;
}

template <typename Scalar>
void check_ranks(const Tensor<Scalar>& x, std::span<const Index> ranks) {
  if (static_cast<Index>(ranks.size()) != x.order()) {
    throw ShapeError("rank list must have one entry per mode");
  }
  for (Index k = 0; k < x.order(); ++k) {
    const Index r = ranks[static_cast<std::size_t>(k)];
    if (r < 1 || r > x.dim(k)) {
      std::ostringstream msg;
      msg << "rank " << r << " invalid for mode " << k << " of size " << x.dim(k);
      throw ValueError(msg.str());
    }
  }
}

template <typename Scalar>
Tensor<Scalar> project_core(const Tensor<Scalar>& x, const std::vector<Tensor<Scalar>>& factors) {
  Tensor<Scalar> core = x;
  for (Index k = 0; k < x.order(); ++k) {
    core = mode_product(core, transpose(factors[static_cast<std::size_t>(k)]), k);
  }
  return core;
}

}  // namespace detail

/// Higher-order SVD: factor k collects the top-R_k left singular vectors of
/// the mode-k unfolding of x; the core is x contracted with the transposed
/// factors on every mode. Exact when ranks == shape(x).
template <typename Scalar>
TuckerDecomposition<Scalar> hosvd(const Tensor<Scalar>& x, std::span<const Index> ranks) {
  detail::check_ranks(x, ranks);
  std::vector<Tensor<Scalar>> factors;
  factors.reserve(static_cast<std::size_t>(x.order()));
  for (Index k = 0; k < x.order(); ++k) {
    factors.push_back(
        detail::leading_left_singular_vectors(x, k, ranks[static_cast<std::size_t>(k)]));
  }
  return {detail::project_core(x, factors), std::move(factors)};
}

template <typename Scalar>
TuckerDecomposition<Scalar> hosvd(const Tensor<Scalar>& x, const std::vector<Index>& ranks) {
  return hosvd(x, std::span<const Index>(ranks));
}

/// HOSVD followed by `iterations` rounds of alternating least squares
/// refinement (HOOI). iterations == 0 reduces to plain HOSVD.
template <typename Scalar>
TuckerDecomposition<Scalar> hooi(const Tensor<Scalar>& x, std::span<const Index> ranks,
                                 int iterations) {
  TuckerDecomposition<Scalar> d = hosvd(x, ranks);
  for (int it = 0; it < iterations; ++it) {
    for (Index n = 0; n < x.order(); ++n) {
      Tensor<Scalar> y = x;
      for (Index k = 0; k < x.order(); ++k) {
        if (k == n) continue;
        y = mode_product(y, transpose(d.factors[static_cast<std::size_t>(k)]), k);
      }
      d.factors[static_cast<std::size_t>(n)] =
          detail::leading_left_singular_vectors(y, n, ranks[static_cast<std::size_t>(n)]);
    }
  }
  d.core = detail::project_core(x, d.factors);
  return d;
}

template <typename Scalar>
TuckerDecomposition<Scalar> hooi(const Tensor<Scalar>& x, const std::vector<Index>& ranks,
                                 int iterations) {
  return hooi(x, std::span<const Index>(ranks), iterations);
}

// --- Random fills ------------------------------------------------------------

template <typename Scalar = double>
Tensor<Scalar> random_normal_tensor(std::vector<Index> shape, CounterRng& rng,
                                    Scalar mean = Scalar(0), Scalar stddev = Scalar(1)) {
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.normal(mean, stddev));
  return t;
}

template <typename Scalar = double>
Tensor<Scalar> random_uniform_tensor(std::vector<Index> shape, CounterRng& rng, Scalar lo,
                                     Scalar hi) {
  Tensor<Scalar> t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rng.uniform(lo, hi));
  return t;
}

}  // namespace tucknet
