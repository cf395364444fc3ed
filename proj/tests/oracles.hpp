#pragma once

// Brute-force reference implementations used as independent oracles in tests.
// Everything here is written with plain nested loops and explicit index
// arithmetic on purpose: these must not share code paths with the library.

#include <vector>

#include "tucknet/tensor.hpp"

namespace oracle {

using tucknet::Index;
using tucknet::TensorXd;

inline std::vector<Index> row_major_strides(const std::vector<Index>& shape) {
  std::vector<Index> s(shape.size(), 1);
  for (int k = static_cast<int>(shape.size()) - 2; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k) + 1] * shape[static_cast<std::size_t>(k) + 1];
  }
  return s;
}

inline std::vector<Index> unflatten(Index flat, const std::vector<Index>& shape) {
  std::vector<Index> idx(shape.size(), 0);
  for (int k = static_cast<int>(shape.size()) - 1; k >= 0; --k) {
    idx[static_cast<std::size_t>(k)] = flat % shape[static_cast<std::size_t>(k)];
    flat /= shape[static_cast<std::size_t>(k)];
  }
  return idx;
}

// Direct contraction sum: T[i0..r..iN] = sum_k M[r,k] X[i0..k..iN].
inline TensorXd mode_product(const TensorXd& x, const TensorXd& m, Index mode) {
  std::vector<Index> out_shape = x.shape();
  out_shape[static_cast<std::size_t>(mode)] = m.dim(0);
  TensorXd out(out_shape);
  for (Index flat = 0; flat < out.size(); ++flat) {
    std::vector<Index> idx = unflatten(flat, out_shape);
    double sum = 0.0;
    std::vector<Index> src = idx;
    for (Index k = 0; k < x.dim(mode); ++k) {
      src[static_cast<std::size_t>(mode)] = k;
      sum += m.at({idx[static_cast<std::size_t>(mode)], k}) * x.at(std::span<const Index>(src));
    }
    out[flat] = sum;
  }
  return out;
}

// Mode-n matricization with the documented column convention: remaining modes
// in increasing order, last one fastest.
inline TensorXd unfold(const TensorXd& x, Index mode) {
  std::vector<Index> rest;
  for (Index k = 0; k < x.order(); ++k) {
    if (k != mode) rest.push_back(x.dim(k));
  }
  Index cols = 1;
  for (Index d : rest) cols *= d;
  TensorXd m({x.dim(mode), cols});
  for (Index flat = 0; flat < x.size(); ++flat) {
    std::vector<Index> idx = unflatten(flat, x.shape());
    std::vector<Index> rem;
    for (Index k = 0; k < x.order(); ++k) {
      if (k != mode) rem.push_back(idx[static_cast<std::size_t>(k)]);
    }
    Index col = 0;
    Index stride = 1;
    for (int k = static_cast<int>(rem.size()) - 1; k >= 0; --k) {
      col += rem[static_cast<std::size_t>(k)] * stride;
      stride *= rest[static_cast<std::size_t>(k)];
    }
    m.at({idx[static_cast<std::size_t>(mode)], col}) = x[flat];
  }
  return m;
}

inline double frobenius_norm(const TensorXd& x) {
  double sum = 0.0;
  for (Index i = 0; i < x.size(); ++i) sum += x[i] * x[i];
  return std::sqrt(sum);
}

// Six-loop direct convolution, NCHW input, OIHW kernel, zero padding.
inline TensorXd conv2d(const TensorXd& x, const TensorXd& k, Index stride, Index pad) {
  const Index n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1;
  const Index ow = (w + 2 * pad - kw) / stride + 1;
  TensorXd out({n, cout, oh, ow});
  for (Index b = 0; b < n; ++b) {
    for (Index co = 0; co < cout; ++co) {
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) {
          double sum = 0.0;
          for (Index ci = 0; ci < cin; ++ci) {
            for (Index u = 0; u < kh; ++u) {
              for (Index v = 0; v < kw; ++v) {
                const Index ih = i * stride + u - pad;
                const Index iw = j * stride + v - pad;
                if (ih < 0 || ih >= h || iw < 0 || iw >= w) continue;
                sum += x.at({b, ci, ih, iw}) * k.at({co, ci, u, v});
              }
            }
          }
          out.at({b, co, i, j}) = sum;
        }
      }
    }
  }
  return out;
}

}  // namespace oracle
