#include "tucknet/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace tucknet::ad {

namespace {

struct ConvDims {
  Index n, cin, h, w, cout, kh, kw, stride, pad, oh, ow;
  Index ckk() const { return cin * kh * kw; }
  Index out_pixels() const { return oh * ow; }
};

ConvDims conv_dims(const TensorXd& x, const TensorXd& k, Index stride, Index pad) {
  if (x.order() != 4 || k.order() != 4) {
    throw ShapeError("conv2d: input must be NCHW and kernel OIHW");
  }
  if (k.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: kernel input channels " + std::to_string(k.dim(1)) +
                     " do not match input channels " + std::to_string(x.dim(1)));
  }
  if (stride < 1 || pad < 0) throw ValueError("conv2d: stride must be >= 1 and pad >= 0");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3),
             stride,   pad,      0,        0};
  d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
  d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  return d;
}

// Patch matrix with one column per output pixel of every sample:
// col[(ci*kh+u)*kw+v, b*oh*ow + i*ow + j] = x[b, ci, i*s+u-p, j*s+v-p].
TensorXd im2col(const TensorXd& x, const ConvDims& d) {
  TensorXd col({d.ckk(), d.n * d.out_pixels()});
  const Index cols = col.dim(1);
  double* dst = col.data();
  const double* src = x.data();
  for (Index b = 0; b < d.n; ++b) {
    for (Index ci = 0; ci < d.cin; ++ci) {
      const double* plane = src + (b * d.cin + ci) * d.h * d.w;
      for (Index u = 0; u < d.kh; ++u) {
        for (Index v = 0; v < d.kw; ++v) {
          double* row = dst + ((ci * d.kh + u) * d.kw + v) * cols + b * d.out_pixels();
          for (Index i = 0; i < d.oh; ++i) {
            const Index ih = i * d.stride + u - d.pad;
            if (ih < 0 || ih >= d.h) continue;  // row stays zero
            for (Index j = 0; j < d.ow; ++j) {
              const Index iw = j * d.stride + v - d.pad;
              if (iw < 0 || iw >= d.w) continue;
              row[i * d.ow + j] = plane[ih * d.w + iw];
            }
          }
        }
      }
    }
  }
  return col;
}

// Scatter-add of a patch-matrix gradient back onto the input layout.
void col2im_add(const TensorXd& col, const ConvDims& d, TensorXd& gx) {
  const Index cols = col.dim(1);
  const double* src = col.data();
  double* dst = gx.data();
  for (Index b = 0; b < d.n; ++b) {
    for (Index ci = 0; ci < d.cin; ++ci) {
      double* plane = dst + (b * d.cin + ci) * d.h * d.w;
      for (Index u = 0; u < d.kh; ++u) {
        for (Index v = 0; v < d.kw; ++v) {
          const double* row = src + ((ci * d.kh + u) * d.kw + v) * cols + b * d.out_pixels();
          for (Index i = 0; i < d.oh; ++i) {
            const Index ih = i * d.stride + u - d.pad;
            if (ih < 0 || ih >= d.h) continue;
            for (Index j = 0; j < d.ow; ++j) {
              const Index iw = j * d.stride + v - d.pad;
              if (iw < 0 || iw >= d.w) continue;
              plane[ih * d.w + iw] += row[i * d.ow + j];
            }
          }
        }
      }
    }
  }
}

ConvDims node_conv_dims(const Node& node, const TensorXd& x, const TensorXd& k) {
  return conv_dims(x, k, node.stride, node.pad);
}

}  // namespace

NodeId Tape::push(Node node) {
  if (node.op != Op::Leaf) {
    bool needs = false;
    for (NodeId i : node.in) {
      if (i != kNoNode && at(i).requires_grad) needs = true;
    }
    node.requires_grad = needs;
  }
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(TensorXd value, bool requires_grad) {
  Node node;
  node.op = Op::Leaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  return push(std::move(node));
}

NodeId Tape::mode_product(NodeId x, NodeId m, Index mode) {
  const TensorXd& xv = value(x);
  const TensorXd& mv = value(m);
  xv.check_mode(mode);
  if (mv.order() != 2 || mv.dim(1) != xv.dim(mode)) {
    throw ShapeError("mode_product: factor shape " + mv.shape_string() +
                     " incompatible with mode " + std::to_string(mode) + " of " +
                     xv.shape_string());
  }
  Node node;
  node.op = Op::ModeProduct;
  node.in = {x, m, kNoNode};
  node.mode = mode;
  Unfolding<double> xu = unfold(xv, mode);
  TensorXd prod({mv.dim(0), xu.matrix.dim(1)});
  as_matrix(prod).noalias() = as_matrix(mv) * as_matrix(xu.matrix);
  std::vector<Index> out_shape = xv.shape();
  out_shape[static_cast<std::size_t>(mode)] = mv.dim(0);
  node.value = fold(prod, out_shape, mode);
  node.saved_a = std::move(xu.matrix);
  return push(std::move(node));
}

NodeId Tape::conv2d(NodeId x, NodeId kernel, Index stride, Index pad) {
  const TensorXd& xv = value(x);
  const TensorXd& kv = value(kernel);
  const ConvDims d = conv_dims(xv, kv, stride, pad);

  Node node;
  node.op = Op::Conv2d;
  node.in = {x, kernel, kNoNode};
  node.stride = stride;
  node.pad = pad;
  node.saved_a = im2col(xv, d);

  node.value = TensorXd({d.n, d.cout, d.oh, d.ow});
  Eigen::Map<const MatrixRM<double>> km(kv.data(), d.cout, d.ckk());
  Eigen::Map<const MatrixRM<double>> col(node.saved_a.data(), d.ckk(), d.n * d.out_pixels());
  MatrixRM<double> out = km * col;  // (cout, n*oh*ow)
  double* dst = node.value.data();
  for (Index b = 0; b < d.n; ++b) {
    for (Index co = 0; co < d.cout; ++co) {
      std::memcpy(dst + (b * d.cout + co) * d.out_pixels(),
                  out.data() + co * (d.n * d.out_pixels()) + b * d.out_pixels(),
                  sizeof(double) * static_cast<std::size_t>(d.out_pixels()));
    }
  }
  return push(std::move(node));
}

NodeId Tape::batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormStats& stats,
                        bool training, double eps, double momentum) {
  const TensorXd& xv = value(x);
  if (xv.order() != 4) throw ShapeError("batch_norm: input must be NCHW");
  const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  const TensorXd& gv = value(gamma);
  const TensorXd& bv = value(beta);
  if (gv.size() != c || bv.size() != c || stats.mean.size() != c || stats.var.size() != c) {
    throw ShapeError("batch_norm: parameter/stat sizes must match the channel count");
  }

  Node node;
  node.op = Op::BatchNorm;
  node.in = {x, gamma, beta};
  node.training = training;
  node.eps = eps;
  node.momentum = momentum;
  node.value = TensorXd(xv.shape());
  node.saved_a = TensorXd(xv.shape());  // x_hat
  node.saved_b = TensorXd({c});         // inv_std per channel

  const Index m = n * hw;
  for (Index ch = 0; ch < c; ++ch) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (Index b = 0; b < n; ++b) {
        sum += Eigen::Map<const VectorX<double>>(xv.data() + (b * c + ch) * hw, hw).sum();
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (Index b = 0; b < n; ++b) {
        sq += (Eigen::Map<const VectorX<double>>(xv.data() + (b * c + ch) * hw, hw).array() - mean)
                  .square()
                  .sum();
      }
      var = sq / static_cast<double>(m);  // biased, matching the normalization
      stats.mean[ch] = (1.0 - momentum) * stats.mean[ch] + momentum * mean;
      stats.var[ch] = (1.0 - momentum) * stats.var[ch] + momentum * var;
    } else {
      mean = stats.mean[ch];
      var = stats.var[ch];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    node.saved_b[ch] = inv;
    for (Index b = 0; b < n; ++b) {
      const Index off = (b * c + ch) * hw;
      Eigen::Map<const VectorX<double>> in(xv.data() + off, hw);
      Eigen::Map<VectorX<double>> xh(node.saved_a.data() + off, hw);
      Eigen::Map<VectorX<double>> out(node.value.data() + off, hw);
      xh = (in.array() - mean) * inv;
      out = gv[ch] * xh.array() + bv[ch];
    }
  }
  return push(std::move(node));
}

NodeId Tape::relu(NodeId x) {
  Node node;
  node.op = Op::Relu;
  node.in = {x, kNoNode, kNoNode};
  node.value = value(x);
  node.value.vec() = node.value.vec().cwiseMax(0.0);
  return push(std::move(node));
}

NodeId Tape::global_avg_pool(NodeId x) {
  const TensorXd& xv = value(x);
  if (xv.order() != 4) throw ShapeError("global_avg_pool: input must be NCHW");
  const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Node node;
  node.op = Op::GlobalAvgPool;
  node.in = {x, kNoNode, kNoNode};
  node.value = TensorXd({n, c});
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      node.value.at({b, ch}) =
          Eigen::Map<const VectorX<double>>(xv.data() + (b * c + ch) * hw, hw).mean();
    }
  }
  return push(std::move(node));
}

NodeId Tape::linear(NodeId x, NodeId weight, NodeId bias) {
  const TensorXd& xv = value(x);
  const TensorXd& wv = value(weight);
  const TensorXd& bv = value(bias);
  if (xv.order() != 2 || wv.order() != 2 || xv.dim(1) != wv.dim(1)) {
    throw ShapeError("linear: x must be (N,F) and weight (C,F)");
  }
  if (bv.size() != wv.dim(0)) throw ShapeError("linear: bias size must match output features");
  Node node;
  node.op = Op::Linear;
  node.in = {x, weight, bias};
  node.value = TensorXd({xv.dim(0), wv.dim(0)});
  as_matrix(node.value).noalias() = as_matrix(xv) * as_matrix(wv).transpose();
  as_matrix(node.value).rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(bv.data(), bv.size());
  return push(std::move(node));
}

NodeId Tape::softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
  const TensorXd& lv = value(logits);
  if (lv.order() != 2) throw ShapeError("softmax_cross_entropy: logits must be (N,C)");
  const Index n = lv.dim(0), c = lv.dim(1);
  if (static_cast<Index>(labels.size()) != n) {
    throw ShapeError("softmax_cross_entropy: one label per row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= c) throw ValueError("softmax_cross_entropy: label out of range");
  }
  Node node;
  node.op = Op::SoftmaxCrossEntropy;
  node.in = {logits, kNoNode, kNoNode};
  node.saved_a = TensorXd({n, c});  // probabilities
  double loss = 0.0;
  for (Index b = 0; b < n; ++b) {
    Eigen::Map<const Eigen::RowVectorXd> row(lv.data() + b * c, c);
    Eigen::Map<Eigen::RowVectorXd> probs(node.saved_a.data() + b * c, c);
    const double mx = row.maxCoeff();
    probs = (row.array() - mx).exp();
    const double z = probs.sum();
    probs /= z;
    loss -= std::log(probs[labels[static_cast<std::size_t>(b)]]);
  }
  node.labels = std::move(labels);
  node.value = TensorXd::constant({1}, loss / static_cast<double>(n));
  return push(std::move(node));
}

NodeId Tape::add(NodeId a, NodeId b) {
  if (!value(a).same_shape(value(b))) {
    throw ShapeError("add: operand shapes differ: " + value(a).shape_string() + " vs " +
                     value(b).shape_string());
  }
  Node node;
  node.op = Op::Add;
  node.in = {a, b, kNoNode};
  node.value = value(a);
  node.value.vec() += value(b).vec();
  return push(std::move(node));
}

NodeId Tape::scale(NodeId x, double alpha) {
  Node node;
  node.op = Op::Scale;
  node.in = {x, kNoNode, kNoNode};
  node.alpha = alpha;
  node.value = value(x);
  node.value.vec() *= alpha;
  return push(std::move(node));
}

NodeId Tape::frobenius_sq(NodeId x) {
  Node node;
  node.op = Op::FrobeniusSq;
  node.in = {x, kNoNode, kNoNode};
  node.value = TensorXd::constant({1}, value(x).vec().squaredNorm());
  return push(std::move(node));
}

NodeId Tape::gram(NodeId f) {
  const TensorXd& fv = value(f);
  if (fv.order() != 2) throw ShapeError("gram: input must be a matrix");
  Node node;
  node.op = Op::Gram;
  node.in = {f, kNoNode, kNoNode};
  node.value = TensorXd({fv.dim(1), fv.dim(1)});
  as_matrix(node.value).noalias() = as_matrix(fv).transpose() * as_matrix(fv);
  return push(std::move(node));
}

NodeId Tape::add_identity(NodeId x, double alpha) {
  const TensorXd& xv = value(x);
  if (xv.order() != 2 || xv.dim(0) != xv.dim(1)) {
    throw ShapeError("add_identity: input must be square");
  }
  Node node;
  node.op = Op::AddIdentity;
  node.in = {x, kNoNode, kNoNode};
  node.alpha = alpha;
  node.value = xv;
  for (Index i = 0; i < xv.dim(0); ++i) node.value.at({i, i}) += alpha;
  return push(std::move(node));
}

NodeId Tape::group_slice(NodeId theta, Index block, Index unit) {
  const TensorXd& tv = value(theta);
  if (tv.order() != 6) throw ShapeError("group_slice: input must be an order-6 tensor");
  if (block < 0 || block >= tv.dim(4) || unit < 0 || unit >= tv.dim(5)) {
    throw ValueError("group_slice: block/unit index out of range");
  }
  Node node;
  node.op = Op::GroupSlice;
  node.in = {theta, kNoNode, kNoNode};
  node.slice_block = block;
  node.slice_unit = unit;
  node.value = TensorXd({tv.dim(0), tv.dim(1), tv.dim(2), tv.dim(3)});
  const Index tail = tv.dim(4) * tv.dim(5);
  const double* src = tv.data() + block * tv.dim(5) + unit;
  double* dst = node.value.data();
  for (Index e = 0; e < node.value.size(); ++e) dst[e] = src[e * tail];
  return push(std::move(node));
}

NodeId Tape::subsample2(NodeId x) {
  const TensorXd& xv = value(x);
  if (xv.order() != 4) throw ShapeError("subsample2: input must be NCHW");
  const Index n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Index oh = (h + 1) / 2, ow = (w + 1) / 2;
  Node node;
  node.op = Op::Subsample2;
  node.in = {x, kNoNode, kNoNode};
  node.value = TensorXd({n, c, oh, ow});
  for (Index b = 0; b < n; ++b) {
    for (Index ch = 0; ch < c; ++ch) {
      const double* plane = xv.data() + (b * c + ch) * h * w;
      double* out = node.value.data() + (b * c + ch) * oh * ow;
      for (Index i = 0; i < oh; ++i) {
        for (Index j = 0; j < ow; ++j) out[i * ow + j] = plane[(2 * i) * w + (2 * j)];
      }
    }
  }
  return push(std::move(node));
}

const TensorXd& Tape::grad(NodeId id) const {
  const Node& node = at(id);
  if (!node.has_grad) throw std::logic_error("grad requested for a node without gradient");
  return node.grad;
}

void Tape::accumulate(NodeId id, const TensorXd& delta) {
  Node& node = at(id);
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = delta;
    node.has_grad = true;
  } else {
    node.grad.vec() += delta.vec();
  }
}

void Tape::backward(NodeId loss) {
  Node& top = at(loss);
  if (top.value.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + top.value.shape_string());
  }
  if (!top.requires_grad) return;
  accumulate(loss, TensorXd::constant(top.value.shape(), 1.0));
  for (NodeId id = loss; id >= 0; --id) {
    Node& node = at(id);
    if (!node.has_grad || node.op == Op::Leaf) continue;
    backward_into(node);
  }
}

void Tape::backward_into(Node& node) {
  const TensorXd& g = node.grad;
  switch (node.op) {
    case Op::Leaf:
      break;

    case Op::ModeProduct: {
      const TensorXd& xv = value(node.in[0]);
      const TensorXd& mv = value(node.in[1]);
      const Unfolding<double> gu = unfold(g, node.mode);
      if (at(node.in[1]).requires_grad) {
        TensorXd gm({mv.dim(0), mv.dim(1)});
        as_matrix(gm).noalias() = as_matrix(gu.matrix) * as_matrix(node.saved_a).transpose();
        accumulate(node.in[1], gm);
      }
      if (at(node.in[0]).requires_grad) {
        TensorXd gxm({mv.dim(1), gu.matrix.dim(1)});
        as_matrix(gxm).noalias() = as_matrix(mv).transpose() * as_matrix(gu.matrix);
        accumulate(node.in[0], fold(gxm, xv.shape(), node.mode));
      }
      break;
    }

    case Op::Conv2d: {
      const TensorXd& xv = value(node.in[0]);
      const TensorXd& kv = value(node.in[1]);
      const ConvDims d = node_conv_dims(node, xv, kv);
      // reassemble gradient as (cout, n*oh*ow)
      MatrixRM<double> gout(d.cout, d.n * d.out_pixels());
      for (Index b = 0; b < d.n; ++b) {
        for (Index co = 0; co < d.cout; ++co) {
          std::memcpy(gout.data() + co * (d.n * d.out_pixels()) + b * d.out_pixels(),
                      g.data() + (b * d.cout + co) * d.out_pixels(),
                      sizeof(double) * static_cast<std::size_t>(d.out_pixels()));
        }
      }
      Eigen::Map<const MatrixRM<double>> col(node.saved_a.data(), d.ckk(),
                                             d.n * d.out_pixels());
      if (at(node.in[1]).requires_grad) {
        TensorXd gk(kv.shape());
        Eigen::Map<MatrixRM<double>> gkm(gk.data(), d.cout, d.ckk());
        gkm.noalias() = gout * col.transpose();
        accumulate(node.in[1], gk);
      }
      if (at(node.in[0]).requires_grad) {
        Eigen::Map<const MatrixRM<double>> km(kv.data(), d.cout, d.ckk());
        TensorXd gcol({d.ckk(), d.n * d.out_pixels()});
        as_matrix(gcol).noalias() = km.transpose() * gout;
        TensorXd gx(xv.shape());
        col2im_add(gcol, d, gx);
        accumulate(node.in[0], gx);
      }
      break;
    }

    case Op::BatchNorm: {
      const TensorXd& xv = value(node.in[0]);
      const TensorXd& gv = value(node.in[1]);
      const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
      const Index m = n * hw;
      const bool need_gamma = at(node.in[1]).requires_grad;
      const bool need_beta = at(node.in[2]).requires_grad;
      const bool need_x = at(node.in[0]).requires_grad;
      TensorXd ggamma({c}), gbeta({c});
      TensorXd gx = need_x ? TensorXd(xv.shape()) : TensorXd({1});
      for (Index ch = 0; ch < c; ++ch) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (Index b = 0; b < n; ++b) {
          const Index off = (b * c + ch) * hw;
          Eigen::Map<const VectorX<double>> gseg(g.data() + off, hw);
          Eigen::Map<const VectorX<double>> xh(node.saved_a.data() + off, hw);
          sum_g += gseg.sum();
          sum_gx += gseg.dot(xh);
        }
        gbeta[ch] = sum_g;
        ggamma[ch] = sum_gx;
        if (!need_x) continue;
        const double inv = node.saved_b[ch];
        const double gam = gv[ch];
        if (node.training) {
          const double coeff = gam * inv / static_cast<double>(m);
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            Eigen::Map<const VectorX<double>> gseg(g.data() + off, hw);
            Eigen::Map<const VectorX<double>> xh(node.saved_a.data() + off, hw);
            Eigen::Map<VectorX<double>> out(gx.data() + off, hw);
            out = coeff * (static_cast<double>(m) * gseg.array() - sum_g - xh.array() * sum_gx);
          }
        } else {
          // running statistics are constants in eval mode
          for (Index b = 0; b < n; ++b) {
            const Index off = (b * c + ch) * hw;
            Eigen::Map<const VectorX<double>> gseg(g.data() + off, hw);
            Eigen::Map<VectorX<double>> out(gx.data() + off, hw);
            out = gam * inv * gseg.array();
          }
        }
      }
      if (need_gamma) accumulate(node.in[1], ggamma);
      if (need_beta) accumulate(node.in[2], gbeta);
      if (need_x) accumulate(node.in[0], gx);
      break;
    }

    case Op::Relu: {
      const TensorXd& xv = value(node.in[0]);
      TensorXd gx(xv.shape());
      gx.vec() = (xv.vec().array() > 0.0).select(g.vec().array(), 0.0);
      accumulate(node.in[0], gx);
      break;
    }

    case Op::GlobalAvgPool: {
      const TensorXd& xv = value(node.in[0]);
      const Index n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
      TensorXd gx(xv.shape());
      for (Index b = 0; b < n; ++b) {
        for (Index ch = 0; ch < c; ++ch) {
          Eigen::Map<VectorX<double>>(gx.data() + (b * c + ch) * hw, hw)
              .setConstant(g.at({b, ch}) / static_cast<double>(hw));
        }
      }
      accumulate(node.in[0], gx);
      break;
    }

    case Op::Linear: {
      const TensorXd& xv = value(node.in[0]);
      const TensorXd& wv = value(node.in[1]);
      if (at(node.in[0]).requires_grad) {
        TensorXd gx(xv.shape());
        as_matrix(gx).noalias() = as_matrix(g) * as_matrix(wv);
        accumulate(node.in[0], gx);
      }
      if (at(node.in[1]).requires_grad) {
        TensorXd gw(wv.shape());
        as_matrix(gw).noalias() = as_matrix(g).transpose() * as_matrix(xv);
        accumulate(node.in[1], gw);
      }
      if (at(node.in[2]).requires_grad) {
        TensorXd gb({wv.dim(0)});
        Eigen::Map<VectorX<double>>(gb.data(), gb.size()) =
            as_matrix(g).colwise().sum().transpose();
        accumulate(node.in[2], gb);
      }
      break;
    }

    case Op::SoftmaxCrossEntropy: {
      const Index n = node.saved_a.dim(0);
      TensorXd gl = node.saved_a;  // probabilities
      for (Index b = 0; b < n; ++b) {
        gl.at({b, static_cast<Index>(node.labels[static_cast<std::size_t>(b)])}) -= 1.0;
      }
      gl.vec() *= g[0] / static_cast<double>(n);
      accumulate(node.in[0], gl);
      break;
    }

    case Op::Add:
      accumulate(node.in[0], g);
      accumulate(node.in[1], g);
      break;

    case Op::Scale: {
      TensorXd gx = g;
      gx.vec() *= node.alpha;
      accumulate(node.in[0], gx);
      break;
    }

    case Op::FrobeniusSq: {
      TensorXd gx = value(node.in[0]);
      gx.vec() *= 2.0 * g[0];
      accumulate(node.in[0], gx);
      break;
    }

    case Op::Gram: {
      const TensorXd& fv = value(node.in[0]);
      TensorXd gf(fv.shape());
      as_matrix(gf).noalias() =
          as_matrix(fv) * (as_matrix(g) + as_matrix(g).transpose());
      accumulate(node.in[0], gf);
      break;
    }

    case Op::AddIdentity:
      accumulate(node.in[0], g);
      break;

    case Op::GroupSlice: {
      const TensorXd& tv = value(node.in[0]);
      TensorXd gt(tv.shape());
      const Index tail = tv.dim(4) * tv.dim(5);
      double* dst = gt.data() + node.slice_block * tv.dim(5) + node.slice_unit;
      const double* src = g.data();
      for (Index e = 0; e < g.size(); ++e) dst[e * tail] = src[e];
      accumulate(node.in[0], gt);
      break;
    }

    case Op::Subsample2: {
      const TensorXd& xv = value(node.in[0]);
      const Index n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
      const Index oh = g.dim(2), ow = g.dim(3);
      TensorXd gx(xv.shape());
      for (Index b = 0; b < n; ++b) {
        for (Index ch = 0; ch < c; ++ch) {
          double* plane = gx.data() + (b * c + ch) * h * w;
          const double* src = g.data() + (b * c + ch) * oh * ow;
          for (Index i = 0; i < oh; ++i) {
            for (Index j = 0; j < ow; ++j) plane[(2 * i) * w + (2 * j)] = src[i * ow + j];
          }
        }
      }
      accumulate(node.in[0], gx);
      break;
    }
  }
}

void SgdOptimizer::step(TensorXd& param, const TensorXd& grad) {
  if (!param.same_shape(grad)) throw ShapeError("sgd: parameter/gradient shape mismatch");
  auto [it, inserted] = velocity_.try_emplace(&param, VectorX<double>());
  if (inserted) it->second = VectorX<double>::Zero(param.size());
  VectorX<double>& v = it->second;
  v = momentum_ * v + grad.vec() + weight_decay_ * param.vec();
  param.vec() -= lr_ * v;
}

}  // namespace tucknet::ad
