#pragma once

// Minimal reverse-mode differentiation over a fixed operator set: enough to
// train through the Tucker materialization chain and the residual network
// forward pass, nothing more. Nodes are appended to a tape in evaluation
// order, so the reverse sweep is a single backwards pass over the node list.

#include <array>
#include <cstdint>
#include <memory>
#include <unordered_map>
#include <vector>

#include "tucknet/tensor.hpp"

namespace tucknet::ad {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class Op : std::uint8_t {
  Leaf,
  ModeProduct,
  Conv2d,
  BatchNorm,
  Relu,
  GlobalAvgPool,
  Linear,
  SoftmaxCrossEntropy,
  Add,
  Scale,
  FrobeniusSq,
  Gram,
  AddIdentity,
  GroupSlice,
  Subsample2,
};

/// Running statistics of one batch-norm layer. Owned by the model; training
/// forwards update them in place with the configured momentum.
struct BatchNormStats {
  TensorXd mean;
  TensorXd var;
};

struct Node {
  Op op = Op::Leaf;
  std::array<NodeId, 3> in{kNoNode, kNoNode, kNoNode};
  TensorXd value;
  TensorXd grad;
  bool requires_grad = false;
  bool has_grad = false;

  // per-op attributes
  Index mode = 0;       // ModeProduct
  Index stride = 1;     // Conv2d
  Index pad = 0;        // Conv2d
  double alpha = 1.0;   // Scale, AddIdentity
  Index slice_block = 0, slice_unit = 0;  // GroupSlice
  bool training = false;                   // BatchNorm
  double eps = 1e-5, momentum = 0.1;       // BatchNorm

  // saved forward state
  TensorXd saved_a;  // Conv2d: im2col matrix; BatchNorm: x_hat; SoftmaxCE: probs;
                     // ModeProduct: unfolded input
  TensorXd saved_b;  // BatchNorm: 1/sqrt(var+eps) per channel
  std::vector<int> labels;  // SoftmaxCE
};

class Tape {
 public:
  /// New constant or parameter leaf. The value is copied onto the tape.
  NodeId leaf(TensorXd value, bool requires_grad);

  NodeId mode_product(NodeId x, NodeId m, Index mode);
  NodeId conv2d(NodeId x, NodeId kernel, Index stride, Index pad);
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormStats& stats, bool training,
                    double eps = 1e-5, double momentum = 0.1);
  NodeId relu(NodeId x);
  NodeId global_avg_pool(NodeId x);                    // NCHW -> (N, C)
  NodeId linear(NodeId x, NodeId weight, NodeId bias); // (N,F)x(C,F)+(C) -> (N,C)
  NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels);  // -> scalar
  NodeId add(NodeId a, NodeId b);
  NodeId scale(NodeId x, double alpha);
  NodeId frobenius_sq(NodeId x);                       // -> scalar
  NodeId gram(NodeId f);                               // F^T F
  NodeId add_identity(NodeId x, double alpha);         // X + alpha*I
  NodeId group_slice(NodeId theta, Index block, Index unit);  // order-6 -> order-4
  NodeId subsample2(NodeId x);                         // x[:, :, ::2, ::2]

  /// Reverse sweep from a scalar loss; fills grad on every node reachable
  /// from the loss whose requires_grad flag is set.
  void backward(NodeId loss);

  const TensorXd& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const TensorXd& grad(NodeId id) const;
  bool has_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].has_grad; }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  NodeId push(Node node);
  Node& at(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& at(NodeId id) const { return nodes_[static_cast<std::size_t>(id)]; }
  void accumulate(NodeId id, const TensorXd& delta);
  void backward_into(Node& node);

  std::vector<Node> nodes_;
};

/// SGD with momentum and coupled weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Velocity buffers are created lazily per parameter, so no state exists for
/// tensors that are never stepped (e.g. frozen cores).
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

  void step(TensorXd& param, const TensorXd& grad);

  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  std::size_t state_count() const { return velocity_.size(); }
  bool has_state_for(const TensorXd* param) const { return velocity_.count(param) > 0; }

 private:
  double lr_, momentum_, weight_decay_;
  std::unordered_map<const TensorXd*, VectorX<double>> velocity_;
};

}  // namespace tucknet::ad
