#pragma once

// Grouped 6th-order weight parametrization: all 3x3 convolution kernels of a
// macro-module live in one tensor theta with modes
//   (out channels, in channels, kernel h, kernel w, block in unit, unit),
// generated as a shared core contracted with six per-task factor matrices.

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tucknet/tensor.hpp"

namespace tucknet {

struct GroupLayout {
  std::array<Index, 6> dims{};   // D0..D5
  std::array<Index, 6> ranks{};  // R0..R5, Rk <= Dk

  static GroupLayout full_rank(std::array<Index, 6> dims) { return {dims, dims}; }

  Index num_layers() const { return dims[4] * dims[5]; }  // L = D4 * D5

  Index weight_elements() const {
    Index n = 1;
    for (Index d : dims) n *= d;
    return n;
  }

  Index core_elements() const {
    Index n = 1;
    for (Index r : ranks) n *= r;
    return n;
  }

  // Exact per-task parameter count of one factor set: sum_k Dk * Rk.
  Index factor_parameters() const {
    Index n = 0;
    for (std::size_t k = 0; k < 6; ++k) n += dims[k] * ranks[k];
    return n;
  }

  std::vector<Index> dims_vec() const { return {dims.begin(), dims.end()}; }
  std::vector<Index> ranks_vec() const { return {ranks.begin(), ranks.end()}; }
  std::vector<Index> kernel_shape() const { return {dims[0], dims[1], dims[2], dims[3]}; }

  void validate() const;
  bool operator==(const GroupLayout&) const = default;
};

/// Task-agnostic core tensor of one macro-module. Freezing is one-way and
/// blocks every mutable access afterwards.
class SharedCore {
 public:
  SharedCore(GroupLayout layout, TensorXd core);

  const GroupLayout& layout() const { return layout_; }
  const TensorXd& core() const { return core_; }
  TensorXd& mutable_core();

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  GroupLayout layout_;
  TensorXd core_;
  bool frozen_ = false;
};

/// One task's six factor matrices for one macro-module; factor k maps the
/// core's mode-k rank R_k up to the weight extent D_k.
struct TaskFactorSet {
  std::string task_id;
  std::array<TensorXd, 6> factors;

  Index parameter_count() const;
  void validate_against(const GroupLayout& layout) const;
};

/// The materialized view: L = D4*D5 convolution kernels of shape
/// (D0, D1, D2, D3), ordered by (unit index, block index).
struct ParamGroup {
  GroupLayout layout;
  std::vector<TensorXd> weights;

  const TensorXd& kernel(Index unit, Index block) const {
    return weights[static_cast<std::size_t>(unit * layout.dims[4] + block)];
  }
};

/// Stacks a group's kernels into the order-6 tensor:
/// theta[., ., ., ., j, i] is the kernel of block j in residual unit i.
TensorXd collect(const ParamGroup& group);

/// Inverse of collect.
ParamGroup scatter(const TensorXd& theta, const GroupLayout& layout);

/// Weights generated from the shared core and one task's factors (Tucker
/// reconstruction followed by scatter).
ParamGroup materialize(const SharedCore& core, const TaskFactorSet& factors);

struct TuckerInitOptions {
  int hooi_iterations = 0;  // 0 = plain HOSVD
};

/// Decomposes pretrained weights into a shared core plus source-task factors
/// at the layout's ranks. At full rank the materialized weights reproduce the
/// input to within numerical precision.
std::pair<SharedCore, TaskFactorSet> init_source(const ParamGroup& pretrained,
                                                 const GroupLayout& layout,
                                                 const std::string& task_id,
                                                 const TuckerInitOptions& options = {});

enum class FactorInit {
  WarmStart,          // deep copy of the source factors
  RandomOrthonormal,  // seeded Gaussian, orthonormalized per factor
};

/// Fresh factors for a new task. Warm start copies the source mapping so the
/// task's step-0 weights equal the source weights.
TaskFactorSet init_task_factors(const TaskFactorSet& source, const std::string& task_id,
                                FactorInit init = FactorInit::WarmStart,
                                std::uint64_t seed = 0);

/// N(0, 0.002) kernel initialization (0.002 is the variance); the layout's
/// L kernels are drawn independently.
ParamGroup random_param_group(const GroupLayout& layout, CounterRng& rng);

inline constexpr double kInitVariance = 0.002;

}  // namespace tucknet
