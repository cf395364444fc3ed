#include "tucknet/tucker.hpp"

#include <Eigen/QR>
#include <cmath>
#include <sstream>

namespace tucknet {

void GroupLayout::validate() const {
  for (std::size_t k = 0; k < 6; ++k) {
    if (dims[k] <= 0) throw ValueError("GroupLayout: dims must be positive");
    if (ranks[k] < 1 || ranks[k] > dims[k]) {
      std::ostringstream msg;
      msg << "GroupLayout: rank " << ranks[k] << " invalid for mode " << k << " of size "
          << dims[k];
      throw ValueError(msg.str());
    }
  }
}

SharedCore::SharedCore(GroupLayout layout, TensorXd core)
    : layout_(layout), core_(std::move(core)) {
  layout_.validate();
  if (core_.shape() != layout_.ranks_vec()) {
    throw ShapeError("SharedCore: core shape " + core_.shape_string() +
                     " does not match layout ranks");
  }
}

TensorXd& SharedCore::mutable_core() {
  if (frozen_) throw FrozenCoreError("attempt to mutate a frozen shared core");
  return core_;
}

Index TaskFactorSet::parameter_count() const {
  Index n = 0;
  for (const auto& f : factors) n += f.size();
  return n;
}

void TaskFactorSet::validate_against(const GroupLayout& layout) const {
  for (std::size_t k = 0; k < 6; ++k) {
    const auto& f = factors[k];
    if (f.order() != 2 || f.dim(0) != layout.dims[k] || f.dim(1) != layout.ranks[k]) {
      std::ostringstream msg;
      msg << "factor " << k << " has shape " << f.shape_string() << ", expected ("
          << layout.dims[k] << "," << layout.ranks[k] << ")";
      throw ShapeError(msg.str());
    }
  }
}

TensorXd collect(const ParamGroup& group) {
  const GroupLayout& layout = group.layout;
  layout.validate();
  if (static_cast<Index>(group.weights.size()) != layout.num_layers()) {
    throw ShapeError("collect: group must hold D4*D5 kernels");
  }
  const std::vector<Index> kshape = layout.kernel_shape();
  for (const auto& w : group.weights) {
    if (w.shape() != kshape) {
      throw ShapeError("collect: kernel shape " + w.shape_string() +
                       " differs from the group layout");
    }
  }

  TensorXd theta(layout.dims_vec());
  const Index d4 = layout.dims[4], d5 = layout.dims[5];
  const Index kernel_size = layout.dims[0] * layout.dims[1] * layout.dims[2] * layout.dims[3];
  const Index tail = d4 * d5;  // modes 4,5 vary fastest in row-major order
  for (Index unit = 0; unit < d5; ++unit) {
    for (Index block = 0; block < d4; ++block) {
      const TensorXd& kernel = group.weights[static_cast<std::size_t>(unit * d4 + block)];
      double* dst = theta.data() + block * d5 + unit;
      const double* src = kernel.data();
      for (Index e = 0; e < kernel_size; ++e) dst[e * tail] = src[e];
    }
  }
  return theta;
}

ParamGroup scatter(const TensorXd& theta, const GroupLayout& layout) {
  layout.validate();
  if (theta.shape() != layout.dims_vec()) {
    throw ShapeError("scatter: tensor shape " + theta.shape_string() +
                     " does not match layout dims");
  }
  ParamGroup group{layout, {}};
  group.weights.reserve(static_cast<std::size_t>(layout.num_layers()));
  const Index d4 = layout.dims[4], d5 = layout.dims[5];
  const Index kernel_size = layout.dims[0] * layout.dims[1] * layout.dims[2] * layout.dims[3];
  const Index tail = d4 * d5;
  for (Index unit = 0; unit < d5; ++unit) {
    for (Index block = 0; block < d4; ++block) {
      TensorXd kernel(layout.kernel_shape());
      const double* src = theta.data() + block * d5 + unit;
      double* dst = kernel.data();
      for (Index e = 0; e < kernel_size; ++e) dst[e] = src[e * tail];
      group.weights.push_back(std::move(kernel));
    }
  }
  return group;
}

ParamGroup materialize(const SharedCore& core, const TaskFactorSet& factors) {
  factors.validate_against(core.layout());
  const std::vector<TensorXd> fs(factors.factors.begin(), factors.factors.end());
  return scatter(tucker_reconstruct(core.core(), fs), core.layout());
}

std::pair<SharedCore, TaskFactorSet> init_source(const ParamGroup& pretrained,
                                                 const GroupLayout& layout,
                                                 const std::string& task_id,
                                                 const TuckerInitOptions& options) {
  if (pretrained.layout.dims != layout.dims) {
    throw ShapeError("init_source: pretrained group dims do not match the layout");
  }
  const TensorXd theta = collect(pretrained);
  TuckerDecomposition<double> d = options.hooi_iterations > 0
                                      ? hooi(theta, layout.ranks_vec(), options.hooi_iterations)
                                      : hosvd(theta, layout.ranks_vec());
  TaskFactorSet factors;
  factors.task_id = task_id;
  for (std::size_t k = 0; k < 6; ++k) factors.factors[k] = std::move(d.factors[k]);
  return {SharedCore(layout, std::move(d.core)), std::move(factors)};
}

TaskFactorSet init_task_factors(const TaskFactorSet& source, const std::string& task_id,
                                FactorInit init, std::uint64_t seed) {
  TaskFactorSet out = source;
  out.task_id = task_id;
  if (init == FactorInit::RandomOrthonormal) {
    for (std::size_t k = 0; k < 6; ++k) {
      const Index rows = source.factors[k].dim(0);
      const Index cols = source.factors[k].dim(1);
      CounterRng rng(seed, k);
      const TensorXd g = random_normal_tensor({rows, cols}, rng);
      Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(as_matrix(g))};
      Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
      out.factors[k] = from_matrix(q);
    }
  }
  return out;
}

ParamGroup random_param_group(const GroupLayout& layout, CounterRng& rng) {
  layout.validate();
  ParamGroup group{layout, {}};
  const double stddev = std::sqrt(kInitVariance);
  for (Index l = 0; l < layout.num_layers(); ++l) {
    group.weights.push_back(random_normal_tensor(layout.kernel_shape(), rng, 0.0, stddev));
  }
  return group;
}

}  // namespace tucknet
