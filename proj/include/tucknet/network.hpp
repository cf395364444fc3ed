#pragma once

// Residual backbone whose grouped 3x3 convolutions are generated on the fly
// from per-macro-module shared cores and per-task factors. Channel widening
// happens through 1x1 projection convolutions placed between macro-modules;
// each macro-module opens with a stride-2 convolution, and stride-2 units use
// the stride-matched input as their shortcut.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tucknet/autodiff.hpp"
#include "tucknet/tucker.hpp"

namespace tucknet {

struct ArchConfig {
  int macro_modules = 3;
  int units_per_module = 4;  // D5
  int blocks_per_unit = 2;   // D4
  std::vector<int> channels = {64, 128, 256};
  int kernel_h = 3, kernel_w = 3;
  int input_channels = 3;
  int input_resolution = 72;
  int num_classes = 100;  // classes of the source task

  static ArchConfig standard() { return {}; }

  static ArchConfig desk() {
    ArchConfig cfg;
    cfg.channels = {8, 16, 32};
    cfg.input_resolution = 32;
    cfg.num_classes = 3;
    return cfg;
  }

  GroupLayout group_layout(int module) const;
  int conv_layers() const { return macro_modules * units_per_module * blocks_per_unit; }
  void validate() const;
};

struct BatchNormLayer {
  TensorXd gamma;  // (C), init 1
  TensorXd beta;   // (C), init 0
  ad::BatchNormStats stats;  // running mean 0, var 1

  explicit BatchNormLayer(Index channels = 1)
      : gamma(TensorXd::constant({channels}, 1.0)),
        beta(TensorXd({channels})),
        stats{TensorXd({channels}), TensorXd::constant({channels}, 1.0)} {}

  Index parameters() const { return gamma.size() + beta.size(); }
};

/// Everything a single task owns: factors for every macro-module plus the
/// plain (non-tensorized) parameters. Evaluating one task never touches
/// another task's state.
struct TaskState {
  std::string id;
  int num_classes = 0;
  std::vector<TaskFactorSet> factors;   // one per macro-module
  TensorXd stem;                        // (C0, in, kh, kw); trained on the source only
  std::vector<TensorXd> projections;    // 1x1 kernels at widening boundaries
  std::vector<BatchNormLayer> bn;       // [0] stem, then one per grouped conv layer
  TensorXd head_weight;                 // (classes, C_last)
  TensorXd head_bias;                   // (classes)

  Index parameter_count() const;
};

enum class ParamMode { Source, Adapt, HeadOnly };
enum class RunMode { Train, Eval };
enum class HeadInit { Scratch, CopySource };

struct TaskRegistration {
  int num_classes = 0;
  FactorInit factor_init = FactorInit::WarmStart;
  HeadInit head_init = HeadInit::Scratch;
  std::uint64_t seed = 0;
};

class Model {
 public:
  /// Builds the source model: kernels drawn from N(0, 0.002), grouped and
  /// decomposed at full rank so training starts from the decomposition of the
  /// random initialization.
  static Model build(const ArchConfig& config, const std::string& source_task,
                     std::uint64_t seed, const TuckerInitOptions& tucker = {});

  /// Structure without initialization; used by checkpoint loading.
  static Model empty(const ArchConfig& config, const std::string& source_task);

  const ArchConfig& config() const { return config_; }
  const std::string& source_task_id() const { return source_task_; }

  int num_groups() const { return config_.macro_modules; }
  SharedCore& core(int module) { return cores_[static_cast<std::size_t>(module)]; }
  const SharedCore& core(int module) const { return cores_[static_cast<std::size_t>(module)]; }

  bool has_task(const std::string& id) const { return tasks_.count(id) > 0; }
  TaskState& task(const std::string& id);
  const TaskState& task(const std::string& id) const;
  std::vector<std::string> task_ids() const;

  /// New task initialized from the source task's state. The head is fresh
  /// (uniform +-1/sqrt(fan_in)) unless CopySource is requested, in which case
  /// the class counts must match.
  void register_task(const std::string& id, const TaskRegistration& reg);

  void freeze_cores();
  bool cores_frozen() const;

  /// All parameters of one task (cores counted once, shared).
  Index total_parameter_count(const std::string& task_id) const;

 private:
  Model() = default;
  TaskState make_task_state_like(const TaskState& source, const std::string& id,
                                 const TaskRegistration& reg) const;

  ArchConfig config_;
  std::string source_task_;
  std::vector<SharedCore> cores_;
  std::map<std::string, TaskState> tasks_;
};

/// Named references to the tensors trained in a given mode:
///   Source   - cores, source factors, stem, projections, batch norm, head.
///   Adapt    - the task's factors, batch norm, projections, head (no cores,
///              no stem).
///   HeadOnly - classifier head only (frozen-feature baseline).
struct ParamSelection {
  std::vector<std::string> names;
  std::vector<TensorXd*> params;

  Index parameter_count() const;
  std::size_t size() const { return params.size(); }
};

ParamSelection trainable_params(Model& model, const std::string& task_id, ParamMode mode);

/// Closed-form parameter accounting for one task of a given architecture;
/// pure arithmetic, no model required. Cross-checked against the counts of an
/// instantiated model in the tests.
struct ParameterBudget {
  Index cores = 0;
  Index factors = 0;
  Index stem = 0;
  Index projections = 0;
  Index batch_norm = 0;
  Index head = 0;

  Index total() const { return cores + factors + stem + projections + batch_norm + head; }
  Index adapt_selected() const { return factors + projections + batch_norm + head; }
  double adapt_fraction() const {
    return static_cast<double>(adapt_selected()) / static_cast<double>(total());
  }
  // the published ~3.5% covers factors + batch norm + projections, head aside
  double adapt_fraction_excluding_head() const {
    return static_cast<double>(factors + projections + batch_norm) /
           static_cast<double>(total());
  }
};

ParameterBudget parameter_budget(const ArchConfig& config, int task_classes);

struct ForwardResult {
  ad::NodeId logits = ad::kNoNode;
  ad::NodeId ce_loss = ad::kNoNode;      // mean cross entropy (when labels given)
  ad::NodeId orth_loss = ad::kNoNode;    // unscaled orthogonality penalty
  ad::NodeId total_loss = ad::kNoNode;   // ce + lambda * orth
  std::vector<std::pair<TensorXd*, ad::NodeId>> leaves;  // parameter bindings

  const TensorXd* grad_for(const ad::Tape& tape, const TensorXd* param) const;
};

/// Records the full forward graph on the tape: materialization of each
/// macro-module's weights, the convolutional trunk, and (with labels) the
/// objective including the factor-orthogonality penalty.
ForwardResult forward_graph(Model& model, const std::string& task_id, const TensorXd& images,
                            const std::vector<int>* labels, RunMode mode, double lambda_orth,
                            const ParamSelection* trainable, ad::Tape& tape);

/// Convenience evaluation-mode forward; returns logits only.
TensorXd forward_logits(Model& model, const std::string& task_id, const TensorXd& images);

}  // namespace tucknet
