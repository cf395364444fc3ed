#include "tucknet/network.hpp"

#include <cmath>
#include <unordered_set>

namespace tucknet {

GroupLayout ArchConfig::group_layout(int module) const {
  if (module < 0 || module >= macro_modules) {
    throw ValueError("group_layout: macro-module index out of range");
  }
  const Index c = channels[static_cast<std::size_t>(module)];
  return GroupLayout::full_rank(
      {c, c, kernel_h, kernel_w, blocks_per_unit, units_per_module});
}

void ArchConfig::validate() const {
  if (macro_modules < 1 || units_per_module < 1 || blocks_per_unit < 1) {
    throw ValueError("architecture: module/unit/block counts must be positive");
  }
  if (static_cast<int>(channels.size()) != macro_modules) {
    throw ValueError("architecture: need one channel count per macro-module");
  }
  for (std::size_t b = 0; b < channels.size(); ++b) {
    if (channels[b] < 1) throw ValueError("architecture: channel counts must be positive");
    if (b > 0 && channels[b] < channels[b - 1]) {
      throw ValueError("architecture: channel progression must be non-decreasing");
    }
  }
  if (kernel_h < 1 || kernel_w < 1 || input_channels < 1 || input_resolution < 1 ||
      num_classes < 1) {
    throw ValueError("architecture: kernel, input and class extents must be positive");
  }
}

Index TaskState::parameter_count() const {
  Index n = 0;
  for (const auto& f : factors) n += f.parameter_count();
  n += stem.size();
  for (const auto& p : projections) n += p.size();
  for (const auto& layer : bn) n += layer.parameters();
  n += head_weight.size() + head_bias.size();
  return n;
}

namespace {

TensorXd scratch_head_weight(Index classes, Index fan_in, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return random_uniform_tensor({classes, fan_in}, rng, -bound, bound);
}

TensorXd scratch_head_bias(Index classes, Index fan_in, CounterRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return random_uniform_tensor({classes}, rng, -bound, bound);
}

std::vector<std::pair<int, int>> projection_boundaries(const ArchConfig& cfg) {
  std::vector<std::pair<int, int>> out;  // (module index, in -> out channels)
  for (int b = 1; b < cfg.macro_modules; ++b) {
    if (cfg.channels[static_cast<std::size_t>(b)] !=
        cfg.channels[static_cast<std::size_t>(b - 1)]) {
      out.emplace_back(b, 0);
    }
  }
  return out;
}

}  // namespace

Model Model::build(const ArchConfig& config, const std::string& source_task, std::uint64_t seed,
                   const TuckerInitOptions& tucker) {
  config.validate();
  Model model;
  model.config_ = config;
  model.source_task_ = source_task;

  TaskState state;
  state.id = source_task;
  state.num_classes = config.num_classes;

  CounterRng rng(seed);
  for (int b = 0; b < config.macro_modules; ++b) {
    const GroupLayout layout = config.group_layout(b);
    const ParamGroup pretrained = random_param_group(layout, rng);
    auto [core, factors] = init_source(pretrained, layout, source_task, tucker);
    model.cores_.push_back(std::move(core));
    state.factors.push_back(std::move(factors));
  }

  const double stddev = std::sqrt(kInitVariance);
  state.stem = random_normal_tensor(
      {config.channels[0], config.input_channels, config.kernel_h, config.kernel_w}, rng, 0.0,
      stddev);
  for (const auto& [module, unused] : projection_boundaries(config)) {
    state.projections.push_back(random_normal_tensor(
        {config.channels[static_cast<std::size_t>(module)],
         config.channels[static_cast<std::size_t>(module - 1)], 1, 1},
        rng, 0.0, stddev));
  }

  state.bn.emplace_back(config.channels[0]);  // stem
  for (int b = 0; b < config.macro_modules; ++b) {
    for (int l = 0; l < config.units_per_module * config.blocks_per_unit; ++l) {
      state.bn.emplace_back(config.channels[static_cast<std::size_t>(b)]);
    }
  }

  const Index fan_in = config.channels.back();
  state.head_weight = scratch_head_weight(config.num_classes, fan_in, rng);
  state.head_bias = scratch_head_bias(config.num_classes, fan_in, rng);

  model.tasks_.emplace(source_task, std::move(state));
  return model;
}

Model Model::empty(const ArchConfig& config, const std::string& source_task) {
  config.validate();
  Model model;
  model.config_ = config;
  model.source_task_ = source_task;
  for (int b = 0; b < config.macro_modules; ++b) {
    const GroupLayout layout = config.group_layout(b);
    model.cores_.emplace_back(layout, TensorXd(layout.ranks_vec()));
  }
  return model;
}

TaskState& Model::task(const std::string& id) {
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) throw ValueError("unknown task '" + id + "'");
  return it->second;
}

const TaskState& Model::task(const std::string& id) const {
  const auto it = tasks_.find(id);
  if (it == tasks_.end()) throw ValueError("unknown task '" + id + "'");
  return it->second;
}

std::vector<std::string> Model::task_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, unused] : tasks_) ids.push_back(id);
  return ids;
}

TaskState Model::make_task_state_like(const TaskState& source, const std::string& id,
                                      const TaskRegistration& reg) const {
  TaskState state;
  state.id = id;
  state.num_classes = reg.num_classes;
  for (std::size_t g = 0; g < source.factors.size(); ++g) {
    state.factors.push_back(
        init_task_factors(source.factors[g], id, reg.factor_init, reg.seed + g));
  }
  state.stem = source.stem;
  state.projections = source.projections;
  state.bn = source.bn;
  if (reg.head_init == HeadInit::CopySource) {
    if (reg.num_classes != source.num_classes) {
      throw ValueError("register_task: copied head requires matching class counts");
    }
    state.head_weight = source.head_weight;
    state.head_bias = source.head_bias;
  } else {
    CounterRng rng(reg.seed, 0x6865616400000000ull);
    const Index fan_in = config_.channels.back();
    state.head_weight = scratch_head_weight(reg.num_classes, fan_in, rng);
    state.head_bias = scratch_head_bias(reg.num_classes, fan_in, rng);
  }
  return state;
}

void Model::register_task(const std::string& id, const TaskRegistration& reg) {
  if (has_task(id)) throw ValueError("task '" + id + "' already registered");
  if (reg.num_classes < 1) throw ValueError("register_task: class count must be positive");
  tasks_.emplace(id, make_task_state_like(task(source_task_), id, reg));
}

void Model::freeze_cores() {
  for (auto& core : cores_) core.freeze();
}

bool Model::cores_frozen() const {
  for (const auto& core : cores_) {
    if (!core.frozen()) return false;
  }
  return !cores_.empty();
}

Index Model::total_parameter_count(const std::string& task_id) const {
  Index n = 0;
  for (const auto& core : cores_) n += core.core().size();
  return n + task(task_id).parameter_count();
}

Index ParamSelection::parameter_count() const {
  Index n = 0;
  for (const TensorXd* p : params) n += p->size();
  return n;
}

ParamSelection trainable_params(Model& model, const std::string& task_id, ParamMode mode) {
  TaskState& state = model.task(task_id);
  ParamSelection sel;
  auto push = [&sel](const std::string& name, TensorXd& t) {
    sel.names.push_back(name);
    sel.params.push_back(&t);
  };

  if (mode == ParamMode::Source) {
    for (int b = 0; b < model.num_groups(); ++b) {
      push("core/" + std::to_string(b), model.core(b).mutable_core());
    }
    push("stem", state.stem);
  }
  if (mode == ParamMode::Source || mode == ParamMode::Adapt) {
    for (std::size_t g = 0; g < state.factors.size(); ++g) {
      for (std::size_t k = 0; k < 6; ++k) {
        push("factor/" + std::to_string(g) + "/" + std::to_string(k),
             state.factors[g].factors[k]);
      }
    }
    for (std::size_t p = 0; p < state.projections.size(); ++p) {
      push("projection/" + std::to_string(p), state.projections[p]);
    }
    for (std::size_t l = 0; l < state.bn.size(); ++l) {
      push("bn/" + std::to_string(l) + "/gamma", state.bn[l].gamma);
      push("bn/" + std::to_string(l) + "/beta", state.bn[l].beta);
    }
  }
  push("head/weight", state.head_weight);
  push("head/bias", state.head_bias);
  return sel;
}

ParameterBudget parameter_budget(const ArchConfig& config, int task_classes) {
  config.validate();
  if (task_classes < 1) throw ValueError("parameter_budget: class count must be positive");
  ParameterBudget budget;
  for (int b = 0; b < config.macro_modules; ++b) {
    const GroupLayout layout = config.group_layout(b);
    budget.cores += layout.core_elements();
    budget.factors += layout.factor_parameters();
    budget.batch_norm += 2 * layout.dims[0] * layout.num_layers();
  }
  budget.stem = static_cast<Index>(config.channels[0]) * config.input_channels *
                config.kernel_h * config.kernel_w;
  budget.batch_norm += 2 * config.channels[0];  // stem batch norm
  for (int b = 1; b < config.macro_modules; ++b) {
    if (config.channels[static_cast<std::size_t>(b)] !=
        config.channels[static_cast<std::size_t>(b - 1)]) {
      budget.projections += static_cast<Index>(config.channels[static_cast<std::size_t>(b)]) *
                            config.channels[static_cast<std::size_t>(b - 1)];
    }
  }
  budget.head = static_cast<Index>(task_classes) * config.channels.back() + task_classes;
  return budget;
}

const TensorXd* ForwardResult::grad_for(const ad::Tape& tape, const TensorXd* param) const {
  for (const auto& [ptr, id] : leaves) {
    if (ptr == param) return tape.has_grad(id) ? &tape.grad(id) : nullptr;
  }
  return nullptr;
}

ForwardResult forward_graph(Model& model, const std::string& task_id, const TensorXd& images,
                            const std::vector<int>* labels, RunMode mode, double lambda_orth,
                            const ParamSelection* trainable, ad::Tape& tape) {
  const ArchConfig& cfg = model.config();
  TaskState& state = model.task(task_id);
  if (images.order() != 4 || images.dim(1) != cfg.input_channels) {
    throw ShapeError("forward: images must be (N, " + std::to_string(cfg.input_channels) +
                     ", H, W), got " + images.shape_string());
  }

  std::unordered_set<const TensorXd*> selected;
  if (mode == RunMode::Train && trainable != nullptr) {
    selected.insert(trainable->params.begin(), trainable->params.end());
  }

  ForwardResult result;
  auto param_leaf = [&](TensorXd& t) {
    const ad::NodeId id = tape.leaf(t, selected.count(&t) > 0);
    result.leaves.emplace_back(&t, id);
    return id;
  };

  const bool training = mode == RunMode::Train;
  const Index pad_h = (cfg.kernel_h - 1) / 2;

  // Materialize each macro-module's kernels from its core and factors; also
  // keep the factor leaves for the orthogonality penalty.
  std::vector<ad::NodeId> thetas;
  std::vector<ad::NodeId> factor_leaves;
  for (int b = 0; b < model.num_groups(); ++b) {
    ad::NodeId theta = model.core(b).frozen()
                           ? tape.leaf(model.core(b).core(), false)
                           : param_leaf(model.core(b).mutable_core());
    for (Index k = 0; k < 6; ++k) {
      const ad::NodeId f = param_leaf(state.factors[static_cast<std::size_t>(b)].factors[k]);
      factor_leaves.push_back(f);
      theta = tape.mode_product(theta, f, k);
    }
    thetas.push_back(theta);
  }

  // Stem: 3x3 stride-1 convolution, batch norm, relu.
  ad::NodeId h = tape.conv2d(tape.leaf(images, false), param_leaf(state.stem), 1, pad_h);
  std::size_t bn_index = 0;
  auto apply_bn = [&](ad::NodeId in) {
    BatchNormLayer& layer = state.bn[bn_index++];
    return tape.batch_norm(in, param_leaf(layer.gamma), param_leaf(layer.beta), layer.stats,
                           training);
  };
  h = tape.relu(apply_bn(h));

  std::size_t projection_index = 0;
  for (int b = 0; b < cfg.macro_modules; ++b) {
    if (b > 0 && cfg.channels[static_cast<std::size_t>(b)] !=
                     cfg.channels[static_cast<std::size_t>(b - 1)]) {
      h = tape.conv2d(h, param_leaf(state.projections[projection_index++]), 1, 0);
    }
    for (int u = 0; u < cfg.units_per_module; ++u) {
      const ad::NodeId shortcut = (u == 0) ? tape.subsample2(h) : h;
      ad::NodeId t = h;
      for (int j = 0; j < cfg.blocks_per_unit; ++j) {
        const ad::NodeId kernel = tape.group_slice(thetas[static_cast<std::size_t>(b)], j, u);
        const Index stride = (u == 0 && j == 0) ? 2 : 1;
        t = tape.conv2d(t, kernel, stride, pad_h);
        t = apply_bn(t);
        if (j + 1 < cfg.blocks_per_unit) t = tape.relu(t);
      }
      h = tape.relu(tape.add(t, shortcut));
    }
  }

  const ad::NodeId pooled = tape.global_avg_pool(h);
  result.logits = tape.linear(pooled, param_leaf(state.head_weight), param_leaf(state.head_bias));

  if (labels != nullptr) {
    result.ce_loss = tape.softmax_cross_entropy(result.logits, *labels);
    ad::NodeId orth = ad::kNoNode;
    for (const ad::NodeId f : factor_leaves) {
      const ad::NodeId term = tape.frobenius_sq(tape.add_identity(tape.gram(f), -1.0));
      orth = orth == ad::kNoNode ? term : tape.add(orth, term);
    }
    result.orth_loss = orth;
    result.total_loss =
        lambda_orth != 0.0 ? tape.add(result.ce_loss, tape.scale(orth, lambda_orth))
                           : result.ce_loss;
  }
  return result;
}

TensorXd forward_logits(Model& model, const std::string& task_id, const TensorXd& images) {
  ad::Tape tape;
  const ForwardResult r =
      forward_graph(model, task_id, images, nullptr, RunMode::Eval, 0.0, nullptr, tape);
  return tape.value(r.logits);
}

}  // namespace tucknet
