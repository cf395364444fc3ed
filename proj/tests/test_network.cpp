#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "tucknet/metrics.hpp"
#include "tucknet/network.hpp"

using namespace tucknet;

namespace {

ArchConfig tiny_config() {
  ArchConfig cfg;
  cfg.channels = {4, 6, 8};
  cfg.units_per_module = 2;
  cfg.blocks_per_unit = 2;
  cfg.input_resolution = 16;
  cfg.num_classes = 3;
  return cfg;
}

TensorXd random_batch(const ArchConfig& cfg, Index n, std::uint64_t seed) {
  CounterRng rng(seed);
  return random_uniform_tensor({n, cfg.input_channels, cfg.input_resolution,
                                cfg.input_resolution},
                               rng, 0.0, 1.0);
}

}  // namespace

TEST_CASE("layouts: grouped weights per macro-module and L") {
  const ArchConfig cfg = ArchConfig::standard();
  const GroupLayout l2 = cfg.group_layout(2);
  CHECK(l2.weight_elements() == 256 * 256 * 9 * 8);
  CHECK(l2.weight_elements() == 4718592);
  CHECK(l2.num_layers() == 8);
  CHECK(cfg.group_layout(0).num_layers() == 8);
  CHECK_THROWS_AS(cfg.group_layout(3), ValueError);
}

TEST_CASE("config validation") {
  ArchConfig bad = ArchConfig::desk();
  bad.channels = {8, 4, 16};  // decreasing
  CHECK_THROWS_AS(bad.validate(), ValueError);
  bad = ArchConfig::desk();
  bad.channels = {8, 16};
  CHECK_THROWS_AS(bad.validate(), ValueError);
}

TEST_CASE("parameter budget matches a built model exactly") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 1);
  const ParameterBudget budget = parameter_budget(cfg, cfg.num_classes);
  CHECK(budget.total() == model.total_parameter_count("source"));

  ParamSelection source_sel = trainable_params(model, "source", ParamMode::Source);
  CHECK(source_sel.parameter_count() == budget.total());

  ParamSelection adapt_sel = trainable_params(model, "source", ParamMode::Adapt);
  CHECK(adapt_sel.parameter_count() == budget.adapt_selected());

  ParamSelection head_sel = trainable_params(model, "source", ParamMode::HeadOnly);
  CHECK(head_sel.parameter_count() == budget.head);

  // closed form for the desk preset
  const ArchConfig desk = ArchConfig::desk();
  const ParameterBudget desk_budget = parameter_budget(desk, desk.num_classes);
  Index cores = 0, factors = 0, bn = 2 * 8;
  for (Index c : {8, 16, 32}) {
    cores += c * c * 9 * 8;
    factors += 2 * c * c + 9 + 9 + 4 + 16;
    bn += 2 * c * 8;
  }
  const Index stem = 8 * 3 * 9, proj = 16 * 8 + 32 * 16, head = 3 * 32 + 3;
  CHECK(desk_budget.total() == cores + factors + stem + proj + bn + head);
}

TEST_CASE("adapt-mode fraction brackets the published ~3.5%") {
  const ParameterBudget budget = parameter_budget(ArchConfig::standard(), 100);
  CHECK(budget.adapt_fraction() >= 0.025);
  CHECK(budget.adapt_fraction() <= 0.045);
  CHECK(budget.adapt_fraction_excluding_head() >= 0.025);
  CHECK(budget.adapt_fraction_excluding_head() <= 0.045);

  // full-rank factor parameters across the three groups (sum of Dk*Rk)
  std::int64_t grouped = 0;
  for (const auto& layout : default_resnet26_layouts()) grouped += count_grouped(layout);
  CHECK(budget.factors == grouped);
}

TEST_CASE("forward: zero input with zeroed stats stays finite") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 2);
  TaskState& state = model.task("source");
  state.head_bias = TensorXd({cfg.num_classes});
  for (auto& layer : state.bn) {
    layer.stats.mean = TensorXd({layer.gamma.size()});
    layer.stats.var = TensorXd({layer.gamma.size()});  // variance 0: eps guards the division
  }
  const TensorXd zeros({2, cfg.input_channels, 16, 16});
  const TensorXd logits = forward_logits(model, "source", zeros);
  CHECK(logits.shape() == std::vector<Index>{2, cfg.num_classes});
  for (Index i = 0; i < logits.size(); ++i) CHECK(std::isfinite(logits[i]));
}

TEST_CASE("forward: eval mode is deterministic and respects the shape contract") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 3);
  const TensorXd batch = random_batch(cfg, 5, 30);
  const TensorXd a = forward_logits(model, "source", batch);
  const TensorXd b = forward_logits(model, "source", batch);
  CHECK(bitwise_equal(a, b));
  CHECK(a.shape() == std::vector<Index>{5, cfg.num_classes});

  CHECK_THROWS_AS(forward_logits(model, "nope", batch), ValueError);
  CHECK_THROWS_AS(forward_logits(model, "source", TensorXd({5, 2, 16, 16})), ShapeError);
}

TEST_CASE("warm-start adapted task with copied head matches source logits at step 0") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 4);
  TaskRegistration reg;
  reg.num_classes = cfg.num_classes;
  reg.head_init = HeadInit::CopySource;
  model.register_task("warm", reg);
  const TensorXd batch = random_batch(cfg, 4, 31);
  CHECK(bitwise_equal(forward_logits(model, "warm", batch),
                      forward_logits(model, "source", batch)));

  TaskRegistration fresh;
  fresh.num_classes = 5;
  fresh.seed = 9;
  model.register_task("fresh", fresh);
  CHECK(forward_logits(model, "fresh", batch).shape() == std::vector<Index>{4, 5});
  CHECK_THROWS_AS(model.register_task("fresh", fresh), ValueError);

  TaskRegistration bad;
  bad.num_classes = 7;
  bad.head_init = HeadInit::CopySource;
  CHECK_THROWS_AS(model.register_task("bad", bad), ValueError);
}

TEST_CASE("materialized weights of a task change iff its own factors change") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 5);
  TaskRegistration reg;
  reg.num_classes = 4;
  model.register_task("t", reg);

  auto weights_of = [&](const std::string& id) {
    return materialize(model.core(0), model.task(id).factors[0]);
  };
  const ParamGroup before_t = weights_of("t");
  const ParamGroup before_src = weights_of("source");

  model.task("t").factors[0].factors[0].vec() *= 1.5;
  const ParamGroup after_t = weights_of("t");
  const ParamGroup after_src = weights_of("source");
  CHECK_FALSE(bitwise_equal(after_t.weights[0], before_t.weights[0]));
  for (std::size_t l = 0; l < before_src.weights.size(); ++l) {
    CHECK(bitwise_equal(after_src.weights[l], before_src.weights[l]));
  }
}

TEST_CASE("forgetting freedom: adaptation of other tasks never moves source logits") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 6);
  model.freeze_cores();
  CHECK(model.cores_frozen());
  const TensorXd probe = random_batch(cfg, 6, 32);
  const TensorXd before = forward_logits(model, "source", probe);

  TaskRegistration reg;
  reg.num_classes = 3;
  model.register_task("other", reg);
  // crude "training": scribble over every adapt-mode parameter of the task
  ParamSelection sel = trainable_params(model, "other", ParamMode::Adapt);
  CounterRng rng(33);
  for (TensorXd* p : sel.params) {
    for (Index i = 0; i < p->size(); ++i) (*p)[i] += rng.normal(0.0, 0.1);
  }
  // train-mode forwards on the other task also update its batch-norm stats
  ad::Tape tape;
  std::vector<int> labels(4, 0);
  forward_graph(model, "other", random_batch(cfg, 4, 34), &labels, RunMode::Train, 0.0, &sel,
                tape);

  const TensorXd after = forward_logits(model, "source", probe);
  CHECK(bitwise_equal(after, before));

  // source-mode selection on frozen cores is a hard error
  CHECK_THROWS_AS(trainable_params(model, "source", ParamMode::Source), FrozenCoreError);
}

TEST_CASE("train-mode forward updates only the evaluated task's batch norm stats") {
  const ArchConfig cfg = tiny_config();
  Model model = Model::build(cfg, "source", 7);
  const TensorXd mean_before = model.task("source").bn[0].stats.mean;
  ad::Tape tape;
  std::vector<int> labels(3, 1);
  ParamSelection sel = trainable_params(model, "source", ParamMode::Source);
  forward_graph(model, "source", random_batch(cfg, 3, 35), &labels, RunMode::Train, 0.01, &sel,
                tape);
  CHECK_FALSE(bitwise_equal(model.task("source").bn[0].stats.mean, mean_before));

  // eval leaves stats untouched
  const TensorXd mean_mid = model.task("source").bn[0].stats.mean;
  forward_logits(model, "source", random_batch(cfg, 3, 36));
  CHECK(bitwise_equal(model.task("source").bn[0].stats.mean, mean_mid));
}
