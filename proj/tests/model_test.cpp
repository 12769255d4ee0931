#include <random>

#include <gtest/gtest.h>

#include "mmp/gradcheck.hpp"
#include "mmp/model.hpp"

namespace mmp {
namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

ModelConfig tiny_config(std::size_t m = 3) {
  ModelConfig c;
  for (std::size_t i = 0; i < m; ++i) c.modalities.push_back({"m" + std::to_string(i), 3, 4, 5 + i});
  c.classes = 3;
  c.common_width = 4;
  c.aggregated_tokens = 2;
  c.heads = 2;
  c.projector_hidden = 5;
  c.encoder_hidden = 5;
  return c;
}

InputMap random_inputs(const ModelConfig& cfg, std::size_t batch, std::mt19937_64& rng) {
  InputMap in;
  for (std::size_t i = 0; i < cfg.modalities.size(); ++i) {
    in.emplace(i, random_tensor(rng, {batch, cfg.modalities[i].feature_length}));
  }
  return in;
}

constexpr SubstitutionMode kModes[] = {SubstitutionMode::kZeroFill, SubstitutionMode::kMmp,
                                       SubstitutionMode::kLinearProjection};

TEST(Model, EmbedShapesAndZeroInput) {
  MmpModel model(tiny_config(), 1);
  Tape t;
  Var e = model.embed(t, 1, Tensor::zeros({2, 6}));
  EXPECT_EQ(e.value().shape(), (Shape{2, 3, 4}));
  // Biases start at zero, so a zero input embeds to zero tokens.
  EXPECT_EQ(max_abs_diff(e.value(), Tensor::zeros({2, 3, 4})), 0.0);
  EXPECT_THROW(model.embed(t, 1, Tensor::zeros({2, 5})), DimensionError);
  EXPECT_THROW(model.embed(t, 1, Tensor::zeros({2, 3, 6})), DimensionError);
}

TEST(Model, ModesAgreeWhenNothingIsMasked) {
  MmpModel model(tiny_config(), 2);
  std::mt19937_64 rng(3);
  const auto in = random_inputs(model.config(), 4, rng);
  const MaskPattern none = MaskPattern::none(3);
  const Tensor ref = model.predict(in, none, SubstitutionMode::kZeroFill);
  EXPECT_EQ(ref.shape(), (Shape{4, 3}));
  for (auto mode : kModes) EXPECT_TRUE(bitwise_equal(model.predict(in, none, mode), ref)) << to_string(mode);
}

TEST(Model, ZeroFillIgnoresMaskedInputs) {
  MmpModel model(tiny_config(), 4);
  std::mt19937_64 rng(5);
  auto in = random_inputs(model.config(), 3, rng);
  const MaskPattern pattern(3, {0, 2});
  for (auto mode : kModes) {
    const Tensor a = model.predict(in, pattern, mode);
    auto altered = in;
    altered.at(0) = random_tensor(rng, {3, 5});
    altered.erase(2);
    EXPECT_TRUE(bitwise_equal(model.predict(altered, pattern, mode), a)) << to_string(mode);
  }
}

TEST(Model, ForwardIsDeterministicAndBatchIndependent) {
  MmpModel model(tiny_config(), 6);
  std::mt19937_64 rng(7);
  const auto in = random_inputs(model.config(), 3, rng);
  const MaskPattern pattern(3, {1});
  for (auto mode : kModes) {
    const Tensor full = model.predict(in, pattern, mode);
    EXPECT_TRUE(bitwise_equal(full, model.predict(in, pattern, mode)));
    InputMap single;
    for (const auto& [i, x] : in) single.emplace(i, Tensor({1, x.cols()}, std::vector<double>(x.data().begin() + x.cols(), x.data().begin() + 2 * x.cols())));
    const Tensor one = model.predict(single, pattern, mode);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(one(0, c), full(1, c), 1e-12) << to_string(mode);
  }
}

TEST(Model, SubstitutionDependsOnAvailableModalities) {
  // A small perturbation of an available modality changes the projected
  // tokens of the masked one in mmp and lp modes, but not under zero fill.
  MmpModel model(tiny_config(), 8);
  std::mt19937_64 rng(9);
  auto in = random_inputs(model.config(), 2, rng);
  const MaskPattern pattern(3, {2});
  auto bumped = in;
  bumped.at(0)[0] += 1e-3;
  for (auto mode : {SubstitutionMode::kMmp, SubstitutionMode::kLinearProjection}) {
    Tape t1, t2;
    const auto r1 = model.forward(t1, in, pattern, mode);
    const auto r2 = model.forward(t2, bumped, pattern, mode);
    EXPECT_GT(max_abs_diff(r1.projected.at(2).value(), r2.projected.at(2).value()), 1e-9) << to_string(mode);
    EXPECT_EQ(r1.real.count(2), 1u);
  }
  Tape t;
  const auto r = model.forward(t, in, pattern, SubstitutionMode::kZeroFill);
  EXPECT_TRUE(r.projected.empty());
  EXPECT_TRUE(r.real.empty());
  EXPECT_EQ(max_abs_diff(r.branch_tokens.at(2).value(), Tensor::zeros({2, 3, 4})), 0.0);
}

TEST(Model, LinearProjectionWithZeroWeightsMatchesZeroFill) {
  MmpModel model(tiny_config(), 10);
  model.zero_parameters("lp.");
  std::mt19937_64 rng(11);
  const auto in = random_inputs(model.config(), 3, rng);
  for (const auto& pattern : enumerate_scenarios(3)) {
    EXPECT_TRUE(bitwise_equal(model.predict(in, pattern, SubstitutionMode::kLinearProjection),
                              model.predict(in, pattern, SubstitutionMode::kZeroFill)));
  }
}

TEST(Model, TotalLossIsTaskPlusAlignment) {
  MmpModel model(tiny_config(), 12);
  std::mt19937_64 rng(13);
  const auto in = random_inputs(model.config(), 4, rng);
  const std::vector<int> labels{0, 1, 2, 1};
  const MaskPattern pattern(3, {0, 1});
  Tape t;
  const auto r = model.forward(t, in, pattern, SubstitutionMode::kMmp);
  const auto on = model.total_loss(t, r, labels, true);
  const auto off = model.total_loss(t, r, labels, false);
  EXPECT_GT(on.alignment_value(), 0.0);
  EXPECT_DOUBLE_EQ(on.total_value(), on.task_value() + on.alignment_value());
  EXPECT_EQ(off.alignment_value(), 0.0);
  EXPECT_DOUBLE_EQ(off.task_value(), on.task_value());
  Var a0 = alignment_loss(t, {{0, r.projected.at(0)}}, {{0, r.real.at(0)}});
  Var a1 = alignment_loss(t, {{1, r.projected.at(1)}}, {{1, r.real.at(1)}});
  EXPECT_NEAR(on.alignment_value(), 0.5 * (a0.value().item() + a1.value().item()), 1e-12);
}

TEST(Model, AlignmentTargetIsDetached) {
  MmpModel model(tiny_config(), 14);
  std::mt19937_64 rng(15);
  const auto in = random_inputs(model.config(), 2, rng);
  const MaskPattern pattern(3, {1});
  Tape t;
  const auto r = model.forward(t, in, pattern, SubstitutionMode::kMmp);
  const auto loss = model.total_loss(t, r, std::vector<int>{0, 2}, true);
  backward(loss.alignment, model.parameters());
  // embed.m1 only feeds the target, so alignment must not reach it.
  for (const auto& e : model.parameters()) {
    if (!e.name.starts_with("embed.m1")) continue;
    EXPECT_EQ(max_abs_diff(e.grad, Tensor::zeros(e.grad.shape())), 0.0) << e.name;
  }
  EXPECT_GT(max_abs_diff(model.parameters().grad("embed.m0.weight"), Tensor::zeros({5, 12})), 0.0);
}

TEST(Model, ContractErrors) {
  MmpModel model(tiny_config(), 16);
  std::mt19937_64 rng(17);
  auto in = random_inputs(model.config(), 2, rng);
  Tape t;
  EXPECT_THROW(model.forward(t, in, MaskPattern(2, {1}), SubstitutionMode::kMmp), ContractError);
  auto missing = in;
  missing.erase(0);
  EXPECT_THROW(model.forward(t, missing, MaskPattern(3, {1}), SubstitutionMode::kMmp), ContractError);
  auto ragged = in;
  ragged.at(2) = random_tensor(rng, {3, 7});
  EXPECT_THROW(model.forward(t, ragged, MaskPattern::none(3), SubstitutionMode::kZeroFill), DimensionError);
  EXPECT_THROW(parse_substitution_mode("dropout"), ValidationError);
  for (auto mode : kModes) EXPECT_EQ(parse_substitution_mode(to_string(mode)), mode);
  ModelConfig bad = tiny_config();
  bad.heads = 3;
  EXPECT_THROW(MmpModel(bad, 0), ValidationError);
}

TEST(Model, SingleModalityModel) {
  MmpModel model(tiny_config(1), 18);
  std::mt19937_64 rng(19);
  const auto in = random_inputs(model.config(), 2, rng);
  EXPECT_EQ(model.predict(in, MaskPattern::none(1), SubstitutionMode::kMmp).shape(), (Shape{2, 3}));
}

TEST(Model, ParametersAreIndependentOfOtherModules) {
  // Per-name streams: a parameter's initial draw depends only on the seed
  // and its name, not on which other parameters exist.
  ModelConfig a = tiny_config();
  ModelConfig b = tiny_config();
  b.projector_hidden = 9;
  MmpModel ma(a, 20), mb(b, 20);
  for (const auto& e : ma.parameters()) {
    if (e.name.starts_with("proj.")) continue;
    EXPECT_TRUE(bitwise_equal(e.value, mb.parameters().value(e.name))) << e.name;
  }
}

class EndToEndGradient : public ::testing::TestWithParam<SubstitutionMode> {};

TEST_P(EndToEndGradient, MatchesFiniteDifferences) {
  MmpModel model(tiny_config(), 21);
  std::mt19937_64 rng(22);
  // Non-zero biases and lp weights so every path is exercised.
  for (auto& e : model.parameters())
    for (auto& v : e.value.data()) v += 0.1 * std::normal_distribution<double>(0.0, 1.0)(rng);
  const auto in = random_inputs(model.config(), 2, rng);
  const MaskPattern pattern(3, {1});
  const std::map<std::size_t, Tensor> targets{{1, random_tensor(rng, {2, 3, 4})}};
  const std::vector<int> labels{2, 0};
  const SubstitutionMode mode = GetParam();
  LossFn loss = [&](Tape& t, ParameterStore&) {
    ForwardOptions opts;
    opts.fixed_targets = &targets;
    const auto r = model.forward(t, in, pattern, mode, opts);
    return model.total_loss(t, r, labels, mode != SubstitutionMode::kZeroFill).total;
  };
  const auto result = finite_diff_check_detailed(loss, model.parameters(), 1e-5);
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst_parameter << "[" << result.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Modes, EndToEndGradient, ::testing::ValuesIn(kModes),
                         [](const auto& info) { return std::string(to_string(info.param)); });

}  // namespace
}  // namespace mmp
