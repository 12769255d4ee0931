#include <cmath>
#include <limits>
#include <random>

#include <boost/math/distributions/binomial.hpp>
#include <gtest/gtest.h>

#include "mmp/harness.hpp"

namespace mmp {
namespace {

SynthConfig tiny_data(std::uint64_t seed = 1) {
  SynthConfig c;
  c.feature_lengths = {12, 12, 12};
  c.latent = 6;
  c.classes = 3;
  c.view_rank = 3;
  c.n_train = 96;
  c.n_val = 32;
  c.n_test = 48;
  c.seed = seed;
  return c;
}

ModelConfig tiny_model(const SynthConfig& d) {
  ModelConfig m;
  for (std::size_t i = 0; i < d.feature_lengths.size(); ++i) m.modalities.push_back({"m" + std::to_string(i), 3, 4, d.feature_lengths[i]});
  m.classes = d.classes;
  m.common_width = 4;
  m.aggregated_tokens = 2;
  m.heads = 2;
  m.projector_hidden = 6;
  m.encoder_hidden = 6;
  return m;
}

TrainConfig tiny_train(AblationTag tag, std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch = 16;
  t.tag = tag;
  t.seed = 5;
  return t;
}

TEST(AdamW, SingleStepMatchesHandComputation) {
  ParameterStore store;
  store.add("w", Tensor::matrix({{1.0, -2.0}}));
  store.add("frozen", Tensor::matrix({{3.0}}), false);
  store.entry("w").grad = Tensor::matrix({{0.5, 0.0}});
  store.entry("frozen").grad = Tensor::matrix({{1.0}});
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(store, cfg);
  opt.step(store);
  // m̂ = g, v̂ = g² after one bias-corrected step, so the Adam part is
  // lr·g/(|g|+eps); decay shrinks w by lr·wd·w first.
  const double w0 = 1.0 - 0.1 * 0.01 * 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 - 0.1 * 0.01 * -2.0;
  EXPECT_NEAR(store.value("w")[0], w0, 1e-15);
  EXPECT_NEAR(store.value("w")[1], w1, 1e-15);
  EXPECT_EQ(store.value("frozen")[0], 3.0);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, PolySchedule) {
  ParameterStore store;
  store.add("w", Tensor::matrix({{1.0}}));
  AdamWConfig cfg;
  cfg.lr = 1.0;
  cfg.schedule = LrSchedule::kPoly;
  cfg.poly_power = 2.0;
  cfg.total_steps = 4;
  AdamW opt(store, cfg);
  const double expected[] = {1.0, 0.5625, 0.25, 0.0625, 0.0};
  for (double e : expected) {
    EXPECT_NEAR(opt.current_lr(), e, 1e-15);
    opt.step(store);
  }
  AdamWConfig constant;
  EXPECT_EQ(AdamW(store, constant).current_lr(), 1e-3);
}

TEST(Train, ZeroEpochsLeavesParametersUntouched) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  const auto before = model.parameters().serialize();
  const auto h = train(model, ds, tiny_train(AblationTag::kCaAlign, 0));
  EXPECT_TRUE(h.epochs.empty());
  EXPECT_EQ(model.parameters().serialize(), before);
}

TEST(Train, DeterministicGivenSeed) {
  const Dataset ds = generate(tiny_data());
  for (auto tag : kAllTags) {
    MmpModel a(tiny_model(tiny_data()), 3), b(tiny_model(tiny_data()), 3);
    const auto ha = train(a, ds, tiny_train(tag));
    const auto hb = train(b, ds, tiny_train(tag));
    EXPECT_EQ(ha.to_csv(), hb.to_csv()) << to_string(tag);
    EXPECT_EQ(a.parameters().serialize(), b.parameters().serialize()) << to_string(tag);
    EXPECT_EQ(ha.epochs.size(), 2u);
  }
}

TEST(Train, HistoryTracksAlignmentOnlyInProjectingModes) {
  const Dataset ds = generate(tiny_data());
  MmpModel a(tiny_model(tiny_data()), 3), b(tiny_model(tiny_data()), 3);
  const auto hd = train(a, ds, tiny_train(AblationTag::kDropout));
  const auto hc = train(b, ds, tiny_train(AblationTag::kCaAlign));
  for (const auto& e : hd.epochs) EXPECT_EQ(e.alignment_loss, 0.0);
  for (const auto& e : hc.epochs) EXPECT_GT(e.alignment_loss, 0.0);
  for (const auto& e : hc.epochs) {
    EXPECT_GE(e.val_accuracy, 0.0);
    EXPECT_LE(e.val_accuracy, 1.0);
  }
}

TEST(Train, FrozenParametersStayFixed) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  const Tensor head = model.parameters().value("head.weight");
  auto cfg = tiny_train(AblationTag::kLp);
  cfg.freeze = {"head."};
  train(model, ds, cfg);
  EXPECT_TRUE(bitwise_equal(model.parameters().value("head.weight"), head));
  EXPECT_FALSE(bitwise_equal(model.parameters().value("embed.m0.weight"),
                             MmpModel(tiny_model(tiny_data()), 3).parameters().value("embed.m0.weight")));
}

TEST(Train, NonFiniteLossNamesTheIteration) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  model.parameters().value("head.weight").fill(std::numeric_limits<double>::quiet_NaN());
  try {
    train(model, ds, tiny_train(AblationTag::kDropout));
    FAIL() << "divergence not detected";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 0"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsBadConfigAndMismatchedModel) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  auto cfg = tiny_train(AblationTag::kDropout);
  cfg.p_none = 1.5;
  EXPECT_THROW(train(model, ds, cfg), ValidationError);
  cfg = tiny_train(AblationTag::kDropout);
  cfg.batch = 0;
  EXPECT_THROW(train(model, ds, cfg), ValidationError);
  SynthConfig other = tiny_data();
  other.feature_lengths = {12, 12, 10};
  EXPECT_THROW(train(model, generate(other), tiny_train(AblationTag::kDropout)), ContractError);
}

TEST(Train, CaAlignAlignmentLossHalves) {
  SynthConfig c = tiny_data();
  c.n_train = 256;
  c.n_val = 64;
  const Dataset ds = generate(c);
  MmpModel model(tiny_model(c), 3);
  const auto h = train(model, ds, tiny_train(AblationTag::kCaAlign, 30));
  const double first = h.epochs.front().alignment_loss;
  const double last = h.epochs.back().alignment_loss;
  ASSERT_GT(first, 0.0);
  EXPECT_LT(last, 0.5 * first) << "epoch 1 " << first << ", epoch 30 " << last;
}

TEST(Train, LinearlySeparableWorldIsLearned) {
  // Nearly linear maps and no noise: first confirm with the probe oracle that
  // the data is linearly separable, then require the model to fit it.
  SynthConfig c;
  c.feature_lengths = {16, 16};
  c.latent = 4;
  c.view_rank = 0;
  c.classes = 2;
  c.noise = 0.0;
  c.map_gain = 0.1;
  c.n_train = 2000;
  c.n_val = 500;
  c.n_test = 200;
  c.seed = 2;
  const Dataset ds = generate(c);
  ASSERT_GE(qualify(ds, 400).joint_probe_accuracy, 0.99);
  ModelConfig m;
  m.modalities = {{"a", 4, 4, 16}, {"b", 4, 4, 16}};
  m.classes = 2;
  m.common_width = 8;
  m.heads = 2;
  TrainConfig t;
  t.epochs = 30;
  t.batch = 64;
  t.lr = 3e-3;
  t.p_none = 1.0;
  t.tag = AblationTag::kDropout;
  MmpModel model(m, 0);
  const auto h = train(model, ds, t);
  double best = 0.0;
  for (const auto& e : h.epochs) best = std::max(best, e.val_accuracy);
  EXPECT_GE(best, 0.99);
}

TEST(Evaluate, UntrainedModelIsAtChance) {
  SynthConfig c;
  c.n_train = 10;
  c.n_val = 10;
  c.n_test = 500;
  c.seed = 4;
  const Dataset ds = generate(c);
  ModelConfig m;
  for (int i = 0; i < 3; ++i) m.modalities.push_back({"m" + std::to_string(i), 8, 8, 64});
  const MmpModel model(m, 9);
  EvalOptions eo;
  eo.modes = {SubstitutionMode::kZeroFill, SubstitutionMode::kMmp, SubstitutionMode::kLinearProjection};
  eo.diagnostics = false;
  const auto rec = evaluate(model, ds, eo);
  ASSERT_EQ(rec.accuracy.size(), 7u * 3);
  const boost::math::binomial_distribution<double> dist(500, 0.25);
  const double lo = boost::math::quantile(dist, 0.005) / 500.0;
  const double hi = boost::math::quantile(boost::math::complement(dist, 0.005)) / 500.0;
  // A fixed random network is a function of the features, which carry the
  // label, so single cells on real labels are not binomial; their mean is.
  double sum = 0.0;
  for (const auto& a : rec.accuracy) sum += a.accuracy;
  EXPECT_GE(sum / 21.0, lo);
  EXPECT_LE(sum / 21.0, hi);
  // With test labels permuted the predictions are independent of the labels
  // and every scenario must fall inside the interval.
  Dataset shuffled = ds;
  const auto test = shuffled.indices(Split::kTest);
  std::vector<std::uint32_t> labels;
  for (auto i : test) labels.push_back(shuffled.labels[i]);
  std::mt19937_64 rng(11);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t t = 0; t < test.size(); ++t) shuffled.labels[test[t]] = labels[t];
  for (const auto& a : evaluate(model, shuffled, eo).accuracy) {
    EXPECT_GE(a.accuracy, lo) << a.scenario << " " << to_string(a.mode);
    EXPECT_LE(a.accuracy, hi) << a.scenario << " " << to_string(a.mode);
  }
}

TEST(Evaluate, FullScenarioAgreesAcrossModesAndDiagnosticsAreBounded) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  train(model, ds, tiny_train(AblationTag::kCaAlign));
  EvalOptions eo;
  eo.modes = {SubstitutionMode::kZeroFill, SubstitutionMode::kMmp, SubstitutionMode::kLinearProjection};
  const auto rec = evaluate(model, ds, eo, "ca_align", 5);
  ASSERT_EQ(rec.accuracy.size(), 21u);
  EXPECT_EQ(rec.accuracy[0].num_masked, 0u);
  EXPECT_EQ(rec.accuracy[0].accuracy, rec.accuracy[1].accuracy);
  EXPECT_EQ(rec.accuracy[0].accuracy, rec.accuracy[2].accuracy);
  // Single-missing scenarios contribute one row per mode, double-missing two.
  EXPECT_EQ(rec.alignment.size(), 3u * (3 * 1 + 3 * 2));
  for (const auto& d : rec.alignment) {
    EXPECT_GE(d.cosine, -1.0);
    EXPECT_LE(d.cosine, 1.0);
    EXPECT_GE(d.mse, 0.0);
    EXPECT_GE(d.smooth_l1, 0.0);
  }
}

TEST(Evaluate, CosineOfALogitVectorWithItselfIsOne) {
  const std::vector<double> v{0.3, -1.2, 4.0};
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-12);
}

TEST(Evaluate, NeverMutatesParameters) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  train(model, ds, tiny_train(AblationTag::kLpAlign));
  const auto before = sha256(std::string_view(reinterpret_cast<const char*>(model.parameters().serialize().data()),
                                              model.parameters().serialize().size()));
  EvalOptions eo;
  eo.modes = {SubstitutionMode::kMmp, SubstitutionMode::kLinearProjection};
  evaluate(model, ds, eo);
  const auto bytes = model.parameters().serialize();
  EXPECT_EQ(sha256(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())), before);
}

TEST(Evaluate, MaskedInputsAreNeverReadForPrediction) {
  const Dataset ds = generate(tiny_data());
  MmpModel model(tiny_model(tiny_data()), 3);
  train(model, ds, tiny_train(AblationTag::kCaAlign));
  Dataset zeroed = ds;
  std::fill(zeroed.features[2].begin(), zeroed.features[2].end(), 0.0f);
  EvalOptions eo;
  eo.modes = {SubstitutionMode::kMmp};
  eo.diagnostics = false;
  const auto a = evaluate(model, ds, eo), b = evaluate(model, zeroed, eo);
  const auto names = model.modality_names();
  for (std::size_t k = 0; k < a.accuracy.size(); ++k) {
    if (a.accuracy[k].scenario.find("m2") == std::string::npos) {  // m2 not available
      EXPECT_EQ(a.accuracy[k].accuracy, b.accuracy[k].accuracy) << a.accuracy[k].scenario;
    }
  }
}

TEST(Ablation, ReportShapeAndThreadIndependence) {
  const Dataset ds = generate(tiny_data());
  AblationConfig cfg;
  cfg.train = tiny_train(AblationTag::kDropout, 1);
  cfg.seeds = {0, 1, 2};
  cfg.alignment_samples = 16;
  const auto single = run_ablation(ds, tiny_model(tiny_data()), cfg);
  ASSERT_EQ(single.runs.size(), 12u);
  std::size_t cells = 0;
  for (const auto& r : single.runs) cells += r.accuracy.size();
  EXPECT_EQ(cells, 4u * 7 * 3);
  EXPECT_EQ(single.runs.front().tag, "dropout");
  EXPECT_EQ(single.runs.back().tag, "ca_align");
  EXPECT_EQ(single.runs.back().seed, 2u);
  for (const auto& r : single.runs) EXPECT_EQ(r.accuracy.front().mode, mode_for(parse_tag(r.tag)));
  EXPECT_EQ(single.ordering.means.size(), 4u);

  cfg.threads = 3;
  const auto pooled = run_ablation(ds, tiny_model(tiny_data()), cfg);
  for (std::size_t i = 0; i < single.runs.size(); ++i) {
    EXPECT_EQ(pooled.runs[i].tag, single.runs[i].tag);
    EXPECT_EQ(pooled.runs[i].seed, single.runs[i].seed);
    for (std::size_t k = 0; k < single.runs[i].accuracy.size(); ++k)
      EXPECT_EQ(pooled.runs[i].accuracy[k].accuracy, single.runs[i].accuracy[k].accuracy);
    EXPECT_EQ(pooled.histories[i].to_csv(), single.histories[i].to_csv());
  }
}

TEST(Ablation, FrozenZeroLinearProjectionEqualsDropout) {
  // Negative control: with the LP layer pinned at zero, the lp tag must
  // reproduce dropout exactly, because LP then substitutes zero tokens.
  const Dataset ds = generate(tiny_data());
  MmpModel dropout(tiny_model(tiny_data()), 3), lp(tiny_model(tiny_data()), 3);
  lp.zero_parameters("lp.");
  auto lp_cfg = tiny_train(AblationTag::kLp, 3);
  lp_cfg.freeze = {"lp."};
  const auto hd = train(dropout, ds, tiny_train(AblationTag::kDropout, 3));
  const auto hl = train(lp, ds, lp_cfg);
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(hd.epochs[e].task_loss, hl.epochs[e].task_loss);
    EXPECT_EQ(hd.epochs[e].val_accuracy, hl.epochs[e].val_accuracy);
  }
  for (const auto& entry : dropout.parameters()) {
    if (entry.name.starts_with("lp.")) continue;
    EXPECT_EQ(max_abs_diff(entry.value, lp.parameters().value(entry.name)), 0.0) << entry.name;
  }
  EvalOptions zero, proj;
  zero.modes = {SubstitutionMode::kZeroFill};
  proj.modes = {SubstitutionMode::kLinearProjection};
  zero.diagnostics = proj.diagnostics = false;
  const auto a = evaluate(dropout, ds, zero), b = evaluate(lp, ds, proj);
  for (std::size_t k = 0; k < a.accuracy.size(); ++k) EXPECT_EQ(a.accuracy[k].accuracy, b.accuracy[k].accuracy);
}

TEST(Ablation, OrderingCheck) {
  auto run = [](std::string tag, double acc) {
    RunRecord r;
    r.tag = std::move(tag);
    r.accuracy.push_back({"all", mode_for(parse_tag(r.tag)), 0, 1.0});
    r.accuracy.push_back({"one", mode_for(parse_tag(r.tag)), 1, acc});
    return r;
  };
  EXPECT_TRUE(check_ordering({run("dropout", 0.5), run("lp", 0.52), run("lp_align", 0.53), run("ca_align", 0.6)}).pass);
  // Ties within one point are tolerated.
  EXPECT_TRUE(check_ordering({run("dropout", 0.5), run("lp", 0.495), run("lp_align", 0.53), run("ca_align", 0.6)}).pass);
  EXPECT_FALSE(check_ordering({run("dropout", 0.5), run("lp", 0.48), run("lp_align", 0.53), run("ca_align", 0.6)}).pass);
  EXPECT_FALSE(check_ordering({run("dropout", 0.5), run("lp", 0.52)}).pass);
  const auto c = check_ordering({run("dropout", 0.5), run("dropout", 0.7), run("lp", 0.6), run("lp_align", 0.6),
                                 run("ca_align", 0.6)});
  EXPECT_NEAR(c.means[0].second, 0.6, 1e-15);
}

TEST(Ablation, SampleStatistics) {
  const std::vector<double> xs{1.0, 2.0, 4.0};
  EXPECT_NEAR(mean_of(xs), 7.0 / 3.0, 1e-15);
  EXPECT_NEAR(stddev_of(xs), std::sqrt(((1 - 7.0 / 3) * (1 - 7.0 / 3) + (2 - 7.0 / 3) * (2 - 7.0 / 3) +
                                        (4 - 7.0 / 3) * (4 - 7.0 / 3)) / 2.0), 1e-15);
  EXPECT_EQ(stddev_of(std::vector<double>{3.0}), 0.0);
  EXPECT_EQ(stddev_of(std::vector<double>{3.0, 3.0}), 0.0);
}

}  // namespace
}  // namespace mmp
