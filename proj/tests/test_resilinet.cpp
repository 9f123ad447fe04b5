#include <gtest/gtest.h>

#include <cmath>

#include "resilinet/resilinet.hpp"

using namespace resilinet;

namespace {

PartitionPlan small_health(std::size_t width = 8) {
  auto p = presets::health();
  p.hidden_width = width;
  return p;
}

Matrix<double> batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  SeededRng rng(seed, Stream::Data);
  Matrix<double> x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

std::optional<Matrix<double>> some(double v) { return Matrix<double>::Constant(1, 2, v); }

}  // namespace

TEST(CombineInputs, SelectPrefersPrimary) {
  auto a = some(1), b = some(2);
  EXPECT_EQ((*combine_inputs(a, b, JoinOp::Select))(0, 0), 1.0);
  EXPECT_EQ((*combine_inputs<double>(std::nullopt, b, JoinOp::Select))(0, 0), 2.0);
  EXPECT_EQ((*combine_inputs<double>(a, std::nullopt, JoinOp::Select))(0, 0), 1.0);
  EXPECT_FALSE(combine_inputs<double>(std::nullopt, std::nullopt, JoinOp::Select));
}

TEST(CombineInputs, SumTreatsAbsentAsZero) {
  auto a = some(1), b = some(2);
  EXPECT_EQ((*combine_inputs(a, b, JoinOp::Sum))(0, 1), 3.0);
  EXPECT_EQ((*combine_inputs<double>(std::nullopt, b, JoinOp::Sum))(0, 0), 2.0);
  EXPECT_FALSE(combine_inputs<double>(std::nullopt, std::nullopt, JoinOp::Sum));
  std::optional<Matrix<double>> wrong = Matrix<double>::Zero(2, 2);
  EXPECT_THROW(combine_inputs(a, wrong, JoinOp::Sum), DimensionError);
}

TEST(GatedForward, AbsentIffUnreachable) {
  for (const auto& base : canonical_configs()) {
    auto plan = base;
    plan.hidden_width = 6;
    const auto model = build_model<double>(plan, 3);
    const auto x = batch(2, plan.input_dim, 1);
    const auto v = model.node_count();
    for (std::uint64_t b = 0; b < (std::uint64_t{1} << v); ++b) {
      AliveMask m(v, b);
      for (auto k : kAllSchemes) {
        const bool skips = k != SchemeKind::Vanilla;
        auto out = gated_forward(model, m, Scheme{k}, x);
        EXPECT_EQ(out.has_value(), reachability(model.topology, m, skips)) << plan.name << " " << m.label();
        if (out) {
          EXPECT_EQ(out->rows(), 2);
          EXPECT_EQ(static_cast<std::size_t>(out->cols()), plan.classes);
        }
      }
    }
  }
}

TEST(GatedForward, AllAliveResiliNetEqualsVanilla) {
  const auto model = build_model<double>(small_health(), 4);
  const auto x = batch(5, 23, 2);
  const auto all = AliveMask::all_alive(4);
  auto r = gated_forward(model, all, Scheme{SchemeKind::ResiliNet}, x);
  auto v = gated_forward(model, all, Scheme{SchemeKind::Vanilla}, x);
  auto plus = gated_forward(model, all, Scheme{SchemeKind::ResiliNetPlus}, x);
  auto dfg = gated_forward(model, all, Scheme{SchemeKind::DFG}, x);
  EXPECT_TRUE(*r == *v);
  EXPECT_TRUE(*plus == *dfg);
  EXPECT_FALSE(*plus == *v);
}

TEST(GatedForward, DetourReplacesFailedPrimary) {
  // With n2 down, ResiliNet feeds n3 from n1 through the skip. Reconstruct
  // by hand from the node stacks.
  const auto model = build_model<double>(small_health(), 5);
  const auto x = batch(3, 23, 3);
  const auto mask = AliveMask::with_failed(4, {1});
  auto got = gated_forward(model, mask, Scheme{SchemeKind::ResiliNet}, x);
  ASSERT_TRUE(got);
  const auto& s = model.stacks;
  const Matrix<double> o1 = s[0].predict(x);
  const Matrix<double> o3 = s[2].predict(o1);
  const Matrix<double> want = s[3].predict(o3);
  EXPECT_LT((*got - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GatedForward, InferenceScalingMatchesHandComputation) {
  auto model = build_model<double>(small_health(), 6);
  const auto setting = FailureSetting::named("Normal", 4);
  assign_hyperconnection_weights(model, HyperWeightScheme::reliability(), setting, 1);
  inference_scaling_mode(model, setting, true);
  const auto x = batch(2, 23, 4);
  auto got = gated_forward(model, AliveMask::all_alive(4), Scheme{SchemeKind::ResiliNetPlus}, x);

  // r_i for i, n1, n2, n3 under Normal; each edge weight r_src scaled by r_src.
  const double r[] = {1.0, 0.92, 0.96, 0.99};
  auto w = [&](int src) { return r[src + 1] * r[src + 1]; };
  const auto& s = model.stacks;
  const auto proj_x = [&] {
    for (std::size_t e = 0; e < model.topology.edges().size(); ++e)
      if (model.projections[e]) return model.projections[e]->predict(x);
    return Matrix<double>();
  }();
  const Matrix<double> o1 = s[0].predict(w(-1) * x);
  const Matrix<double> o2 = s[1].predict(w(0) * o1 + w(-1) * proj_x);
  const Matrix<double> o3 = s[2].predict(w(1) * o2 + w(0) * o1);
  const Matrix<double> o4 = s[3].predict(w(2) * o3 + w(1) * o2);
  EXPECT_LT((*got - o4).cwiseAbs().maxCoeff(), 1e-10);

  inference_scaling_mode(model, setting, false);
  auto unscaled = gated_forward(model, AliveMask::all_alive(4), Scheme{SchemeKind::ResiliNetPlus}, x);
  EXPECT_GT((*unscaled - *got).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Failout, FrequenciesWithinThreeSigma) {
  const std::size_t n = 20000;
  for (double f : {0.05, 0.10, 0.30, 0.50}) {
    SeededRng rng(99, Stream::Failout);
    std::vector<std::size_t> drops(4, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto m = sample_failout_mask(FailoutConfig::fixed(f), 4, rng);
      EXPECT_TRUE(m.alive(3));
      for (int k = 0; k < 3; ++k) drops[static_cast<std::size_t>(k)] += !m.alive(k);
    }
    const double sigma = std::sqrt(f * (1 - f) / static_cast<double>(n));
    for (int k = 0; k < 3; ++k)
      EXPECT_NEAR(static_cast<double>(drops[static_cast<std::size_t>(k)]) / n, f, 3 * sigma) << f << " n" << k + 1;
    EXPECT_EQ(drops[3], 0u);
  }
}

TEST(Failout, MatchModeUsesFailureProbabilities) {
  const auto s = FailureSetting::named("Hazardous", 4);
  const auto cfg = FailoutConfig::match(s);
  EXPECT_DOUBLE_EQ(cfg.drop_prob(0), 0.22);
  EXPECT_DOUBLE_EQ(cfg.drop_prob(2), 0.15);
  EXPECT_DOUBLE_EQ(cfg.drop_prob(3), 0.0);
}

TEST(Failout, RejectedForVanillaAndDfg) {
  EXPECT_THROW(check_training_config(SchemeKind::Vanilla, FailoutConfig::fixed(0.1), 4), ConfigError);
  EXPECT_THROW(check_training_config(SchemeKind::DFG, FailoutConfig::fixed(0.1), 4), ConfigError);
  EXPECT_NO_THROW(check_training_config(SchemeKind::ResiliNet, FailoutConfig::fixed(0.1), 4));
  EXPECT_NO_THROW(check_training_config(SchemeKind::Vanilla, FailoutConfig::off(), 4));
  EXPECT_THROW(check_training_config(SchemeKind::ResiliNet, FailoutConfig::fixed(1.5), 4), ValidationError);
}

TEST(TrainStep, FailedNodeReceivesNoUpdate) {
  auto model = build_model<double>(small_health(), 7);
  const auto before = model;
  Optimizer<double> opt;
  const auto x = batch(4, 23, 5);
  const std::vector<ClassLabel> y{0, 1, 2, 3};
  auto res = train_step(model, opt, AliveMask::with_failed(4, {1}), SchemeKind::ResiliNet, x, y);
  ASSERT_TRUE(res);
  for (int n = 0; n < 4; ++n) {
    const bool same = model.stacks[static_cast<std::size_t>(n)].layers()[0].weights ==
                      before.stacks[static_cast<std::size_t>(n)].layers()[0].weights;
    EXPECT_EQ(same, n == 1) << "n" << n + 1;
  }
  // INPUT->n2 projection is unused while n2 is down.
  for (std::size_t e = 0; e < model.projections.size(); ++e)
    if (model.projections[e]) EXPECT_TRUE(model.projections[e]->layers()[0].weights == before.projections[e]->layers()[0].weights);
  EXPECT_EQ(opt.steps(model.layer_slot(1, 0)), 0u);
}

TEST(TrainStep, UnreachableMaskIsSkipped) {
  auto model = build_model<double>(small_health(), 8);
  Optimizer<double> opt;
  const auto x = batch(2, 23, 6);
  const std::vector<ClassLabel> y{0, 1};
  EXPECT_FALSE(train_step(model, opt, AliveMask::with_failed(4, {0, 1}), SchemeKind::ResiliNet, x, y));
}

TEST(Training, LossDecreasesAndIsDeterministic) {
  SyntheticSpec spec;
  spec.samples_per_class = 40;
  spec.seed = 3;
  auto ds = generate_synthetic(spec);
  normalize_with_train_stats(ds);
  auto run = [&] {
    auto model = build_model<float>(small_health(16), 11);
    TrainOptions o;
    o.epochs = 6;
    o.batch_size = 32;
    auto h = train(model, ds.train, SchemeKind::ResiliNet, FailoutConfig::fixed(0.1), o, 11);
    return std::make_pair(model, h);
  };
  auto [m1, h1] = run();
  auto [m2, h2] = run();
  EXPECT_LT(h1.epochs.back().loss, h1.epochs.front().loss);
  for (std::size_t n = 0; n < m1.stacks.size(); ++n)
    EXPECT_TRUE(m1.stacks[n].layers()[0].weights == m2.stacks[n].layers()[0].weights);
}

TEST(Training, HighFailoutSkipsUnreachableBatches) {
  SyntheticSpec spec;
  spec.samples_per_class = 20;
  auto ds = generate_synthetic(spec);
  auto model = build_model<float>(small_health(8), 12);
  TrainOptions o;
  o.epochs = 3;
  o.batch_size = 8;
  auto h = train(model, ds.train, SchemeKind::ResiliNet, FailoutConfig::fixed(0.5), o, 12);
  std::size_t skipped = 0;
  for (const auto& e : h.epochs) {
    skipped += e.skipped_batches;
    EXPECT_LE(e.skipped_batches, e.batches);
  }
  EXPECT_GT(skipped, 0u);
}

TEST(Training, RejectsFeatureMismatch) {
  SyntheticSpec spec;
  spec.features = 5;
  spec.samples_per_class = 5;
  auto ds = generate_synthetic(spec);
  auto model = build_model<float>(small_health(8), 1);
  EXPECT_THROW(train(model, ds.train, SchemeKind::Vanilla, FailoutConfig::off(), {}, 1), DimensionError);
}

TEST(Weights, ReliabilityAndRelativeReliability) {
  auto model = build_model<double>(small_health(), 1);
  const auto normal = FailureSetting::named("Normal", 4);
  const auto& edges = model.topology.edges();
  auto edge = [&](int s, int d) {
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (edges[e].src == s && edges[e].dst == d) return e;
    throw std::runtime_error("no edge");
  };
  assign_hyperconnection_weights(model, HyperWeightScheme::reliability(), normal, 1);
  EXPECT_NEAR(model.edge_weights[edge(0, 1)], 0.92, 1e-12);
  EXPECT_NEAR(model.edge_weights[edge(-1, 1)], 1.0, 1e-12);

  assign_hyperconnection_weights(model, HyperWeightScheme::relative_reliability(), normal, 1);
  EXPECT_NEAR(model.edge_weights[edge(0, 2)], 0.4894, 5e-5);
  EXPECT_NEAR(model.edge_weights[edge(1, 2)], 0.5106, 5e-5);
  for (int d = 0; d < 4; ++d) {
    double s = 0;
    for (auto e : model.topology.incoming(d)) s += model.edge_weights[e];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Weights, UniformRandomInRangeAndSeeded) {
  auto a = build_model<double>(small_health(), 1);
  auto b = build_model<double>(small_health(), 1);
  const auto s = FailureSetting::named("none", 4);
  assign_hyperconnection_weights(a, HyperWeightScheme::uniform(0.2, 0.7), s, 5);
  assign_hyperconnection_weights(b, HyperWeightScheme::uniform(0.2, 0.7), s, 5);
  EXPECT_EQ(a.edge_weights, b.edge_weights);
  for (double w : a.edge_weights) {
    EXPECT_GE(w, 0.2);
    EXPECT_LT(w, 0.7);
  }
  EXPECT_EQ(HyperWeightScheme::uniform(0, 1).label(), "UniformRandom(0,1)");
}

TEST(PredictLabels, ChunkingDoesNotChangeResult) {
  const auto model = build_model<double>(small_health(), 2);
  const auto x = batch(37, 23, 9);
  const auto m = AliveMask::with_failed(4, {0});
  auto a = predict_labels(model, m, Scheme{SchemeKind::ResiliNet}, x, 5);
  auto b = predict_labels(model, m, Scheme{SchemeKind::ResiliNet}, x, 4096);
  EXPECT_EQ(*a, *b);
  EXPECT_FALSE(predict_labels(model, AliveMask::with_failed(4, {1, 2}), Scheme{SchemeKind::ResiliNet}, x));
}
