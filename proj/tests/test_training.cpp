#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>


#include "wmlff/datagen/planted.hpp"
#include "wmlff/errors.hpp"
#include "wmlff/features/pipeline.hpp"
#include "wmlff/numerics/rng.hpp"
#include "wmlff/training/losses.hpp"
#include "wmlff/training/optimizer.hpp"
#include "wmlff/training/trainer.hpp"

using namespace wmlff;

namespace {

struct Planted {
  ModelConfig model;
  EncodedDataset data;
};

Planted planted(std::size_t rows, std::uint64_t seed, bool dual = true) {
  PlantedSpec spec;
  spec.n_rows = rows;
  spec.cardinalities = {6, 5};
  spec.n_numeric = 2;
  spec.teacher.towers = dual ? TowerLayout::dual : TowerLayout::single;
  spec.seed = seed;
  const auto gen = generate(spec);
  FeaturePipeline pipeline(planted_schema(spec));
  Planted p{ModelConfig{}, pipeline.encode(gen.table, EncodeMode::fit)};
  p.model.dim = 4;
  p.model.depth = 2;
  p.model.towers = spec.teacher.towers;
  p.model.cardinalities = p.data.cardinalities;
  p.model.n_numeric = p.data.n_numeric();
  return p;
}

TrainConfig quick(LossKind loss = LossKind::joint_bce) {
  TrainConfig c;
  c.batch_size = 16;
  c.epochs = 5;
  c.loss = loss;
  c.seed = 7;
  return c;
}

WMLFFModel fresh(const ModelConfig& c, std::uint64_t seed = 1) {
  Rng rng(seed);
  return WMLFFModel::init(c, rng);
}

double brute_bce(std::span<const double> y, std::span<const double> p) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double q = std::clamp(p[i], 1e-7, 1 - 1e-7);
    s -= y[i] == 1.0 ? std::log(q) : std::log(1 - q);
  }
  return s / static_cast<double>(y.size());
}

}  // namespace

TEST(Loss, JointExample) {
  const std::vector<double> c{1}, i{0}, h{0.5};
  EXPECT_NEAR(joint_bce_loss(c, h, i, h), std::log(2.0), 1e-15);
}

TEST(Loss, PerfectPredictionsAreTinyPositive) {
  const std::vector<double> y{1, 0, 1}, p{1, 0, 1};
  const double l = joint_bce_loss(y, p, y, p);
  EXPECT_GT(l, 0.0);
  EXPECT_LE(l, 2e-7 * std::abs(std::log(1e-7)));
}

TEST(Loss, JointMatchesOracleAndIsMeanOfTasks) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(40);
    std::vector<double> c(n), i(n), ch(n), ih(n);
    for (std::size_t k = 0; k < n; ++k) {
      c[k] = rng.uniform() < 0.5 ? 1 : 0;
      i[k] = rng.uniform() < 0.3 ? 1 : 0;
      ch[k] = rng.uniform();
      ih[k] = rng.uniform();
    }
    double s = 0;
    for (std::size_t k = 0; k < n; ++k) {
      s += c[k] * std::log(std::clamp(ch[k], 1e-7, 1 - 1e-7)) + (1 - c[k]) * std::log(1 - std::clamp(ch[k], 1e-7, 1 - 1e-7));
      s += i[k] * std::log(std::clamp(ih[k], 1e-7, 1 - 1e-7)) + (1 - i[k]) * std::log(1 - std::clamp(ih[k], 1e-7, 1 - 1e-7));
    }
    const double oracle = -s / (2.0 * static_cast<double>(n));
    const double got = joint_bce_loss(c, ch, i, ih);
    EXPECT_NEAR(got, oracle, 1e-12 * std::abs(oracle));
    EXPECT_NEAR(got, 0.5 * (bce_loss(c, ch) + bce_loss(i, ih)), 1e-12 * std::abs(oracle));
    EXPECT_NEAR(bce_loss(c, ch), brute_bce(c, ch), 1e-12 * brute_bce(c, ch));
  }
}

TEST(Loss, MseExamplesAndOracle) {
  const std::vector<double> y{0, 1}, yh{1, 0};
  EXPECT_EQ(mse_loss(y, y), 0.0);
  EXPECT_EQ(mse_loss(y, yh), 1.0);
  Rng rng(5);
  std::vector<double> a(30), b(30);
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    a[k] = rng.standard_normal();
    b[k] = rng.standard_normal();
    s += (a[k] - b[k]) * (a[k] - b[k]);
  }
  EXPECT_NEAR(mse_loss(a, b), s / 30.0, 1e-12 * s / 30.0);
}

TEST(Loss, LengthMismatchThrows) {
  const std::vector<double> a{1, 0}, b{0.5};
  EXPECT_THROW(bce_loss(a, b), DimensionError);
  EXPECT_THROW(mse_loss(a, b), DimensionError);
  EXPECT_THROW(joint_bce_loss(a, a, a, b), DimensionError);
}

namespace {

ParameterSet scalar(double v) {
  ParameterSet p;
  p.add("theta", Matrix(1, 1, v));
  return p;
}

Gradients grad_of(double g) { return {Matrix(1, 1, g)}; }

OptimizerConfig adam_like(OptimizerKind kind, double lr = 1e-3) {
  OptimizerConfig c;
  c.kind = kind;
  c.lr = lr;
  return c;
}

}  // namespace

TEST(Optimizer, AdamFirstStep) {
  auto p = scalar(0.0);
  Optimizer opt(adam_like(OptimizerKind::adam), p);
  opt.step(p, grad_of(1.0));
  EXPECT_NEAR(p[0].value[0], -0.001 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(opt.state().step, 1u);
  EXPECT_TRUE(opt.state().first_moment[0].same_shape(p[0].value));
}

TEST(Optimizer, ZeroGradient) {
  for (const auto kind : {OptimizerKind::adam, OptimizerKind::radam}) {
    auto p = scalar(0.75);
    Optimizer opt(adam_like(kind), p);
    for (int i = 0; i < 10; ++i) opt.step(p, grad_of(0.0));
    EXPECT_EQ(p[0].value[0], 0.75) << to_string(kind);
  }
  auto p = scalar(0.75);
  Optimizer opt(adam_like(OptimizerKind::adamw), p);
  opt.step(p, grad_of(0.0));
  EXPECT_NEAR(p[0].value[0], 0.75 * (1 - 1e-3 * 1e-2), 1e-15);
}

TEST(Optimizer, QuadraticConverges) {
  for (const auto kind : {OptimizerKind::adam, OptimizerKind::adamw, OptimizerKind::radam}) {
    auto p = scalar(1.0);
    Optimizer opt(adam_like(kind, 0.1), p);
    for (int i = 0; i < 100; ++i) opt.step(p, grad_of(2.0 * p[0].value[0]));
    EXPECT_LT(std::abs(p[0].value[0]), 0.1) << to_string(kind);
  }
}

TEST(Optimizer, DescentOnConvexProbe) {
  for (const auto kind : {OptimizerKind::adam, OptimizerKind::adamw, OptimizerKind::radam}) {
    auto p = scalar(1.0);
    Optimizer opt(adam_like(kind), p);
    // RAdam's early steps are momentum-only; every step must still decrease the loss.
    for (int i = 0; i < 10; ++i) {
      const double before = p[0].value[0] * p[0].value[0];
      opt.step(p, grad_of(2.0 * p[0].value[0]));
      EXPECT_LT(p[0].value[0] * p[0].value[0], before);
    }
  }
}

TEST(Optimizer, RadamRecurrence) {
  // Independent transcription of the rectified update for a constant gradient.
  const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.3;
  auto p = scalar(0.0);
  Optimizer opt(adam_like(OptimizerKind::radam), p);
  double theta = 0, m = 0, v = 0;
  const double rho_inf = 2 / (1 - b2) - 1;
  for (int t = 1; t <= 12; ++t) {
    opt.step(p, grad_of(g));
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double rho = rho_inf - 2 * t * std::pow(b2, t) / (1 - std::pow(b2, t));
    if (rho > 4) {
      const double l = std::sqrt(1 - std::pow(b2, t)) / (std::sqrt(v) + eps);
      const double r = std::sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho));
      theta -= lr * mh * r * l;
    } else {
      theta -= lr * mh;
    }
    EXPECT_NEAR(p[0].value[0], theta, 1e-15) << "step " << t;
  }
}

TEST(Optimizer, ConfigParsing) {
  EXPECT_EQ(parse_optimizer_kind("radam"), OptimizerKind::radam);
  EXPECT_THROW(parse_optimizer_kind("qhadam"), UsageError);
  EXPECT_EQ(OptimizerConfig{}.effective_weight_decay(), 0.0);
  EXPECT_EQ(adam_like(OptimizerKind::adamw).effective_weight_decay(), 1e-2);
}

TEST(TrainConfigTest, Validation) {
  auto c = quick();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = quick();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = quick();
  c.kfold = {true, 1};
  EXPECT_THROW(c.validate(), UsageError);
  const TrainConfig d;
  EXPECT_EQ(d.batch_size, 1024u);
  EXPECT_EQ(d.epochs, 40u);
  EXPECT_EQ(d.optimizer.kind, OptimizerKind::radam);
  EXPECT_EQ(d.early_stopping.patience, 2u);
}

TEST(Train, ZeroLearningRateChangesNothing) {
  auto p = planted(100, 1);
  auto cfg = quick();
  cfg.optimizer.lr = 0.0;
  const auto m = fresh(p.model);
  const auto r = train(m, p.data, nullptr, cfg);
  EXPECT_EQ(r.model, m);
  ASSERT_EQ(r.history.size(), 6u);
  for (const auto& e : r.history) EXPECT_EQ(e.train_loss, r.history[0].train_loss);
}

TEST(Train, Deterministic) {
  auto p = planted(120, 2);
  const auto a = train(fresh(p.model), p.data, nullptr, quick());
  const auto b = train(fresh(p.model), p.data, nullptr, quick());
  EXPECT_EQ(a.model, b.model);
  auto other = quick();
  other.seed = 8;
  EXPECT_FALSE(train(fresh(p.model), p.data, nullptr, other).model == a.model);
}

TEST(Train, LossDecreasesOnPlantedData) {
  auto p = planted(200, 3);
  auto cfg = quick();
  cfg.epochs = 40;
  const auto r = train(fresh(p.model), p.data, nullptr, cfg);
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST(Train, SingleTaskAndRegression) {
  auto p = planted(100, 4, false);
  const auto r = train(fresh(p.model), p.data, nullptr, quick(LossKind::bce));
  EXPECT_TRUE(std::isfinite(r.history.back().train_loss));
  EXPECT_THROW(train(fresh(p.model), p.data, nullptr, quick(LossKind::joint_bce)), UsageError);
  EXPECT_THROW(train(fresh(p.model), p.data, nullptr, quick(LossKind::mse)), UsageError);

  auto reg = p;
  std::vector<double> ratings(reg.data.rows);
  for (std::size_t i = 0; i < ratings.size(); ++i) ratings[i] = 1.0 + static_cast<double>(i % 5);
  reg.data.rating = ratings;
  reg.data.click.reset();
  const auto rr = train(fresh(reg.model), reg.data, nullptr, quick(LossKind::mse));
  EXPECT_TRUE(std::isfinite(rr.history.back().train_loss));
  EXPECT_EQ(regression_targets(std::vector<double>{1, 3, 5}, OutputKind::sigmoid), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(regression_targets(std::vector<double>{1, 3, 5}, OutputKind::linear), (std::vector<double>{1, 3, 5}));
}

TEST(Train, PartialBatchIsWeightedBySize) {
  auto p = planted(37, 5);
  auto cfg = quick();
  cfg.batch_size = 10;
  cfg.epochs = 1;
  cfg.optimizer.lr = 0.0;
  const auto r = train(fresh(p.model), p.data, nullptr, cfg);
  // With lr = 0 and noise on, the weighted batch loss is a mean over 37 noisy rows
  // and stays close to the clean loss.
  EXPECT_NEAR(r.history[1].batch_loss, r.history[1].train_loss, 0.2);
  cfg.batch_size = 37;
  cfg.epochs = 1;
  auto single = cfg;
  single.batch_size = 1000;
  EXPECT_EQ(train(fresh(p.model), p.data, nullptr, cfg).history[1].batch_loss,
            train(fresh(p.model), p.data, nullptr, single).history[1].batch_loss);
}

TEST(Train, ShufflePermutes) {
  for (const std::size_t n : {1u, 2u, 17u, 1000u}) {
    auto idx = shuffled_indices(n, 9);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(idx[i], i);
  }
  EXPECT_NE(shuffled_indices(50, 1), shuffled_indices(50, 2));
}

TEST(Train, EarlyStoppingRestoresBest) {
  auto p = planted(300, 6);
  const auto valid = planted(150, 60);
  for (const auto metric : {StopMetric::loss, StopMetric::auc}) {
    auto cfg = quick();
    cfg.epochs = 30;
    cfg.optimizer.lr = 0.05;
    cfg.early_stopping = {true, 2, metric, true};
    const auto r = train(fresh(p.model), p.data, &valid.data, cfg);
    const double final_loss = evaluate_loss(r.model, valid.data, cfg.loss);
    double best_loss = std::numeric_limits<double>::infinity();
    double best_auc = 0;
    for (const auto& e : r.history) {
      best_loss = std::min(best_loss, *e.validation_loss);
      best_auc = std::max(best_auc, *e.validation_auc);
    }
    const auto& chosen = r.history[r.best_epoch];
    if (metric == StopMetric::loss) {
      EXPECT_EQ(*chosen.validation_loss, best_loss);
      EXPECT_EQ(final_loss, best_loss);
    } else {
      EXPECT_EQ(*chosen.validation_auc, best_auc);
    }
  }
}

TEST(Train, EarlyStoppingNeedsValidation) {
  auto p = planted(50, 7);
  auto cfg = quick();
  cfg.early_stopping.enabled = true;
  EXPECT_THROW(train(fresh(p.model), p.data, nullptr, cfg), UsageError);
  cfg.validation_fraction = 0.2;
  EXPECT_NO_THROW(train(fresh(p.model), p.data, nullptr, cfg));
}

TEST(Train, NonFiniteLossAborts) {
  auto p = planted(40, 8);
  p.data.numeric(3, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    train(fresh(p.model), p.data, nullptr, quick());
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("batch"), std::string::npos);
    EXPECT_NE(what.find("norms"), std::string::npos);
  }
}

TEST(KFold, PartitionLaw) {
  const auto folds = assign_folds(4, 2, 11);
  ASSERT_EQ(folds.size(), 4u);
  EXPECT_EQ(std::count(folds.begin(), folds.end(), 0u), 2);
  EXPECT_EQ(std::count(folds.begin(), folds.end(), 1u), 2);
  EXPECT_EQ(folds, assign_folds(4, 2, 11));
  const auto big = assign_folds(103, 10, 3);
  for (std::size_t f = 0; f < 10; ++f) {
    const auto n = std::count(big.begin(), big.end(), f);
    EXPECT_TRUE(n == 10 || n == 11);
  }
  EXPECT_THROW(assign_folds(3, 4, 0), DataError);
}

TEST(KFold, TrainsOneMemberPerFold) {
  auto p = planted(60, 9);
  auto cfg = quick();
  cfg.epochs = 3;
  const auto e = kfold_train(p.data, 3, p.model, cfg);
  ASSERT_EQ(e.members.size(), 3u);
  EXPECT_FALSE(e.members[0] == e.members[1]);
  const auto again = kfold_train(p.data, 3, p.model, cfg);
  EXPECT_EQ(again.members, e.members);
  EXPECT_THROW(kfold_train(planted(2, 1).data, 3, p.model, cfg), DataError);
}

TEST(KFold, MembersSeeOtherFoldsOnly) {
  auto p = planted(4, 10);
  auto base = quick();
  base.epochs = 1;
  base.batch_size = 1;
  const auto e = kfold_train(p.data, 2, p.model, base);
  const auto folds = assign_folds(4, 2, derive_seed(base.seed, 3));
  for (std::size_t j = 0; j < 2; ++j) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < 4; ++r) {
      if (folds[r] != j) rows.push_back(r);
    }
    ASSERT_EQ(rows.size(), 2u);
    // Train-loss history is computed over the member's training rows.
    Rng rng(derive_seed(base.seed + j, 0));
    const auto init = WMLFFModel::init(p.model, rng);
    EXPECT_EQ(e.runs[j].history[0].train_loss, evaluate_loss(init, p.data.subset(rows), base.loss));
  }
}

TEST(Ensemble, IdenticalMembersAndMean) {
  auto p = planted(30, 11);
  const auto m = fresh(p.model);
  const std::vector<WMLFFModel> same(5, m);
  EXPECT_EQ(predict_ensemble(same, p.data), predict_dataset(m, p.data));

  // Linear single-task members with constant features: the output equals m.
  auto cfg = p.model;
  cfg.towers = TowerLayout::single;
  cfg.output = OutputKind::linear;
  auto constant_member = [&](double m_value) {
    auto model = fresh(cfg);
    for (const auto& tower : model.towers()) {
      for (const auto w : tower.weights) model.parameters()[w].value.fill(0.0);
      for (const auto b : tower.biases) {
        model.parameters()[b].value.fill(0.0);
        model.parameters()[b].value[0] = 1.0;
      }
    }
    model.parameters()[model.heads()[0].level_weights].value = Matrix{{1.0, 0.0}};
    model.parameters()[model.global_scale()].value[0] = m_value;
    return model;
  };
  const std::vector<WMLFFModel> pair{constant_member(0.2), constant_member(0.4)};
  EXPECT_EQ(predict_dataset(pair[0], p.data)[0][0], 0.2);
  EXPECT_EQ(predict_dataset(pair[1], p.data)[0][0], 0.4);
  const auto mean = predict_ensemble(pair, p.data);
  for (const double v : mean[0]) EXPECT_NEAR(v, 0.3, 1e-15);
}

TEST(Ensemble, ArithmeticMeanOfDistinctMembers) {
  auto p = planted(40, 12);
  const auto a = fresh(p.model, 1);
  const auto b = fresh(p.model, 2);
  const std::vector<WMLFFModel> pair{a, b};
  const auto pe = predict_ensemble(pair, p.data);
  const auto pa = predict_dataset(a, p.data);
  const auto pb = predict_dataset(b, p.data);
  for (std::size_t t = 0; t < pe.size(); ++t) {
    for (std::size_t r = 0; r < p.data.rows; ++r) EXPECT_NEAR(pe[t][r], 0.5 * (pa[t][r] + pb[t][r]), 1e-15);
  }
}
