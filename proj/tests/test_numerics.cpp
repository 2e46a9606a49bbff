#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>

#include "fd_check.hpp"
#include "wmlff/errors.hpp"
#include "wmlff/numerics/matrix.hpp"
#include "wmlff/numerics/rng.hpp"
#include "wmlff/numerics/tape.hpp"

using namespace wmlff;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  for (auto& v : m.values()) v = scale * rng.standard_normal();
  return m;
}

// Entries bounded away from zero, for ops with a kink at 0.
Matrix away_from_zero(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& v : m.values()) {
    const double mag = 0.1 + rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return m;
}

using Builder = std::function<Var(Tape&, const ParameterSet&)>;

double evaluate(const Builder& f, const ParameterSet& params) {
  Tape tape(false);
  return tape.value(f(tape, params))[0];
}

double gradient_error(ParameterSet& params, const Builder& f) {
  Tape tape;
  const auto g = tape.backward(f(tape, params), params);
  return check::finite_difference_check(params, g, [&](const ParameterSet& p) { return evaluate(f, p); })
      .max_rel_error;
}

// Random linear functional of y, so every entry carries a distinct adjoint.
Var project(Tape& t, Var y, Rng& rng) {
  const auto& v = t.value(y);
  return t.sum(t.mul_const(y, random_matrix(rng, v.rows(), v.cols())));
}

}  // namespace

TEST(Matvec, IdentityReturnsInput) {
  const Matrix i2{{1, 0}, {0, 1}};
  const std::vector<double> x{3, 4}, b{0, 0};
  EXPECT_EQ(matvec(i2, x, b), (Vector{3, 4}));
}

TEST(Matvec, HandArithmetic) {
  const Matrix w{{1, 2}, {3, 4}};
  const std::vector<double> x{1, 1}, b{1, 0};
  EXPECT_EQ(matvec(w, x, b), (Vector{4, 7}));
}

TEST(Matvec, ShapeMismatchNamesBothShapes) {
  const Matrix w{{1, 2}, {3, 4}};
  const std::vector<double> x{1, 1, 1}, b{0, 0};
  try {
    matvec(w, x, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3"), std::string::npos) << msg;
  }
}

TEST(Matvec, GradientOfSumMatchesFiniteDifference) {
  Rng rng(7);
  ParameterSet p;
  p.add("w", random_matrix(rng, 3, 4));
  p.add("b", random_matrix(rng, 1, 3));
  p.add("x", random_matrix(rng, 1, 4));
  const Builder f = [](Tape& t, const ParameterSet& ps) {
    return t.sum(t.affine(t.parameter(ps, 2), t.parameter(ps, 0), t.parameter(ps, 1)));
  };
  EXPECT_LT(gradient_error(p, f), 1e-6);
}

TEST(LeakyRelu, Examples) {
  const std::vector<double> a{2, -100}, b{-1, 1};
  EXPECT_EQ(leaky_relu(a, 0.01), (Vector{2, -1}));
  EXPECT_EQ(leaky_relu(b, 0.0), (Vector{0, 1}));
}

TEST(LeakyRelu, GradientBelowZeroIsSlope) {
  ParameterSet p;
  p.add("x", Matrix{{-2.0}});
  Tape t;
  const auto g = t.backward(t.sum(t.leaky_relu(t.parameter(p, 0), 0.01)), p);
  EXPECT_DOUBLE_EQ(g[0][0], 0.01);
  const double h = 1e-5;
  const double fd = (0.01 * (-2.0 + h) - 0.01 * (-2.0 - h)) / (2 * h);
  EXPECT_NEAR(g[0][0], fd, 1e-10);
}

TEST(Sigmoid, Examples) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  EXPECT_NEAR(sigmoid(std::log(3.0)), 0.75, 1e-15);
  const double tiny = sigmoid(-710.0);
  EXPECT_GT(tiny, 0.0);
  EXPECT_TRUE(std::isfinite(tiny));
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(Sigmoid, ComplementSymmetry) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double z = 40.0 * (rng.uniform() - 0.5);
    EXPECT_NEAR(sigmoid(z) + sigmoid(-z), 1.0, 2 * std::numeric_limits<double>::epsilon());
  }
}

TEST(Dot, Examples) {
  const std::vector<double> e1{1, 0}, e2{0, 1}, a{1, 2}, b{3, 4};
  EXPECT_EQ(dot(e1, e2), 0.0);
  EXPECT_EQ(dot(a, b), 11.0);
}

TEST(Dot, LengthMismatchThrows) {
  const std::vector<double> a{1, 2}, b{1, 2, 3};
  EXPECT_THROW(dot(a, b), DimensionError);
}

TEST(Dot, SymmetricExactly) {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> a(17), b(17);
    for (auto& v : a) v = rng.standard_normal();
    for (auto& v : b) v = rng.standard_normal();
    EXPECT_EQ(dot(a, b), dot(b, a));
  }
}

TEST(Dot, AdjointIsOtherOperand) {
  ParameterSet p;
  p.add("a", Matrix{{1.5, -2.0, 0.25}});
  p.add("b", Matrix{{3.0, 4.0, -5.0}});
  Tape t;
  const auto g = t.backward(t.sum(t.row_dot(t.parameter(p, 0), t.parameter(p, 1))), p);
  EXPECT_EQ(g[0], p[1].value);
  EXPECT_EQ(g[1], p[0].value);
}

TEST(Cosine, ZeroVectorGivesZero) {
  const std::vector<double> z{0, 0}, a{1, 2};
  EXPECT_EQ(cosine(z, a), 0.0);
  EXPECT_NEAR(cosine(a, a), 1.0, 1e-15);
}

TEST(Gaussian, ZeroSigmaIsExactlyMu) {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(gaussian(rng, 1.25, 0.0), 1.25);
}

TEST(Gaussian, MonteCarloMoments) {
  Rng rng(2024);
  const int n = 1000000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = gaussian(rng, 1.0, 0.5);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  EXPECT_NEAR(mean, 1.0, 0.0015);
  EXPECT_NEAR(var, 0.25, 0.25 * 0.02);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformInHalfOpenUnitInterval) {
  Rng rng(5);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LE(u, 1.0);
  }
}

TEST(Rng, UniformIndexCoversRange) {
  Rng rng(9);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[rng.uniform_index(7)];
  for (const int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(1, 0), derive_seed(1, 0));
}

TEST(Backward, SquareAtThree) {
  ParameterSet p;
  p.add("x", Matrix{{3.0}});
  Tape t;
  const Var x = t.parameter(p, 0);
  const auto g = t.backward(t.mul(x, x), p);
  EXPECT_EQ(g[0][0], 6.0);
}

TEST(Backward, UntouchedParameterGetsExactZero) {
  ParameterSet p;
  p.add("used", Matrix{{2.0, 1.0}});
  p.add("unused", Matrix{{5.0, 6.0}, {7.0, 8.0}});
  Tape t;
  const auto g = t.backward(t.sum(t.parameter(p, 0)), p);
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1], Matrix(2, 2, 0.0));
  EXPECT_EQ(g[0], Matrix(1, 2, 1.0));
}

TEST(Backward, Misuse) {
  ParameterSet p;
  p.add("x", Matrix{{1.0, 2.0}});
  Tape a, b;
  const Var xa = a.parameter(p, 0);
  EXPECT_THROW(b.backward(b.sum(xa), p), UsageError);
  EXPECT_THROW(a.backward(xa, p), UsageError);  // not a scalar
  EXPECT_THROW(a.backward(Var{}, p), UsageError);
  Tape off(false);
  EXPECT_THROW(off.backward(off.sum(off.parameter(p, 0)), p), UsageError);
}

TEST(Tape, RecordingDoesNotChangeForwardValues) {
  Rng rng(17);
  ParameterSet p;
  p.add("w", random_matrix(rng, 5, 4));
  p.add("b", random_matrix(rng, 1, 5));
  p.add("x", random_matrix(rng, 3, 4));
  auto run = [&](bool rec) {
    Tape t(rec);
    Var h = t.leaky_relu(t.affine(t.parameter(p, 2), t.parameter(p, 0), t.parameter(p, 1)), 0.01);
    return t.value(t.sigmoid(t.row_cosine(h, t.scale_const(h, 2.0))));
  };
  EXPECT_EQ(run(true), run(false));
}

TEST(Tape, DimensionErrors) {
  Tape t;
  const Var a = t.constant(Matrix(2, 3));
  const Var b = t.constant(Matrix(3, 2));
  EXPECT_THROW(t.add(a, b), DimensionError);
  EXPECT_THROW(t.row_dot(a, b), DimensionError);
  EXPECT_THROW(t.affine(a, b, t.constant(Matrix(1, 2))), DimensionError);
}

TEST(Tape, EmbedMeanOutOfRangeThrows) {
  Tape t;
  const Var table = t.constant(Matrix(3, 2));
  const std::vector<std::int32_t> ids{0, 3};
  EXPECT_THROW(t.embed_mean(table, ids, 1), DimensionError);
}

// Every primitive against central differences, random shapes, 100 seeds each.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifference) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  const std::size_t batch = 1 + rng.uniform_index(6);
  const std::size_t n = 1 + rng.uniform_index(5);
  const std::size_t m = 1 + rng.uniform_index(5);
  ParameterSet p;
  p.add("x", random_matrix(rng, batch, n));
  p.add("w", random_matrix(rng, m, n));
  p.add("b", random_matrix(rng, 1, m));
  p.add("y", random_matrix(rng, batch, n));
  p.add("s", random_matrix(rng, 1, 1));
  p.add("kinked", away_from_zero(rng, batch, n));
  p.add("table", random_matrix(rng, 4, n));
  std::vector<std::int32_t> ids;
  const std::size_t k = 1 + rng.uniform_index(3);
  for (std::size_t i = 0; i < batch * k; ++i) ids.push_back(static_cast<std::int32_t>(rng.uniform_index(4)));
  std::vector<double> labels;
  std::vector<double> targets;
  for (std::size_t i = 0; i < batch; ++i) {
    labels.push_back(rng.uniform() < 0.5 ? 1.0 : 0.0);
    targets.push_back(rng.standard_normal());
  }
  const Matrix mult = random_matrix(rng, batch, n);
  const std::uint64_t proj_seed = rng.next_u64();
  auto P = [&](Tape& t, Var v) {
    Rng r(proj_seed);
    return project(t, v, r);
  };

  const std::vector<std::pair<std::string, Builder>> cases = {
      {"affine", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.affine(t.parameter(ps, 0), t.parameter(ps, 1), t.parameter(ps, 2)));
       }},
      {"linear", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.linear(t.parameter(ps, 0), t.parameter(ps, 1)));
       }},
      {"leaky_relu", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.leaky_relu(t.parameter(ps, 5), 0.01));
       }},
      {"mul_const", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.mul_const(t.parameter(ps, 0), mult));
       }},
      {"mul", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.mul(t.parameter(ps, 0), t.parameter(ps, 3)));
       }},
      {"add", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.add(t.parameter(ps, 0), t.mul(t.parameter(ps, 3), t.parameter(ps, 3))));
       }},
      {"scale_const", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.scale_const(t.parameter(ps, 0), -1.7));
       }},
      {"scale", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.scale(t.parameter(ps, 0), t.parameter(ps, 4)));
       }},
      {"embed_mean", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.embed_mean(t.parameter(ps, 6), ids, k));
       }},
      {"concat_cols", [&](Tape& t, const ParameterSet& ps) {
         const Var parts[] = {t.parameter(ps, 0), t.mul(t.parameter(ps, 3), t.parameter(ps, 0))};
         return P(t, t.concat_cols(parts));
       }},
      {"row_dot", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.row_dot(t.parameter(ps, 0), t.parameter(ps, 3)));
       }},
      {"row_cosine", [&](Tape& t, const ParameterSet& ps) {
         return P(t, t.row_cosine(t.parameter(ps, 0), t.parameter(ps, 3)));
       }},
      {"sigmoid", [&](Tape& t, const ParameterSet& ps) { return P(t, t.sigmoid(t.parameter(ps, 0))); }},
      {"bce_mean", [&](Tape& t, const ParameterSet& ps) {
         return t.bce_mean(t.sigmoid(t.row_dot(t.parameter(ps, 0), t.parameter(ps, 3))), labels, 1e-7);
       }},
      {"bce_logits_mean", [&](Tape& t, const ParameterSet& ps) {
         return t.bce_logits_mean(t.row_dot(t.parameter(ps, 0), t.parameter(ps, 3)), labels, 1e-7);
       }},
      {"mse_mean", [&](Tape& t, const ParameterSet& ps) {
         return t.mse_mean(t.row_dot(t.parameter(ps, 0), t.parameter(ps, 3)), targets);
       }},
  };
  for (const auto& [name, f] : cases) {
    EXPECT_LT(gradient_error(p, f), 1e-4) << name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 100));

TEST(Tape, BceOnLogitsMatchesBceOnProbabilities) {
  const std::vector<double> y{1, 0, 1, 0, 1};
  Tape t;
  Var z = t.constant(Matrix(5, 1, {-3.0, -0.2, 0.0, 1.5, 7.0}));
  EXPECT_NEAR(t.value(t.bce_logits_mean(z, y, 1e-7))[0], t.value(t.bce_mean(t.sigmoid(z), y, 1e-7))[0], 1e-14);
  // Outside the clamp both give the bound and no gradient.
  Var far = t.constant(Matrix(2, 1, {40.0, -40.0}));
  const std::vector<double> wrong{0, 1};
  EXPECT_NEAR(t.value(t.bce_logits_mean(far, wrong, 1e-7))[0], -std::log(1e-7), 1e-8);
}

TEST(Tape, BceOnLogitsKeepsPrecisionWhenSaturated) {
  // dL/dz = sigmoid(z) - y; for y = 1 at z = 15 that is -1 / (1 + e^15).
  ParameterSet ps;
  ps.add("z", Matrix(1, 1, 15.0));
  Tape t;
  const auto g = t.backward(t.bce_logits_mean(t.parameter(ps, 0), std::vector<double>{1.0}, 1e-7), ps);
  const double want = -1.0 / (1.0 + std::exp(15.0));
  EXPECT_NEAR(g[0][0] / want, 1.0, 1e-12);
}
