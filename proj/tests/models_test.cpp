#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "equiproc/embedding.hpp"
#include "equiproc/mean_oracle.hpp"
#include "equiproc/models.hpp"
#include "equiproc/numerics.hpp"

using namespace equiproc;

namespace {

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == v) ++i;
    while (j < b.size() && b[j] == v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST(SimulatePath, Ar1StationaryVariance) {
  const auto path = simulate_path(ModelSpec::ar1(0.5, 1.0), {1, 0}, 1000000, 2000);
  const double var = sample_variance(path.data());
  EXPECT_NEAR(var, 4.0 / 3.0, 0.01 * 4.0 / 3.0);
}

TEST(SimulatePath, MemorylessAr1IsScaledInnovations) {
  const StreamKey key{2, 5};
  const std::size_t n = 300, burn = 50;
  const auto path = simulate_path(ModelSpec::ar1(0.0, 2.0), key, n, burn);
  const auto draws = derive_stream(InnovationSpec::normal(), key).draw(burn + n);
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(path(i, 0), 2.0 * draws[burn + i]);
}

TEST(SimulatePath, GarchUnconditionalVariance) {
  const auto path = simulate_path(ModelSpec::garch11(0.1, 0.1, 0.8), {3, 0}, 100000);
  std::vector<double> sq;
  for (double x : path.data()) sq.push_back(x * x);
  // Squared GARCH series are dependent: use batch means for the SE.
  const std::size_t batches = 100, len = sq.size() / batches;
  MomentAccumulator acc;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += sq[i];
    acc.add(s / len);
  }
  const auto est = acc.estimate();
  EXPECT_LE(std::abs(est.mean - 1.0), 3.0 * est.se) << est.mean << " se " << est.se;
}

TEST(SimulatePath, Deterministic) {
  const auto m = ModelSpec::rcar1(0.5, 0.3);
  EXPECT_EQ(simulate_path(m, {9, 1}, 500), simulate_path(m, {9, 1}, 500));
}

TEST(SimulatePath, StationaryAcrossWindows) {
  const auto path = simulate_path(ModelSpec::ar1(0.5, 1.0), {4, 0}, 400000);
  const auto& v = path.data();
  auto window_var = [&](std::size_t lo, std::size_t hi) {
    return sample_variance(std::span<const double>(v.data() + lo, hi - lo));
  };
  // Var of a sample variance of a Gaussian AR1 is about 2 s^4 (1+phi^2)/(1-phi^2) / n.
  const double s2 = 4.0 / 3.0, n = 200000.0;
  const double se = std::sqrt(2.0 * 2.0 * s2 * s2 * (1.25 / 0.75) / n);
  EXPECT_LE(std::abs(window_var(0, 200000) - window_var(200000, 400000)), 4.0 * se);
}

TEST(SimulatePath, BurnInDoublingIsStable) {
  const auto check = burn_in_doubling_check(ModelSpec::garch11(0.1, 0.1, 0.8), {5, 0}, 200000, 2000);
  EXPECT_TRUE(check.stable) << check.relative_change;
}

TEST(ValidateModel, RejectsNonContracting) {
  EXPECT_THROW(simulate_path(ModelSpec::ar1(1.0), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::ar1(0.5, 0.0), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::garch11(0.1, 0.3, 0.7), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::arch1(0.5, 1.2), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::qar1(0.0, 1.0, 0.5, 0.6), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::rcar1(0.9, 0.5), {0, 0}, 10), ValidationError);
  EXPECT_THROW(simulate_path(ModelSpec::ar1(0.5), {0, 0}, 0), ValidationError);
  auto q = ModelSpec::qar1(-1.0, 2.0, 0.2, 0.5);
  q.innovation = InnovationSpec::normal();
  EXPECT_THROW(validate_model(q), ValidationError);
  // Stricter q shrinks the admissible region.
  auto g = ModelSpec::garch11(0.1, 0.25, 0.7);
  EXPECT_NO_THROW(validate_model(g));
  g.q = 4.0;
  EXPECT_THROW(validate_model(g), ValidationError);
}

TEST(SimulateCoupled, Ar1ExactContraction) {
  const auto m = ModelSpec::ar1(0.5, 1.0);
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::uint64_t r = 0; r < 200; ++r) {
    const auto cp = simulate_coupled(m, 17, r, 40, 2000);
    const double d0 = cp.perturbed_initial.x - cp.original_initial.x;
    for (std::size_t i = 0; i < cp.n; ++i) {
      const double n = static_cast<double>(i + 1);
      const double d = cp.perturbed(i, 0) - cp.original(i, 0);
      ASSERT_NEAR(d, std::pow(0.5, n) * d0, 10.0 * eps * n) << "rep " << r << " lag " << n;
    }
  }
}

TEST(SimulateCoupled, MarginalsAgree) {
  const std::size_t reps = 10000;
  for (const auto& m : {ModelSpec::arch1(0.5, 0.4), ModelSpec::ar1(0.5, 1.0)}) {
    std::vector<double> a(reps), b(reps);
    for (std::uint64_t r = 0; r < reps; ++r) {
      const auto cp = simulate_coupled(m, 23, r, 3, 500);
      a[r] = cp.original(2, 0);
      b[r] = cp.perturbed(2, 0);
    }
    const double crit = 1.628 * std::sqrt(2.0 / reps);
    EXPECT_LE(ks_two_sample(a, b), crit) << model_name(m);
  }
}

TEST(SimulateCoupled, ArchDifferenceShrinks) {
  const auto m = ModelSpec::arch1(0.5, 0.4);
  double first = 0.0, last = 0.0;
  for (std::uint64_t r = 0; r < 10000; ++r) {
    const auto cp = simulate_coupled(m, 29, r, 30, 500);
    first += std::abs(cp.perturbed(0, 0) - cp.original(0, 0));
    last += std::abs(cp.perturbed(29, 0) - cp.original(29, 0));
  }
  EXPECT_LT(last, first);
}

TEST(SimulateCoupled, EqualPresampleStatesGiveIdenticalPaths) {
  for (const auto& m : {ModelSpec::garch11(0.1, 0.1, 0.8), ModelSpec::rcar1(0.5, 0.3),
                        ModelSpec::qar1(-1.0, 2.0, 0.2, 0.5)}) {
    const StreamKey key{31, 4};
    InnovationStream stream(m.innovation, key);
    const ModelState s = burn_in_state(m, stream, 300);
    Matrix a(100, 1), b(100, 1);
    propagate_coupled(m, s, s, stream, a, b);
    EXPECT_EQ(a, b) << model_name(m);
  }
}

TEST(SimulateCoupled, OriginalPathMatchesSimulatePath) {
  const auto m = ModelSpec::garch11(0.1, 0.1, 0.8);
  const auto cp = simulate_coupled(m, StreamKey{37, 2}, 200, 1000);
  EXPECT_EQ(cp.original, simulate_path(m, {37, 2}, 200, 1000));
}

TEST(Embed, LagPairRows) {
  const Matrix path = column_matrix(std::vector<double>{1, 2, 3});
  const Matrix rows = embed(path, LagPair{1});
  ASSERT_EQ(rows.rows(), 2u);
  EXPECT_EQ(rows(0, 0), 1);
  EXPECT_EQ(rows(0, 1), 2);
  EXPECT_EQ(rows(1, 0), 2);
  EXPECT_EQ(rows(1, 1), 3);
  const Matrix same = embed(path, LagPair{0});
  ASSERT_EQ(same.rows(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(same(i, 0), same(i, 1));
  EXPECT_THROW(embed(path, LagPair{3}), ValidationError);
}

TEST(Embed, CensoredTripleConcatenates) {
  const CensoredTriple spec{0.5, 2.0, 1.0, 1.0, 1.0};
  const Matrix x = column_matrix(std::vector<double>{0.3, -1.0});
  const Matrix u = column_matrix(std::vector<double>{0.1, 0.2});
  const Matrix v = column_matrix(std::vector<double>{-0.4, 0.7});
  const std::vector<Matrix> aux{u, v};
  const Matrix rows = embed(std::span<const Matrix>(&x, 1), aux, spec);
  ASSERT_EQ(rows.rows(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    const double z = std::tanh(x(i, 0));
    EXPECT_DOUBLE_EQ(rows(i, 0), 0.5 + 2.0 * z + u(i, 0));
    EXPECT_DOUBLE_EQ(rows(i, 1), 1.0 + v(i, 0));
    EXPECT_EQ(rows(i, 2), 1.0);
    EXPECT_DOUBLE_EQ(rows(i, 3), z);
  }
  const std::size_t c = 1, w = 3;
  EXPECT_TRUE(declares_conditional_independence(spec, 0, {&c, 1}, {&w, 1}));
  EXPECT_FALSE(declares_conditional_independence(LagPair{1}, 0, {&c, 1}, {&w, 1}));
}

TEST(Embed, CoupledLagPairUsesHistory) {
  const auto m = ModelSpec::ar1(0.5, 1.0);
  const auto s = simulate_coupled_embedded(m, LagPair{2}, {41, 3}, 50, 500);
  const auto cp = simulate_coupled(m, StreamKey{41, 3}.component(0), 50, 500, 2);
  ASSERT_EQ(s.original.rows(), 50u);
  EXPECT_EQ(s.original(0, 0), cp.original_history(0, 0));
  EXPECT_EQ(s.perturbed(1, 0), cp.perturbed_history(1, 0));
  for (std::size_t t = 2; t < 50; ++t) {
    EXPECT_EQ(s.original(t, 0), cp.original(t - 2, 0));
    EXPECT_EQ(s.perturbed(t, 1), cp.perturbed(t, 0));
  }
}

TEST(Embed, CoupledBivariateShareInnovations) {
  const auto s = simulate_coupled_embedded(ModelSpec::ar1(0.0, 1.0), BivariateCopy{}, {43, 0}, 20, 100);
  EXPECT_EQ(s.original, s.perturbed);
}

TEST(MeanOracle, ClosedFormAr1) {
  const auto m = ModelSpec::ar1(0.5, 1.0);
  const auto ind = FunctionFamily::scalar(IndicatorFamily{}, -3, 3);
  MeanOracle oracle(m, IdentityEmbedding{}, ind);
  EXPECT_TRUE(oracle.exact());
  EXPECT_DOUBLE_EQ(oracle({0.0}), 0.5);
  EXPECT_NEAR(oracle({1.0}), normal_cdf(1.0 / std::sqrt(4.0 / 3.0)), 1e-12);
  EXPECT_NEAR(oracle({1.0}), 0.80676, 1e-5);
}

TEST(MeanOracle, QuantilogramNullIsZero) {
  const auto q = FunctionFamily::scalar(QuantilogramFamily{0.1}, -3, 3);
  const double theta = normal_quantile(0.1);
  EXPECT_NEAR(stationary_mean_oracle(ModelSpec::iid_normal(), LagPair{1}, q, {theta}), 0.0, 1e-12);
}

TEST(MeanOracle, SimulatedMatchesClosedForm) {
  // Student-t AR1 has no closed form; its indicator mean at 0 is 1/2 by symmetry.
  const auto m = ModelSpec::ar1(0.5, 1.0, InnovationSpec::student(5.0));
  const auto ind = FunctionFamily::scalar(IndicatorFamily{}, -3, 3);
  MeanOracle oracle(m, IdentityEmbedding{}, ind, 400000);
  EXPECT_FALSE(oracle.exact());
  EXPECT_NEAR(oracle({0.0}), 0.5, 0.006);
  const std::vector<Theta> ts{{0.0}, {1.0}};
  const auto both = oracle.means(ts);
  EXPECT_EQ(both[0], oracle({0.0}));
  EXPECT_THROW(MeanOracle(m, IdentityEmbedding{}, ind, 1000), ValidationError);
}
