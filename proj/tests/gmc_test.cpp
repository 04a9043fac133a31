#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "equiproc/gmc.hpp"

using namespace equiproc;

namespace {

const double kAr1Lipschitz = 1.0 / std::sqrt(2.0 * M_PI * 4.0 / 3.0);

DecayOptions opts(std::size_t last_lag, std::size_t reps, double p = 2.0, std::uint64_t seed = 1) {
  return DecayOptions{lag_range(1, last_lag), p, reps, seed};
}

void expect_all_zero(const DecayReport& r, std::size_t from_lag = 1) {
  for (std::size_t j = 0; j < r.lags.size(); ++j) {
    if (r.lags[j] >= from_lag) {
      EXPECT_EQ(r.estimates[j], 0.0) << "lag " << r.lags[j];
    }
  }
}

void expect_geometric(const DecayReport& r) {
  ASSERT_TRUE(r.fit.has_value()) << r.status;
  EXPECT_LT(r.fit->slope, 0.0);
  EXPECT_GE(r.fit->r_squared, 0.9);
  EXPECT_GT(r.alpha_hat, 0.0);
  EXPECT_LT(r.alpha_hat, 1.0);
}

// Estimates are non-increasing up to 2 combined SEs.
void expect_monotone(const DecayReport& r) {
  for (std::size_t j = 1; j < r.lags.size(); ++j)
    EXPECT_LE(r.estimates[j], r.estimates[j - 1] + 2.0 * std::hypot(r.ses[j], r.ses[j - 1]))
        << "lag " << r.lags[j];
}

}  // namespace

TEST(CouplingNorm, Ar1Rate) {
  const auto r = coupling_norm(ModelSpec::ar1(0.5, 1.0), opts(20, 20000));
  expect_geometric(r);
  EXPECT_GE(r.alpha_hat, 0.45);
  EXPECT_LE(r.alpha_hat, 0.55);
  for (std::size_t j = 0; j < r.lags.size(); ++j) {
    const double oracle = std::pow(0.5, double(r.lags[j])) * std::sqrt(8.0 / 3.0);
    EXPECT_LE(std::abs(r.estimates[j] - oracle), 3.0 * r.ses[j]) << "lag " << r.lags[j];
  }
  expect_monotone(r);
}

TEST(CouplingNorm, MemorylessIsZero) {
  const auto r = coupling_norm(ModelSpec::ar1(0.0, 1.0), opts(5, 1000));
  expect_all_zero(r);
  EXPECT_FALSE(r.fit.has_value());
  EXPECT_EQ(r.status, "decay too fast to resolve");
}

TEST(CouplingNorm, ArchDecays) {
  const auto r = coupling_norm(ModelSpec::arch1(0.5, 0.4), opts(30, 20000, 1.0));
  expect_geometric(r);
  expect_monotone(r);
}

TEST(CouplingNorm, RejectsBadOptions) {
  EXPECT_THROW(coupling_norm(ModelSpec::ar1(0.5), opts(5, 999)), ValidationError);
  EXPECT_THROW(coupling_norm(ModelSpec::ar1(0.5), opts(5, 1000, 0.0)), ValidationError);
  EXPECT_THROW(coupling_norm(ModelSpec::ar1(0.5), DecayOptions{{3, 2}, 2.0, 1000, 1}),
               ValidationError);
  EXPECT_THROW(coupling_norm(ModelSpec::ar1(0.5), DecayOptions{{}, 0.0, 10, 1}),
               AggregateValidationError);
}

TEST(FamilyCouplingNorm, HuberDominatedByCouplingNorm) {
  const auto m = ModelSpec::garch11(0.1, 0.1, 0.8);
  const auto f = FunctionFamily::scalar(HuberFamily{1.345}, -2, 2);
  const auto grid = theta_grid(f, 64);
  const auto o = opts(10, 2000);
  const auto check = family_domination_check(m, IdentityEmbedding{}, f, grid, o);
  EXPECT_EQ(check.checked, 20000u);
  EXPECT_EQ(check.violations, 0u) << check.worst_margin;
  const auto fam = family_coupling_norm(m, IdentityEmbedding{}, f, grid, o);
  const auto base = coupling_norm(m, o);
  for (std::size_t j = 0; j < fam.lags.size(); ++j)
    EXPECT_LE(fam.estimates[j], base.estimates[j] * (1.0 + 1e-12)) << "lag " << fam.lags[j];
}

TEST(FamilyCouplingNorm, QuantilogramIidVanishesBeyondLag) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto r = family_coupling_norm(ModelSpec::iid_normal(), LagPair{1}, f, theta_grid(f, 64),
                                      opts(6, 1000));
  EXPECT_GT(r.estimates[0], 0.0);
  expect_all_zero(r, 2);
}

TEST(FamilyCouplingNorm, QuantilogramAr1Decays) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto r = family_coupling_norm(ModelSpec::ar1(0.5, 1.0), LagPair{1}, f, theta_grid(f, 128),
                                      opts(20, 10000));
  expect_geometric(r);
  expect_monotone(r);
}

TEST(FamilyCouplingNorm, MomentRateDoesNotDependOnP) {
  // For indicator-valued differences ||d||_p^p = P(d != 0) up to constants,
  // so alpha_hat(p)^p estimates one rate for every p.
  const auto f = FunctionFamily::scalar(IndicatorFamily{}, -2, 2);
  const auto grid = theta_grid(f, 128);
  const auto m = ModelSpec::ar1(0.5, 1.0);
  const auto r1 = family_coupling_norm(m, IdentityEmbedding{}, f, grid, opts(20, 10000, 1.0));
  const auto r4 = family_coupling_norm(m, IdentityEmbedding{}, f, grid, opts(20, 10000, 4.0));
  expect_geometric(r1);
  expect_geometric(r4);
  EXPECT_NEAR(r1.alpha_hat, std::pow(r4.alpha_hat, 4.0), 0.1);
  EXPECT_GT(r4.alpha_hat, r1.alpha_hat);
}

TEST(FamilyCouplingNorm, GridRefinementIsConsistent) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto g = grid_refinement_check(ModelSpec::ar1(0.5, 1.0), LagPair{1}, f, 33, opts(8, 2000));
  EXPECT_TRUE(g.consistent);
  for (std::size_t j = 0; j < g.fine.lags.size(); ++j)
    EXPECT_GE(g.fine.estimates[j], g.coarse.estimates[j]);  // nested grids, same draws
}

TEST(FamilyCouplingNorm, RejectsMismatch) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto grid = theta_grid(f, 8);
  EXPECT_THROW(family_coupling_norm(ModelSpec::ar1(0.5), IdentityEmbedding{}, f, grid, opts(3, 1000)),
               ValidationError);
  const std::vector<Theta> outside{{3.0}};
  EXPECT_THROW(family_coupling_norm(ModelSpec::ar1(0.5), LagPair{1}, f, outside, opts(3, 1000)),
               ValidationError);
}

TEST(BracketCouplingNorm, HuberConstantBoundsAreZero) {
  const auto f = FunctionFamily::scalar(HuberFamily{1.0}, -2, 2);
  const auto cover = build_cover(f, 0.1);
  const auto r = bracket_coupling_norm(ModelSpec::ar1(0.5, 1.0), IdentityEmbedding{}, cover,
                                       opts(10, 1000));
  expect_all_zero(r);
}

TEST(BracketCouplingNorm, SingletonCoverIsZero) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, 0.2, 0.2);
  const auto cover = build_cover(f, 0.1);
  ASSERT_EQ(cover.count, 1u);
  const auto r =
      bracket_coupling_norm(ModelSpec::ar1(0.5, 1.0), LagPair{1}, cover, opts(10, 1000));
  expect_all_zero(r);
}

TEST(BracketCouplingNorm, QuantilogramAr1Decays) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto cover = build_cover(f, 0.4, {kAr1Lipschitz});
  const auto r =
      bracket_coupling_norm(ModelSpec::ar1(0.5, 1.0), LagPair{1}, cover, opts(20, 10000));
  expect_geometric(r);
  expect_monotone(r);
}

TEST(IndicatorCoupling, SingleCaseDecays) {
  const IndicatorCouplingSpec spec{};  // U = X, V = 1, lambda in [-1, 1]
  const auto grid = theta_grid(spec.lambda, 256);
  const auto r = indicator_coupling(ModelSpec::ar1(0.5, 1.0), IdentityEmbedding{}, spec, grid,
                                    opts(20, 10000));
  expect_geometric(r);
}

TEST(IndicatorCoupling, IidIsZero) {
  const IndicatorCouplingSpec spec{};
  const auto r = indicator_coupling(ModelSpec::ar1(0.0, 1.0), IdentityEmbedding{}, spec,
                                    theta_grid(spec.lambda, 64), opts(5, 1000));
  expect_all_zero(r);
}

TEST(IndicatorCoupling, StrictAndWeakAgree) {
  IndicatorCouplingSpec strict{};
  IndicatorCouplingSpec weak{};
  weak.strict = false;
  const auto grid = theta_grid(strict.lambda, 64);
  const auto m = ModelSpec::ar1(0.5, 1.0);
  const auto a = indicator_coupling(m, IdentityEmbedding{}, strict, grid, opts(10, 5000));
  const auto b = indicator_coupling(m, IdentityEmbedding{}, weak, grid, opts(10, 5000));
  for (std::size_t j = 0; j < a.lags.size(); ++j)
    EXPECT_LE(std::abs(a.estimates[j] - b.estimates[j]), 3.0 * std::hypot(a.ses[j], b.ses[j]));
}

TEST(IndicatorCoupling, FunctionCaseOnRegressionAugment) {
  // U = Y1, V = (1, Z1) = g(W) with W = Z1.
  IndicatorCouplingSpec spec;
  spec.u = 0;
  spec.v = {VComponent{std::nullopt, 1.0}, VComponent{1}};
  spec.w = {1};
  spec.lambda = ParameterBox{{-1.0, 0.5}, {1.0, 1.5}};
  spec.which = CouplingCase::function_of_w;
  spec.g = GKind::prepend_one;
  const auto grid = theta_grid(spec.lambda, 9);
  const auto r = indicator_coupling(ModelSpec::ar1(0.5, 1.0), RegressionAugment{}, spec, grid,
                                    opts(15, 5000));
  expect_geometric(r);

  spec.g = GKind::identity;
  spec.v = {VComponent{3}};  // Z2 is not a function of Z1
  spec.lambda = ParameterBox{{-1.0}, {1.0}};
  EXPECT_THROW(indicator_coupling(ModelSpec::ar1(0.5, 1.0), RegressionAugment{}, spec,
                                  theta_grid(spec.lambda, 5), opts(3, 1000)),
               ConfigurationError);
}

TEST(IndicatorCoupling, IndependenceCaseNeedsDeclaration) {
  // U = T, V = C, W = z on the censored triple: 1{T < lambda C}.
  IndicatorCouplingSpec spec;
  spec.u = 0;
  spec.v = {VComponent{1}};
  spec.w = {3};
  spec.lambda = ParameterBox{{0.5}, {1.5}};
  spec.which = CouplingCase::conditional_independence;
  const auto grid = theta_grid(spec.lambda, 11);
  const auto r = indicator_coupling(ModelSpec::ar1(0.5, 1.0), CensoredTriple{}, spec, grid,
                                    opts(15, 5000));
  expect_geometric(r);
  spec.w = {2};
  EXPECT_THROW(indicator_coupling(ModelSpec::ar1(0.5, 1.0), CensoredTriple{}, spec, grid,
                                  opts(3, 1000)),
               ValidationError);
  IndicatorCouplingSpec single{};
  single.v = {VComponent{0}};
  EXPECT_THROW(indicator_coupling(ModelSpec::ar1(0.5, 1.0), IdentityEmbedding{}, single, grid,
                                  opts(3, 1000)),
               ValidationError);
}

TEST(Determinism, ThreadCountDoesNotChangeReports) {
  const auto f = FunctionFamily::scalar(QuantilogramFamily{0.1}, -2, 2);
  const auto grid = theta_grid(f, 32);
  set_thread_count(1);
  const auto a = family_coupling_norm(ModelSpec::garch11(0.1, 0.1, 0.8), LagPair{1}, f, grid,
                                      opts(6, 3000));
  set_thread_count(4);
  const auto b = family_coupling_norm(ModelSpec::garch11(0.1, 0.1, 0.8), LagPair{1}, f, grid,
                                      opts(6, 3000));
  set_thread_count(0);
  EXPECT_EQ(a.estimates, b.estimates);
  EXPECT_EQ(a.ses, b.ses);
}
