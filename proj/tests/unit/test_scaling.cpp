// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "gfolds/errors.hpp"
#include "gfolds/rng.hpp"
#include "gfolds/scaling_laws.hpp"

using namespace gfolds;
using namespace gfolds::scaling;

namespace {

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// Log-uniform draw in [lo, hi].
double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
}

}  // namespace

TEST_CASE("unique-data law") {
  CHECK(loss_unique(1, 1, kChinchilla) == doctest::Approx(818.79).epsilon(1e-14));
  // 50-digit evaluation, frozen
  CHECK(std::abs(loss_unique(1e9, 1e9, kChinchilla) - 3.2842537745272592) < 1e-12);
  CHECK(std::abs(loss_unique(1e300, 1e300, kChinchilla) - 1.69) < 1e-12);
  double prev = loss_unique(1e3, 1e3, kChinchilla);
  for (double x = 1e4; x <= 1e15; x *= 10) {
    const double cur = loss_unique(x, x, kChinchilla);
    CHECK(cur < prev);
    CHECK(std::isfinite(cur));
    prev = cur;
  }
  CHECK_THROWS_AS(loss_unique(0, 1, kChinchilla), DomainError);
  CHECK_THROWS_AS(loss_unique(1, -2, kChinchilla), DomainError);
  UniqueLawParams bad = kChinchilla;
  bad.beta = 0;
  CHECK_THROWS_AS(loss_unique(1, 1, bad), DomainError);
  RepeatedLawParams bad_r = kMuennighoff;
  bad_r.R_star_N = -1;
  CHECK_THROWS_AS(bad_r.validate(), DomainError);
}

TEST_CASE("effective data") {
  const auto& p = kMuennighoff;
  CHECK(effective_data(1e9, 0, p) == 1e9);
  CHECK(effective_data(1e9, 1e6, p) == doctest::Approx(1e9 * 16.39).epsilon(1e-12));
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double ud = log_uniform(rng, 1.0, 1e15);
    const double r = rng.uniform() * 100;
    const double full = effective_data(ud, r, p);
    // halving is exact: scaling by a power of two commutes with every step
    CHECK(effective_data(ud / 2, r, p) == full / 2);
    CHECK(effective_data(ud, r + 0.5, p) > full);
    CHECK(full <= ud * (1 + p.R_star_D));
    CHECK(full >= ud);
  }
  CHECK_THROWS_AS(effective_data(1e9, -1, p), DomainError);
  CHECK_THROWS_AS(effective_data(0, 1, p), DomainError);
}

TEST_CASE("compute-optimal frontier") {
  const auto& p = kChinchilla;
  // frozen 50-digit brute-force minima over two nested 200-point grids
  const std::vector<std::pair<double, double>> grid = {{1e15, 7.0198086547499015696},
                                                       {1e18, 3.5352977533284073918},
                                                       {1e21, 2.328882942188514934},
                                                       {1e24, 1.911195421908538543}};
  for (const auto& [c, grid_min] : grid) {
    const auto opt = compute_optimal(c, p);
    CHECK(loss_unique(opt.n_opt, opt.d_opt, p) <= grid_min + 1e-9);
    CHECK(rel_diff(flops(opt.n_opt, opt.d_opt), c) < 1e-14);
  }
  SUBCASE("in-process 200-point grid never wins") {
    for (double c = 1e12; c <= 1e26; c *= 7.3) {
      const auto opt = compute_optimal(c, p);
      const double best = loss_unique(opt.n_opt, opt.d_opt, p);
      const double lo = std::log(1.0);
      const double hi = std::log(c / 6);
      for (int i = 0; i < 200; ++i) {
        const double n = std::exp(lo + (hi - lo) * i / 199.0);
        CHECK(best <= loss_unique(n, c / (6 * n), p) + 1e-9);
      }
    }
  }
  SUBCASE("symmetric exponents give a constant ratio") {
    const UniqueLawParams sym = kMuennighoff.as_unique();
    const auto a = compute_optimal(1e18, sym);
    const auto b = compute_optimal(1e23, sym);
    CHECK(rel_diff(a.n_opt / a.d_opt, b.n_opt / b.d_opt) < 1e-12);
  }
  CHECK_THROWS_AS(compute_optimal(0, p), DomainError);
}

TEST_CASE("frontier inversion") {
  const auto& p = kChinchilla;
  // bisection on the stationarity condition, frozen
  CHECK(rel_diff(d_opt_for_params(1.74e8, p), 5266962454.18758) < 1e-9);
  const double d = d_opt_for_params(1.74e8, p);
  CHECK(d > 2.5e9);
  CHECK(d < 1e10);
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const double n = log_uniform(rng, 1e3, 1e14);
    CHECK(rel_diff(n_opt_for_data(d_opt_for_params(n, p), p), n) < 1e-6);
    const double ud = log_uniform(rng, 1e3, 1e14);
    CHECK(n_opt_for_data(2 * ud, p) > n_opt_for_data(ud, p));
    // the pair sits on the frontier for its own compute budget
    const double dd = d_opt_for_params(n, p);
    const auto opt = compute_optimal(flops(n, dd), p);
    CHECK(rel_diff(opt.n_opt, n) < 1e-9);
  }
  CHECK_THROWS_AS(n_opt_for_data(-1, p), DomainError);
}

TEST_CASE("repeated-data law") {
  const auto& p = kMuennighoff;
  // frozen 50-digit oracle, frontier from the single-epoch constants
  CHECK(std::abs(loss_repeated(1e8, 1e10, 1, p) - 3.0785868587308162) < 1e-12);
  CHECK(std::abs(loss_repeated(1e8, 1e10, 4, p) - 2.98528613230934) < 1e-12);
  CHECK(std::abs(loss_repeated(5e9, 1e10, 4, p) - 2.4585268541245683) < 1e-12);
  CHECK(rel_diff(n_opt_for_data(1e10, kChinchilla), 295020771.562) < 1e-9);

  SUBCASE("underparameterized runs see the plain parameter count") {
    const auto t = repeated_terms(1e8, 1e10, 3, p);
    CHECK(t.branch == Branch::kUnder);
    CHECK(t.r_n == 0);
    CHECK(t.n_hat == 1e8);
  }
  SUBCASE("one epoch differs from the unique law only through D_hat") {
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
      const double ud = log_uniform(rng, 1e6, 1e13);
      const double n = n_opt_for_data(ud, kChinchilla) * (0.01 + 0.9 * rng.uniform());
      const double d_hat = effective_data(ud, 1, p);
      const double adjustment = d_hat / ud - 1;
      CHECK(adjustment == doctest::Approx(p.R_star_D * -std::expm1(-1 / p.R_star_D)));
      CHECK(loss_repeated(n, ud, 1, p) ==
            doctest::Approx(loss_unique(n, d_hat, p.as_unique())).epsilon(1e-14));
      // the extra effective data can only lower the loss at equal constants
      CHECK(loss_repeated(n, ud, 1, p) < loss_unique(n, ud, p.as_unique()));
    }
  }
  SUBCASE("more epochs never hurt") {
    for (double n : {1e7, 1e9, 1e11}) {
      double prev = loss_repeated(n, 1e9, 0, p);
      for (double r = 0.5; r < 64; r *= 2) {
        const double cur = loss_repeated(n, 1e9, r, p);
        CHECK(cur < prev);
        prev = cur;
      }
    }
  }
  SUBCASE("branches") {
    const double nopt = n_opt_for_data(1e10, kChinchilla);
    CHECK(repeated_terms(nopt * 0.5, 1e10, 4, p).branch == Branch::kUnder);
    CHECK(repeated_terms(nopt, 1e10, 4, p).branch == Branch::kWell);
    const auto over = repeated_terms(nopt * 3, 1e10, 4, p);
    CHECK(over.branch == Branch::kOver);
    CHECK(over.u_n == nopt);
    CHECK(over.r_n == doctest::Approx(2.0));
    // excess parameters are worth less than fresh ones
    CHECK(over.n_hat < nopt * 3);
    CHECK(over.n_hat > nopt);
    CHECK(branch_name(Branch::kWell) == "well");
  }
}

TEST_CASE("bernoulli gap") {
  CHECK(bernoulli_gap(0) == 0);
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const double x = 50 * (1 - rng.uniform());  // (0, 50]
    CHECK(bernoulli_gap(x) > 0);
    CHECK(bernoulli_gap(-x) > 0);
  }
  // series branch agrees with the direct form where both are accurate
  CHECK(bernoulli_gap(9.9e-5) == doctest::Approx(9.9e-5 + std::expm1(-9.9e-5)).epsilon(1e-6));
  CHECK(bernoulli_gap(1e-10) == doctest::Approx(5e-21).epsilon(1e-9));
  CHECK(bernoulli_gap(1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("data halving audit") {
  const auto& p = kMuennighoff;
  const double ud = 1e10;
  const double nopt_half = n_opt_for_data(ud / 2, kChinchilla);
  const double nopt_full = n_opt_for_data(ud, kChinchilla);
  CHECK(nopt_half < nopt_full);

  const auto under = data_halving_audit(nopt_half * 0.5, ud, 4, p);
  CHECK(under.d_hat_ratio == 2.0);
  CHECK(under.data_term_ratio == doctest::Approx(std::pow(2.0, p.beta)));
  CHECK(under.full.branch == Branch::kUnder);
  CHECK(under.half.branch == Branch::kUnder);
  CHECK(under.half_bernoulli_gap == 0);
  CHECK(under.full.param_term == under.half.param_term);
  CHECK(under.consistent_with_equal_loss);
  CHECK(under.verdict == "underparameterized at both runs");

  const double between = std::sqrt(nopt_half * nopt_full);
  const auto mixed = data_halving_audit(between, ud, 4, p);
  CHECK(mixed.full.branch == Branch::kUnder);
  CHECK(mixed.half.branch == Branch::kOver);
  CHECK(mixed.half_bernoulli_gap > 0);
  CHECK(mixed.half.param_term > mixed.full.param_term);
  CHECK_FALSE(mixed.consistent_with_equal_loss);
  CHECK(mixed.verdict == "underparameterized at the full run only");

  const auto over = data_halving_audit(nopt_full * 4, ud, 4, p);
  CHECK(over.full.branch == Branch::kOver);
  CHECK(over.full.n_hat > over.half.n_hat);
  CHECK_FALSE(over.consistent_with_equal_loss);
  CHECK(over.verdict == "well- or overparameterized at the full run");
}
