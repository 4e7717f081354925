// SPDX-License-Identifier: Apache-2.0
#include "gfolds/scaling_laws.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gfolds/errors.hpp"

namespace gfolds::scaling {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw DomainError(std::string(what) + " must be positive and finite, got " +
                      std::to_string(v));
  }
}

// c / x^e evaluated through logarithms so that x up to 1e300 stays finite.
double inverse_power(double c, double x, double e) { return c * std::exp(-e * std::log(x)); }

// Frontier constants: with S = C / 6, N_opt = G S^a and D_opt = S^b / G.
struct Frontier {
  double log_g;
  double a;
  double b;
};

Frontier frontier_of(const UniqueLawParams& p) {
  p.validate();
  const double sum = p.alpha + p.beta;
  return {(std::log(p.alpha * p.A) - std::log(p.beta * p.B)) / sum, p.beta / sum,
          p.alpha / sum};
}

}  // namespace

void UniqueLawParams::validate() const {
  require_positive(A, "A");
  require_positive(B, "B");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  if (!std::isfinite(E)) {
    throw DomainError("E must be finite");
  }
}

void RepeatedLawParams::validate() const {
  as_unique().validate();
  require_positive(R_star_D, "R*_D");
  require_positive(R_star_N, "R*_N");
}

double flops(double n, double d) { return 6.0 * n * d; }

double loss_unique(double n, double d, const UniqueLawParams& p) {
  p.validate();
  require_positive(n, "N");
  require_positive(d, "D");
  return p.E + inverse_power(p.A, n, p.alpha) + inverse_power(p.B, d, p.beta);
}

double effective_data(double unique_data, double epochs, const RepeatedLawParams& p) {
  p.validate();
  require_positive(unique_data, "U_D");
  if (!(epochs >= 0.0) || !std::isfinite(epochs)) {
    throw DomainError("epochs must be non-negative and finite");
  }
  // 1 - exp(-x) as -expm1(-x) keeps precision for few epochs.
  return unique_data + unique_data * p.R_star_D * -std::expm1(-epochs / p.R_star_D);
}

ComputeOptimal compute_optimal(double compute, const UniqueLawParams& p) {
  require_positive(compute, "C");
  const Frontier f = frontier_of(p);
  const double log_s = std::log(compute / 6.0);
  ComputeOptimal out;
  out.n_opt = std::exp(f.log_g + f.a * log_s);
  out.d_opt = (compute / 6.0) / out.n_opt;
  return out;
}

double n_opt_for_data(double d, const UniqueLawParams& p) {
  require_positive(d, "D");
  const Frontier f = frontier_of(p);
  const double log_s = (std::log(d) + f.log_g) / f.b;
  return std::exp(f.log_g + f.a * log_s);
}

double d_opt_for_params(double n, const UniqueLawParams& p) {
  require_positive(n, "N");
  const Frontier f = frontier_of(p);
  const double log_s = (std::log(n) - f.log_g) / f.a;
  return std::exp(f.b * log_s - f.log_g);
}

std::string_view branch_name(Branch b) noexcept {
  switch (b) {
    case Branch::kUnder:
      return "under";
    case Branch::kWell:
      return "well";
    case Branch::kOver:
      return "over";
  }
  return "under";
}

Branch classify(double n, double n_opt) noexcept {
  const double rel = n / n_opt - 1.0;
  if (std::abs(rel) <= kWellTolerance) {
    return Branch::kWell;
  }
  return rel < 0.0 ? Branch::kUnder : Branch::kOver;
}

RepeatedTerms repeated_terms(double n, double unique_data, double epochs,
                             const RepeatedLawParams& p, const UniqueLawParams& frontier) {
  p.validate();
  require_positive(n, "N");
  RepeatedTerms t;
  t.d_hat = effective_data(unique_data, epochs, p);
  t.n_opt = n_opt_for_data(unique_data, frontier);
  t.u_n = std::min(n, t.n_opt);
  t.r_n = n / t.u_n - 1.0;
  t.n_hat = t.u_n + t.u_n * p.R_star_N * -std::expm1(-t.r_n / p.R_star_N);
  t.param_term = inverse_power(p.A, t.n_hat, p.alpha);
  t.data_term = inverse_power(p.B, t.d_hat, p.beta);
  t.loss = p.E + t.param_term + t.data_term;
  t.branch = classify(n, t.n_opt);
  return t;
}

double loss_repeated(double n, double unique_data, double epochs, const RepeatedLawParams& p,
                     const UniqueLawParams& frontier) {
  return repeated_terms(n, unique_data, epochs, p, frontier).loss;
}

double bernoulli_gap(double x) {
  // x + expm1(-x) loses every digit to cancellation near zero, where the
  // series x^2/2 - x^3/6 + x^4/24 is exact to rounding.
  if (std::abs(x) < 1e-4) {
    return x * x * (0.5 - x * (1.0 / 6.0 - x / 24.0));
  }
  return x + std::expm1(-x);
}

HalvingAudit data_halving_audit(double n, double unique_data, double epochs,
                                const RepeatedLawParams& p, const UniqueLawParams& frontier) {
  HalvingAudit out;
  out.full = repeated_terms(n, unique_data, epochs, p, frontier);
  out.half = repeated_terms(n, unique_data / 2.0, epochs, p, frontier);
  out.d_hat_ratio = out.full.d_hat / out.half.d_hat;
  out.data_term_ratio = out.half.data_term / out.full.data_term;
  out.half_bernoulli_gap = bernoulli_gap(out.half.r_n / p.R_star_N);
  out.consistent_with_equal_loss = out.half.branch != Branch::kOver;
  if (out.consistent_with_equal_loss) {
    out.verdict = "underparameterized at both runs";
  } else if (out.full.branch == Branch::kUnder) {
    out.verdict = "underparameterized at the full run only";
  } else {
    out.verdict = "well- or overparameterized at the full run";
  }
  return out;
}

}  // namespace gfolds::scaling
