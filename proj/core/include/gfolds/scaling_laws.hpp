// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string_view>

namespace gfolds::scaling {

// L(N, D) = E + A / N^alpha + B / D^beta
struct UniqueLawParams {
  double E = 0.0;
  double A = 0.0;
  double B = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  // Throws DomainError unless A, B, alpha, beta are positive and finite.
  void validate() const;
};

struct RepeatedLawParams {
  double E = 0.0;
  double A = 0.0;
  double B = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double R_star_D = 0.0;
  double R_star_N = 0.0;

  void validate() const;
  UniqueLawParams as_unique() const { return {E, A, B, alpha, beta}; }
};

// Hoffmann et al. single-epoch fit.
inline constexpr UniqueLawParams kChinchilla{1.69, 406.4, 410.7, 0.34, 0.28};
// Muennighoff et al. repeated-data fit.
inline constexpr RepeatedLawParams kMuennighoff{1.88, 523.22, 1480.30, 0.35, 0.35, 15.39, 5.31};

// Training compute of a dense transformer, 6 N D.
double flops(double n, double d);

// Throws DomainError for non-positive N or D.
double loss_unique(double n, double d, const UniqueLawParams& p);

// D_hat = U_D + U_D R*_D (1 - exp(-r / R*_D)). Linear in U_D. Throws
// DomainError for U_D <= 0 or r < 0.
double effective_data(double unique_data, double epochs, const RepeatedLawParams& p);

struct ComputeOptimal {
  double n_opt = 0.0;
  double d_opt = 0.0;
};

// Minimizer of loss_unique on 6 N D = C.
ComputeOptimal compute_optimal(double compute, const UniqueLawParams& p);

// Points on the compute-optimal frontier: the N paired with a given D and
// the D paired with a given N.
double n_opt_for_data(double d, const UniqueLawParams& p);
double d_opt_for_params(double n, const UniqueLawParams& p);

enum class Branch { kUnder, kWell, kOver };
std::string_view branch_name(Branch b) noexcept;

// Relative band around N_opt(U_D) treated as well-parameterized.
inline constexpr double kWellTolerance = 1e-9;

Branch classify(double n, double n_opt) noexcept;

struct RepeatedTerms {
  double n_opt = 0.0;  // N_opt(U_D) on the frontier
  double u_n = 0.0;
  double r_n = 0.0;
  double n_hat = 0.0;
  double d_hat = 0.0;
  double param_term = 0.0;  // A / N_hat^alpha
  double data_term = 0.0;   // B / D_hat^beta
  double loss = 0.0;
  Branch branch = Branch::kUnder;
};

// N_opt(U_D) comes from `frontier`, the single-epoch law the repeated fit is
// built on (Chinchilla unless overridden).
RepeatedTerms repeated_terms(double n, double unique_data, double epochs,
                             const RepeatedLawParams& p,
                             const UniqueLawParams& frontier = kChinchilla);
double loss_repeated(double n, double unique_data, double epochs, const RepeatedLawParams& p,
                     const UniqueLawParams& frontier = kChinchilla);

// x - (1 - exp(-x)); zero only at x = 0.
double bernoulli_gap(double x);

// Compares a run on U_D with a run on U_D / 2 at equal N and epochs.
struct HalvingAudit {
  RepeatedTerms full;
  RepeatedTerms half;
  double d_hat_ratio = 0.0;       // D_hat(U_D) / D_hat(U_D / 2), exactly 2
  double data_term_ratio = 0.0;   // 2^beta
  double half_bernoulli_gap = 0.0;  // bernoulli_gap(R_N / R*_N) of the half run
  // Equal parameter terms need R_N = 0 in the half run, i.e. N no larger
  // than N_opt(U_D / 2) (and then N_opt(U_D) as well).
  bool consistent_with_equal_loss = false;
  std::string_view verdict;
};

HalvingAudit data_halving_audit(double n, double unique_data, double epochs,
                                const RepeatedLawParams& p,
                                const UniqueLawParams& frontier = kChinchilla);

}  // namespace gfolds::scaling
