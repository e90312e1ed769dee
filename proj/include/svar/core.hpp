#pragma once

// Model types and simulation for the structural VAR(1) process
//
//     x_t = A x_{t-1} + C e_t,   e_tj ~ sum_i pi_ji N(mu_ji, sigma2_ji)
//
// together with the stacked representations of the process seen through
// subsampling or mixed-frequency observation.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace svar {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

/// Gaussian mixture law of one shock series.
struct MixtureSpec {
  VectorXd weights;
  VectorXd means;
  VectorXd variances;

  int components() const { return static_cast<int>(weights.size()); }
  double mean() const;
  double variance() const;
  double third_central_moment() const;

  /// Throws ArgumentError unless weights are a positive probability vector
  /// (sum within 1e-12) and variances are positive.
  void check() const;
};

/// A standard normal single-component shock.
MixtureSpec standard_normal_shock();

/// Two-component asymmetric shock used throughout the simulation study:
/// pi = (.7, .3), sd = (.2, 1), mu = (sign*.36, -sign*.84).
MixtureSpec asymmetric_shock(double sign = 1.0);

struct SvarModel {
  MatrixXd A;
  MatrixXd C;
  std::vector<MixtureSpec> shocks;

  int p() const { return static_cast<int>(A.rows()); }

  /// Throws StructuralError on inconsistent dimensions.
  void check_dimensions() const;

  /// Diagonal matrix of per-series shock variances.
  MatrixXd shock_variance() const;
};

struct ValidationReport {
  double spectral_radius = 0.0;
  bool stationary = false;
  /// Spectral radius within 1e-10 of one.
  bool stationarity_boundary = false;
  int rank_C = 0;
  bool full_rank = false;
  std::vector<double> shock_mean;
  std::vector<double> shock_variance;
  std::vector<double> shock_third_moment;
  std::vector<bool> shock_asymmetric;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

ValidationReport validate_model(const SvarModel& model);

double spectral_radius(const MatrixXd& A);

/// Exact repeated product; k = 0 gives the identity.
MatrixXd matrix_power(const MatrixXd& A, int k);

struct Trajectory {
  MatrixXd X;  // p x T latent states
  MatrixXi Z;  // T x p component indices, 0-based
  MatrixXd E;  // p x T realized shocks
  std::uint64_t seed = 0;

  int T() const { return static_cast<int>(X.cols()); }
};

/// Simulates T states with X(:,0) = x0 and X(:,t) = A X(:,t-1) + C E(:,t)
/// for t >= 1. Deterministic given the seed.
Trajectory simulate(const SvarModel& model, int T, const VectorXd& x0,
                    std::uint64_t seed);

/// Runs `burn_in` discarded steps from the origin, then simulates T states.
Trajectory simulate_stationary(const SvarModel& model, int T,
                               std::uint64_t seed, int burn_in = 200);

/// Lagged-coefficient and shock-loading matrices of the observed process,
/// x_t = F (x_{t-1}, ..., x_{t-k*}) + L (e_t, ..., e_{t-k*+1}).
struct StackedRepresentation {
  MatrixXd F;  // p x (k* p)
  MatrixXd L;  // p x (k* p)
  int k_star = 1;
};

StackedRepresentation build_subsampled_repr(const SvarModel& model, int k);

struct SamplingScheme;

/// Unrolls the mixed-frequency recursion backwards from a fully observed
/// time `t_anchor` (0-based) over k* = lcm(rates) steps.
StackedRepresentation build_mixed_freq_repr(const SvarModel& model,
                                            const SamplingScheme& scheme,
                                            long t_anchor);

/// L (I_k kron Lambda) L^T with Lambda the diagonal of mixture variances.
MatrixXd subsampled_error_covariance(const SvarModel& model, int k);

/// Scales A so that its spectral radius equals `target`; returns the factor.
double scale_to_spectral_radius(SvarModel& model, double target);

}  // namespace svar
