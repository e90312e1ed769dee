#pragma once

// Exact EM for (A, W = C^{-1}, mixture shocks) from subsampled or
// mixed-frequency observations.
//
// The E-step enumerates every mixture assignment of the shock slots inside a
// block; given an assignment the block is linear-Gaussian and is smoothed
// exactly. The M-step alternates closed-form updates of A and the mixture
// with a damped Newton update of W.

#include "svar/core.hpp"
#include "svar/kalman.hpp"
#include "svar/sampling.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace svar {

enum class ConstraintKind { Free, Identity, Mask };

/// Structure imposed on C. Mask patterns are applied to W; a pattern whose
/// off-diagonal graph is acyclic and transitively closed is preserved by
/// inversion, so C and W share it.
struct StructuralConstraint {
  ConstraintKind kind = ConstraintKind::Free;
  MaskMatrix mask;  // p x p, true where the entry is free

  static StructuralConstraint free() { return {}; }
  static StructuralConstraint identity() { return {ConstraintKind::Identity, {}}; }
  static StructuralConstraint pattern(MaskMatrix m) { return {ConstraintKind::Mask, std::move(m)}; }

  /// Identity fixes C entirely, so all shock variances stay free; otherwise
  /// the first component variance of every series is pinned to one.
  bool scale_fixed() const { return kind != ConstraintKind::Identity; }
  bool is_free(int row, int col) const;
  int free_count(int p) const;
  /// Throws ArgumentError for malformed masks.
  void check(int p) const;
  std::string describe() const;
};

struct Theta {
  MatrixXd A;
  MatrixXd W;
  std::vector<MixtureSpec> shocks;

  int p() const { return static_cast<int>(A.rows()); }
  int m() const { return shocks.empty() ? 0 : shocks.front().components(); }
  MatrixXd C() const;
  SvarModel model() const;
  static Theta from_model(const SvarModel& model);
};

/// Rescales shock j by its first component's standard deviation so that
/// sigma2_j1 = 1, moving the scale into row j of W. Likelihood invariant.
void impose_scale(Theta& theta);

/// Expected sufficient statistics aggregated over time. Entry (j, i) is
/// stored at index j * m + i.
struct ExpectedStats {
  int p = 0;
  int m = 0;
  double transitions = 0.0;
  std::vector<double> count;           // sum_t E(z)
  std::vector<VectorXd> sum_x;         // sum_t E(z x_t)
  std::vector<VectorXd> sum_prev;      // sum_t E(z x_{t-1})
  std::vector<MatrixXd> sum_xx;        // sum_t E(z x_t x_t')
  std::vector<MatrixXd> sum_prev_prev; // sum_t E(z x_{t-1} x_{t-1}')
  std::vector<MatrixXd> sum_x_prev;    // sum_t E(z x_t x_{t-1}')
  /// Per shock time responsibilities E(z_tji): rows follow `times`,
  /// column j * m + i.
  MatrixXd responsibilities;
  std::vector<long> times;

  ExpectedStats() = default;
  ExpectedStats(int p, int m);
  int index(int j, int i) const { return j * m + i; }
  ExpectedStats& operator+=(const ExpectedStats& other);

  /// sum E(z u u') and sum E(z u) for the residual u_t = x_t - A x_{t-1}.
  MatrixXd residual_second(int j, int i, const MatrixXd& A) const;
  VectorXd residual_first(int j, int i, const MatrixXd& A) const;
};

struct EmConfig {
  int max_iterations = 1000;
  double tolerance = 1e-6;  // relative log-likelihood change
  int restarts = 1;
  int components = 2;
  bool overrelax = true;
  double eta_growth = 1.1;
  double eta_max = 100.0;
  double newton_tolerance = 1e-8;  // gradient sup-norm relative to transitions
  int newton_max_steps = 50;
  int inner_cycles = 5;
  double inner_tolerance = 1e-8;
  double variance_floor = 1e-8;
  double assignment_budget = 1048576.0;  // 2^20
  std::uint64_t seed = 0;
  int threads = 1;
  StructuralConstraint constraint;

  void check() const;
};

/// Random-access view of all m^(n p) assignments of an n-step block.
class AssignmentRange {
 public:
  AssignmentRange(int length, int p, int m, double budget);
  std::size_t size() const { return count_; }
  Assignment operator[](std::size_t index) const;

 private:
  int length_, p_, m_;
  std::size_t count_;
};

AssignmentRange enumerate_assignments(const Block& block, int m, int p,
                                      double budget = 1048576.0);

struct EStepResult {
  ExpectedStats stats;
  double loglik = 0.0;
};

EStepResult e_step(const Theta& theta, const ObservationSet& obs,
                   double assignment_budget = 1048576.0);

/// Expected complete-data log-likelihood given the statistics.
double expected_complete_loglik(const Theta& theta, const ExpectedStats& stats);

MatrixXd m_step_A(const ExpectedStats& stats, const Theta& theta);

/// Closed-form weight, mean and variance updates followed by the scale
/// convention when `scale_fixed`. Throws DegenerateComponentError when a
/// component's responsibility mass is below 1e-8.
Theta m_step_mixture(const ExpectedStats& stats, const Theta& theta,
                     bool scale_fixed = true, double variance_floor = 1e-8);

/// Gradient of expected_complete_loglik with respect to W.
MatrixXd w_gradient(const Theta& theta, const ExpectedStats& stats);

/// Hessian with respect to vec(W) (column-major).
MatrixXd w_hessian(const Theta& theta, const ExpectedStats& stats);

struct WStepResult {
  MatrixXd W;
  int steps = 0;
  bool stalled = false;
};

WStepResult m_step_W(const Theta& theta, const ExpectedStats& stats,
                     const EmConfig& config);

/// One full M-step: coordinate cycles over A, W and the mixture.
Theta m_step(const Theta& theta, const ExpectedStats& stats, const EmConfig& config);

enum class StepKind { Initial, Plain, Extrapolated, Reseed };

struct RestartSummary {
  int index = 0;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;
  bool warm_start = false;
};

struct FitResult {
  Theta theta;
  double loglik = 0.0;
  std::vector<double> trace;  // observed log-likelihood of accepted iterates
  std::vector<StepKind> steps;
  int iterations = 0;
  int reseeds = 0;
  bool converged = false;
  bool failed = false;
  std::string message;
  int restart = 0;
  long observed_count = 0;
  std::vector<RestartSummary> restarts;
  double seconds = 0.0;
};

FitResult em_fit(const Theta& init, const ObservationSet& obs, const EmConfig& config);

/// Per-restart generator: seeded from (root seed, restart index).
std::mt19937_64 restart_rng(std::uint64_t root_seed, std::uint64_t restart);

/// Random initialization for one restart.
Theta random_init(const ObservationSet& obs, const EmConfig& config, std::mt19937_64& rng);

/// Runs `config.restarts` random restarts plus one run per warm start and
/// returns the run with the highest observed log-likelihood.
FitResult multi_start_fit(const ObservationSet& obs, const EmConfig& config,
                          const std::vector<Theta>& warm_starts = {});

/// Projects theta onto a constraint: zeroes fixed W entries, resets W for
/// the identity constraint and applies the scale convention when required.
Theta conform(Theta theta, const StructuralConstraint& constraint);

}  // namespace svar
