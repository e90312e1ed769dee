#pragma once

// Estimation error modulo signed column permutations of C, plus multi-run
// summaries.

#include "svar/core.hpp"
#include "svar/em.hpp"

#include <string>
#include <vector>

namespace svar {

/// Column c of C P is sign[c] times column perm[c] of C.
struct SignedPermutation {
  std::vector<int> perm;
  std::vector<int> sign;

  static SignedPermutation identity(int p);
  MatrixXd matrix() const;
  bool operator==(const SignedPermutation&) const = default;
};

struct Alignment {
  SignedPermutation P;
  MatrixXd aligned;  // C_hat P
  double error = 0.0;
};

/// Exhaustive search over all p! 2^p signed permutations for the one
/// minimizing ||C_hat P - C_true||_F. Throws CapacityError for p > 8.
Alignment align(const MatrixXd& C_hat, const MatrixXd& C_true);

/// Re-expresses a fitted model under C -> C P, permuting and sign-flipping
/// the shock laws so that the implied process is unchanged.
Theta apply_signed_permutation(const Theta& theta, const SignedPermutation& P);

struct RunErrors {
  MatrixXd A_hat;
  MatrixXd C_hat;  // aligned and expressed on the truth's shock scale
  MatrixXd A_err;  // absolute
  MatrixXd C_err;
  SignedPermutation P;
};

/// Columns of both C matrices are put on unit shock variance before
/// alignment; the aligned estimate is then rescaled to the truth's shock
/// variances. A is compared as is, or up to column signs when `symmetric`.
RunErrors param_errors(const Theta& fit, const SvarModel& truth, bool symmetric = false);
RunErrors param_errors(const MatrixXd& A_hat, const MatrixXd& C_hat,
                       const std::vector<MixtureSpec>& shocks_hat, const SvarModel& truth,
                       bool symmetric = false);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<int> counts;
};

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins = 30);

struct EntrySummary {
  std::string matrix;  // "A" or "C"
  int row = 0;
  int col = 0;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double mean_abs_error = 0.0;
  double median_abs_error = 0.0;
  double standard_error = 0.0;  // of the mean absolute error; 0 for one run
  Histogram hist;               // of the estimates over truth +- 1
};

struct RunSummary {
  std::vector<RunErrors> runs;
  std::vector<EntrySummary> entries;
  double mean_abs_error_A = 0.0;
  double mean_abs_error_C = 0.0;
  double median_abs_error_A = 0.0;
  double median_abs_error_C = 0.0;
  // metadata
  int k = 1;
  int T = 0;
  double max_eigenvalue = 0.0;
  double eigen_scale = 1.0;
};

RunSummary summarize(const std::vector<RunErrors>& runs, const SvarModel& truth, int bins = 30);

double median(std::vector<double> values);

/// run,matrix,row,col,truth,raw,aligned,abs_error rows (header included).
std::string errors_csv(const std::vector<RunErrors>& runs, const std::vector<Theta>& raw,
                       const SvarModel& truth);

/// One row per entry with summary statistics (header included).
std::string summary_csv(const RunSummary& summary);

}  // namespace svar
