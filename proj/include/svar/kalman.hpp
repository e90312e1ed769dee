#pragma once

// Conditional linear-Gaussian state-space model of one block for a fixed
// mixture assignment, with an exact-observation Kalman filter, fixed-interval
// smoother and lag-one cross covariances.

#include "svar/core.hpp"
#include "svar/sampling.hpp"

#include <vector>

namespace svar {

/// Component index per shock slot: row s-1 holds time t0+s, column j series j.
using Assignment = MatrixXi;

struct ConditionalSSM {
  MatrixXd A;
  std::vector<VectorXd> shock_mean;  // b_s for s = 1..n, stored at s-1
  std::vector<MatrixXd> shock_cov;   // Q_s for s = 1..n, stored at s-1
  /// observed[s] lists the selected series (rows of H_s) at s = 0..n.
  std::vector<std::vector<int>> observed;
  VectorXd anchor;  // state at s = 0, known exactly

  int p() const { return static_cast<int>(A.rows()); }
  int length() const { return static_cast<int>(shock_mean.size()); }
};

ConditionalSSM build_ssm(const SvarModel& model, const Block& block,
                         const Assignment& assignment);

/// Smoothed moments at s = 0..n. cross[s] = Cov(x_s, x_{s-1} | data) for
/// s >= 1; cross[0] is zero.
struct SmoothedMoments {
  std::vector<VectorXd> mean;
  std::vector<MatrixXd> cov;
  std::vector<MatrixXd> cross;
  double loglik = 0.0;
};

SmoothedMoments filter_smooth(const ConditionalSSM& ssm, const Block& block);

/// Joint-Gaussian conditioning of the whole block by Schur complement.
/// Independent of the recursive filter; intended for small blocks.
SmoothedMoments gaussian_condition_oracle(const ConditionalSSM& ssm,
                                          const Block& block);

/// Smoother compiled for one observation pattern and assignment. Means and
/// whitened innovations are affine in the block data vector
/// d = (anchor, observed values at s = 1..n, 1), so one compiled smoother
/// serves every block sharing the pattern.
struct AffineSmoother {
  int p = 0;
  int length = 0;
  MatrixXd mean_coef;      // (n+1)p x dim(d); rows s*p..s*p+p-1 give mean at s
  MatrixXd whitened_coef;  // (sum r_s) x dim(d)
  std::vector<MatrixXd> cov;    // s = 0..n
  std::vector<MatrixXd> cross;  // s = 0..n
  double log_norm = 0.0;        // -1/2 sum (log det S_s + r_s log 2pi)

  double loglik(const VectorXd& data) const {
    return log_norm - 0.5 * (whitened_coef * data).squaredNorm();
  }
};

/// `ssm.anchor` is ignored; the anchor is taken from the data vector.
AffineSmoother compile_smoother(const ConditionalSSM& ssm);

VectorXd block_data_vector(const Block& block);

}  // namespace svar
