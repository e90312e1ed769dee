#include "svar/kalman.hpp"

#include "svar/error.hpp"

#include <cmath>
#include <numbers>

namespace svar {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

MatrixXd symmetrize(const MatrixXd& M) { return 0.5 * (M + M.transpose()); }

// Forward-backward pass where state means are p x c matrices. With c = 1
// these are ordinary means; with the affine layout each column is the
// coefficient of one entry of the block data vector, and `offset` selects the
// column that carries constants (the shock means).
struct Pass {
  std::vector<MatrixXd> pred_mean, pred_cov, filt_mean, filt_cov;
  std::vector<MatrixXd> whitened;  // L_s^{-1} (y_s - H_s m_s^-), s = 1..n at s
  std::vector<MatrixXd> smooth_mean, smooth_cov, cross;
  double log_norm = 0.0;
};

Pass run(const ConditionalSSM& ssm, const MatrixXd& anchor,
         const std::vector<MatrixXd>& obs, const Eigen::RowVectorXd& offset) {
  const int p = ssm.p();
  const int n = ssm.length();
  const auto c = anchor.cols();
  Pass k;
  k.pred_mean.resize(n + 1);
  k.pred_cov.resize(n + 1);
  k.filt_mean.resize(n + 1);
  k.filt_cov.resize(n + 1);
  k.whitened.resize(n + 1);
  k.filt_mean[0] = anchor;
  k.filt_cov[0] = MatrixXd::Zero(p, p);

  for (int s = 1; s <= n; ++s) {
    MatrixXd m = ssm.A * k.filt_mean[s - 1] + ssm.shock_mean[s - 1] * offset;
    MatrixXd P = symmetrize(ssm.A * k.filt_cov[s - 1] * ssm.A.transpose() + ssm.shock_cov[s - 1]);
    k.pred_mean[s] = m;
    k.pred_cov[s] = P;

    const auto& idx = ssm.observed[s];
    const int r = static_cast<int>(idx.size());
    if (r > 0) {
      MatrixXd S(r, r), PHt(p, r), innov(r, c);
      for (int a = 0; a < r; ++a) {
        PHt.col(a) = P.col(idx[a]);
        innov.row(a) = obs[s].row(a) - m.row(idx[a]);
        for (int b = 0; b < r; ++b) S(a, b) = P(idx[a], idx[b]);
      }
      Eigen::LLT<MatrixXd> llt(S);
      if (llt.info() != Eigen::Success)
        throw NumericalError("singular innovation covariance", s);
      const MatrixXd L = llt.matrixL();
      const double logdet = 2.0 * L.diagonal().array().log().sum();
      if (!std::isfinite(logdet)) throw NumericalError("singular innovation covariance", s);
      k.log_norm -= 0.5 * (logdet + r * kLog2Pi);
      k.whitened[s] = llt.matrixL().solve(innov);

      const MatrixXd K = llt.solve(PHt.transpose()).transpose();  // P H' S^-1
      MatrixXd IKH = MatrixXd::Identity(p, p);
      for (int a = 0; a < r; ++a) IKH.col(idx[a]) -= K.col(a);
      m += K * innov;
      P = symmetrize(IKH * P * IKH.transpose());
      // Observed coordinates are known exactly.
      for (int a = 0; a < r; ++a) {
        m.row(idx[a]) = obs[s].row(a);
        P.row(idx[a]).setZero();
        P.col(idx[a]).setZero();
      }
    } else {
      k.whitened[s] = MatrixXd(0, c);
    }
    k.filt_mean[s] = std::move(m);
    k.filt_cov[s] = std::move(P);
  }

  k.smooth_mean.resize(n + 1);
  k.smooth_cov.resize(n + 1);
  k.cross.assign(n + 1, MatrixXd::Zero(p, p));
  k.smooth_mean[n] = k.filt_mean[n];
  k.smooth_cov[n] = k.filt_cov[n];
  for (int s = n - 1; s >= 0; --s) {
    const MatrixXd& Pf = k.filt_cov[s];
    const MatrixXd& Pn = k.pred_cov[s + 1];
    MatrixXd J;  // P_s A' (P^-_{s+1})^{-1}
    if (Pf.isZero(0.0)) {
      J = MatrixXd::Zero(p, p);
    } else {
      Eigen::LLT<MatrixXd> llt(Pn);
      if (llt.info() != Eigen::Success)
        J = Pn.completeOrthogonalDecomposition().solve(ssm.A * Pf).transpose();
      else
        J = llt.solve(ssm.A * Pf).transpose();
    }
    k.smooth_mean[s] = k.filt_mean[s] + J * (k.smooth_mean[s + 1] - k.pred_mean[s + 1]);
    k.smooth_cov[s] = symmetrize(Pf + J * (k.smooth_cov[s + 1] - Pn) * J.transpose());
    k.cross[s + 1] = k.smooth_cov[s + 1] * J.transpose();
  }
  return k;
}

void check_consistent(const ConditionalSSM& ssm, const Block& block) {
  if (ssm.length() != block.length() ||
      static_cast<int>(ssm.observed.size()) != block.length() + 1)
    throw StructuralError("state-space model and block lengths disagree");
  for (int s = 0; s <= block.length(); ++s)
    if (ssm.observed[s] != block.observed[s])
      throw StructuralError("state-space model and block observation patterns disagree");
}

}  // namespace

ConditionalSSM build_ssm(const SvarModel& model, const Block& block,
                         const Assignment& assignment) {
  model.check_dimensions();
  const int p = model.p();
  const int n = block.length();
  if (assignment.rows() != n || assignment.cols() != p)
    throw StructuralError("assignment does not cover the block's shock slots");
  if (block.observed.front().size() != static_cast<std::size_t>(p))
    throw ArgumentError("block does not begin at a fully observed time");

  ConditionalSSM ssm;
  ssm.A = model.A;
  ssm.observed = block.observed;
  ssm.anchor = block.values.front();
  for (int s = 0; s < n; ++s) {
    VectorXd mu(p), var(p);
    for (int j = 0; j < p; ++j) {
      const int z = assignment(s, j);
      if (z < 0 || z >= model.shocks[j].components())
        throw ArgumentError("assignment component index out of range");
      mu[j] = model.shocks[j].means[z];
      var[j] = model.shocks[j].variances[z];
    }
    ssm.shock_mean.push_back(model.C * mu);
    ssm.shock_cov.push_back(symmetrize(model.C * var.asDiagonal() * model.C.transpose()));
  }
  return ssm;
}

SmoothedMoments filter_smooth(const ConditionalSSM& ssm, const Block& block) {
  check_consistent(ssm, block);
  const int n = ssm.length();
  std::vector<MatrixXd> obs(n + 1);
  for (int s = 0; s <= n; ++s) obs[s] = block.values[s];
  const Pass k = run(ssm, MatrixXd(block.values.front()), obs, Eigen::RowVectorXd::Ones(1));

  SmoothedMoments out;
  out.loglik = k.log_norm;
  for (int s = 1; s <= n; ++s) out.loglik -= 0.5 * k.whitened[s].squaredNorm();
  for (int s = 0; s <= n; ++s) {
    out.mean.push_back(k.smooth_mean[s].col(0));
    out.cov.push_back(k.smooth_cov[s]);
    out.cross.push_back(k.cross[s]);
  }
  return out;
}

SmoothedMoments gaussian_condition_oracle(const ConditionalSSM& ssm,
                                          const Block& block) {
  check_consistent(ssm, block);
  const int p = ssm.p();
  const int n = ssm.length();
  const int dim = n * p;

  // Unrolled prior: x_s = A^s x_0 + sum_{q<=s} A^{s-q} (b_q + w_q).
  VectorXd mu(dim);
  MatrixXd Sigma = MatrixXd::Zero(dim, dim);
  std::vector<MatrixXd> powers{MatrixXd::Identity(p, p)};
  for (int s = 1; s <= n; ++s) powers.push_back(powers.back() * ssm.A);
  VectorXd m = ssm.anchor;
  for (int s = 1; s <= n; ++s) {
    m = ssm.A * m + ssm.shock_mean[s - 1];
    mu.segment((s - 1) * p, p) = m;
  }
  for (int s = 1; s <= n; ++s)
    for (int r = 1; r <= n; ++r) {
      MatrixXd acc = MatrixXd::Zero(p, p);
      for (int q = 1; q <= std::min(s, r); ++q)
        acc += powers[s - q] * ssm.shock_cov[q - 1] * powers[r - q].transpose();
      Sigma.block((s - 1) * p, (r - 1) * p, p, p) = acc;
    }

  std::vector<int> obs_idx, hid_idx;
  std::vector<double> y;
  for (int s = 1; s <= n; ++s) {
    std::vector<bool> seen(p, false);
    for (std::size_t a = 0; a < ssm.observed[s].size(); ++a) {
      const int j = ssm.observed[s][a];
      seen[j] = true;
      obs_idx.push_back((s - 1) * p + j);
      y.push_back(block.values[s][static_cast<Eigen::Index>(a)]);
    }
    for (int j = 0; j < p; ++j)
      if (!seen[j]) hid_idx.push_back((s - 1) * p + j);
  }
  const int no = static_cast<int>(obs_idx.size());
  const int nh = static_cast<int>(hid_idx.size());
  MatrixXd Soo(no, no), Sho(nh, no), Shh(nh, nh);
  VectorXd resid(no);
  for (int a = 0; a < no; ++a) {
    resid[a] = y[a] - mu[obs_idx[a]];
    for (int b = 0; b < no; ++b) Soo(a, b) = Sigma(obs_idx[a], obs_idx[b]);
  }
  for (int a = 0; a < nh; ++a) {
    for (int b = 0; b < no; ++b) Sho(a, b) = Sigma(hid_idx[a], obs_idx[b]);
    for (int b = 0; b < nh; ++b) Shh(a, b) = Sigma(hid_idx[a], hid_idx[b]);
  }
  Eigen::LLT<MatrixXd> llt(Soo);
  if (llt.info() != Eigen::Success)
    throw NumericalError("joint covariance of observed entries is singular");
  const MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();

  SmoothedMoments out;
  out.loglik = -0.5 * (llt.matrixL().solve(resid).squaredNorm() + logdet + no * kLog2Pi);

  VectorXd post_mean = mu;
  MatrixXd post_cov = MatrixXd::Zero(dim, dim);
  const VectorXd hmean = Sho * llt.solve(resid);
  const MatrixXd hcov = Shh - Sho * llt.solve(Sho.transpose());
  for (int a = 0; a < no; ++a) post_mean[obs_idx[a]] = y[a];
  for (int a = 0; a < nh; ++a) {
    post_mean[hid_idx[a]] += hmean[a];
    for (int b = 0; b < nh; ++b) post_cov(hid_idx[a], hid_idx[b]) = hcov(a, b);
  }

  out.mean.push_back(ssm.anchor);
  out.cov.push_back(MatrixXd::Zero(p, p));
  out.cross.push_back(MatrixXd::Zero(p, p));
  for (int s = 1; s <= n; ++s) {
    out.mean.push_back(post_mean.segment((s - 1) * p, p));
    out.cov.push_back(post_cov.block((s - 1) * p, (s - 1) * p, p, p));
    out.cross.push_back(s == 1 ? MatrixXd::Zero(p, p)
                               : MatrixXd(post_cov.block((s - 1) * p, (s - 2) * p, p, p)));
  }
  return out;
}

VectorXd block_data_vector(const Block& block) {
  Eigen::Index dim = 1;
  for (const auto& v : block.values) dim += v.size();
  VectorXd d(dim);
  Eigen::Index at = 0;
  for (const auto& v : block.values) {
    d.segment(at, v.size()) = v;
    at += v.size();
  }
  d[at] = 1.0;
  return d;
}

AffineSmoother compile_smoother(const ConditionalSSM& ssm) {
  const int p = ssm.p();
  const int n = ssm.length();
  if (static_cast<int>(ssm.observed.size()) != n + 1 ||
      ssm.observed.front().size() != static_cast<std::size_t>(p))
    throw StructuralError("compile_smoother: block must begin fully observed");

  Eigen::Index dim = 1;
  for (const auto& o : ssm.observed) dim += static_cast<Eigen::Index>(o.size());
  const Eigen::Index constant = dim - 1;

  std::vector<MatrixXd> obs(n + 1);
  Eigen::Index at = 0;
  for (int s = 0; s <= n; ++s) {
    const auto r = static_cast<Eigen::Index>(ssm.observed[s].size());
    obs[s] = MatrixXd::Zero(r, dim);
    for (Eigen::Index a = 0; a < r; ++a) obs[s](a, at + a) = 1.0;
    at += r;
  }
  Eigen::RowVectorXd offset = Eigen::RowVectorXd::Zero(dim);
  offset[constant] = 1.0;
  MatrixXd anchor = MatrixXd::Zero(p, dim);
  anchor.leftCols(p).setIdentity();

  const Pass k = run(ssm, anchor, obs, offset);

  AffineSmoother out;
  out.p = p;
  out.length = n;
  out.log_norm = k.log_norm;
  out.mean_coef.resize((n + 1) * p, dim);
  Eigen::Index rows = 0;
  for (int s = 1; s <= n; ++s) rows += k.whitened[s].rows();
  out.whitened_coef.resize(rows, dim);
  Eigen::Index row = 0;
  for (int s = 0; s <= n; ++s) {
    out.mean_coef.middleRows(s * p, p) = k.smooth_mean[s];
    if (s > 0) {
      out.whitened_coef.middleRows(row, k.whitened[s].rows()) = k.whitened[s];
      row += k.whitened[s].rows();
    }
    out.cov.push_back(k.smooth_cov[s]);
    out.cross.push_back(k.cross[s]);
  }
  return out;
}

}  // namespace svar
