#pragma once

// Random instances shared by the unit and acceptance suites.

#include "svar/core.hpp"
#include "svar/em.hpp"
#include "svar/kalman.hpp"
#include "svar/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace svar::testing {

inline MatrixXd random_matrix(std::mt19937_64& rng, int r, int c, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = n(rng);
  return M;
}

/// Random mixture with m components, positive weights and variances.
inline MixtureSpec random_mixture(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::normal_distribution<double> n(0.0, 0.7);
  MixtureSpec s;
  s.weights.resize(m);
  s.means.resize(m);
  s.variances.resize(m);
  for (int i = 0; i < m; ++i) {
    s.weights[i] = u(rng);
    s.means[i] = n(rng);
    s.variances[i] = 0.1 + u(rng);
  }
  s.weights /= s.weights.sum();
  return s;
}

/// Stable A with spectral norm `norm`, well-conditioned C.
inline SvarModel random_model(std::mt19937_64& rng, int p, int m, double norm = 0.8) {
  SvarModel model;
  model.A = random_matrix(rng, p, p);
  model.A *= norm / Eigen::JacobiSVD<MatrixXd>(model.A).singularValues()[0];
  model.C = MatrixXd::Identity(p, p) + random_matrix(rng, p, p, 0.3);
  for (int j = 0; j < p; ++j) model.shocks.push_back(random_mixture(rng, m));
  return model;
}

/// Block of `length` steps with fully observed endpoints and a random
/// observation pattern inside. Values come from a simulated path.
inline Block random_block(std::mt19937_64& rng, const SvarModel& model, int length,
                          double observe_prob = 0.4) {
  const int p = model.p();
  const Trajectory tr =
      simulate(model, length + 1, random_matrix(rng, p, 1), static_cast<std::uint64_t>(rng()));
  std::bernoulli_distribution coin(observe_prob);
  Block b;
  b.t0 = 0;
  b.t1 = length;
  for (int s = 0; s <= length; ++s) {
    std::vector<int> obs;
    for (int j = 0; j < p; ++j)
      if (s == 0 || s == length || coin(rng)) obs.push_back(j);
    VectorXd v(static_cast<Eigen::Index>(obs.size()));
    for (std::size_t a = 0; a < obs.size(); ++a) v[a] = tr.X(obs[a], s);
    b.observed.push_back(std::move(obs));
    b.values.push_back(std::move(v));
  }
  return b;
}

inline Assignment random_assignment(std::mt19937_64& rng, int length, int p, int m) {
  std::uniform_int_distribution<int> u(0, m - 1);
  Assignment a(length, p);
  for (int s = 0; s < length; ++s)
    for (int j = 0; j < p; ++j) a(s, j) = u(rng);
  return a;
}

/// Random parameters with the scale convention applied.
inline Theta random_theta(std::mt19937_64& rng, int p, int m) {
  Theta t = Theta::from_model(random_model(rng, p, m));
  impose_scale(t);
  return t;
}

}  // namespace svar::testing

namespace svar::testing {

/// All six statistics of one (j, i) cell, flattened in a fixed order:
/// count, sum_x, sum_prev, sum_xx, sum_prev_prev, sum_x_prev.
inline VectorXd flatten_stats(const ExpectedStats& st) {
  const int p = st.p;
  const int cell = 1 + 2 * p + 3 * p * p;
  VectorXd out(cell * p * st.m);
  Eigen::Index at = 0;
  for (int k = 0; k < p * st.m; ++k) {
    out[at++] = st.count[k];
    for (const VectorXd* v : {&st.sum_x[k], &st.sum_prev[k]})
      for (int a = 0; a < p; ++a) out[at++] = (*v)[a];
    for (const MatrixXd* M : {&st.sum_xx[k], &st.sum_prev_prev[k], &st.sum_x_prev[k]})
      for (Eigen::Index a = 0; a < M->size(); ++a) out[at++] = M->data()[a];
  }
  return out;
}

struct MonteCarloResult {
  VectorXd mean;  // flattened as in flatten_stats
  VectorXd se;
};

/// Samples (z, hidden states) jointly from their posterior given one block:
/// z from prior times the dense Gaussian marginal likelihood, then the hidden
/// coordinates from the dense Gaussian conditional. Returns Monte Carlo means
/// of the per-draw sufficient statistics and their standard errors.
inline MonteCarloResult monte_carlo_block_stats(const Theta& theta, const Block& b, long draws,
                                                std::uint64_t seed) {
  const SvarModel model = theta.model();
  const int p = theta.p(), m = theta.m(), n = b.length();
  const int dim = n * p;
  std::vector<int> obs_idx, hid_idx;
  VectorXd y;
  {
    std::vector<double> yy;
    for (int s = 1; s <= n; ++s) {
      std::vector<bool> seen(p, false);
      for (std::size_t a = 0; a < b.observed[s].size(); ++a) {
        seen[b.observed[s][a]] = true;
        obs_idx.push_back((s - 1) * p + b.observed[s][a]);
        yy.push_back(b.values[s][static_cast<Eigen::Index>(a)]);
      }
      for (int j = 0; j < p; ++j)
        if (!seen[j]) hid_idx.push_back((s - 1) * p + j);
    }
    y = Eigen::Map<VectorXd>(yy.data(), static_cast<Eigen::Index>(yy.size()));
  }
  const int no = static_cast<int>(obs_idx.size()), nh = static_cast<int>(hid_idx.size());

  long total = 1;
  for (int i = 0; i < n * p; ++i) total *= m;
  std::vector<double> logw(total);
  std::vector<VectorXd> cmean(total);
  std::vector<MatrixXd> cchol(total);
  std::vector<Assignment> zs(total);
  for (long a = 0; a < total; ++a) {
    Assignment z(n, p);
    long code = a;
    double lp = 0.0;
    for (int s = 0; s < n; ++s)
      for (int j = 0; j < p; ++j) {
        z(s, j) = static_cast<int>(code % m);
        code /= m;
        lp += std::log(theta.shocks[j].weights[z(s, j)]);
      }
    // Unrolled prior of (x_1, ..., x_n) given x_0 and z.
    VectorXd mu(dim);
    MatrixXd Sigma = MatrixXd::Zero(dim, dim);
    VectorXd x = b.values.front();
    MatrixXd cov = MatrixXd::Zero(p, p);
    std::vector<MatrixXd> covs;
    for (int s = 1; s <= n; ++s) {
      VectorXd mus(p), vars(p);
      for (int j = 0; j < p; ++j) {
        mus[j] = theta.shocks[j].means[z(s - 1, j)];
        vars[j] = theta.shocks[j].variances[z(s - 1, j)];
      }
      x = model.A * x + model.C * mus;
      cov = model.A * cov * model.A.transpose() + model.C * vars.asDiagonal() * model.C.transpose();
      mu.segment((s - 1) * p, p) = x;
      Sigma.block((s - 1) * p, (s - 1) * p, p, p) = cov;
      covs.push_back(cov);
    }
    for (int s = 1; s <= n; ++s)
      for (int r = s + 1; r <= n; ++r) {
        MatrixXd Ar = MatrixXd::Identity(p, p);
        for (int q = s; q < r; ++q) Ar = model.A * Ar;
        Sigma.block((r - 1) * p, (s - 1) * p, p, p) = Ar * covs[s - 1];
        Sigma.block((s - 1) * p, (r - 1) * p, p, p) = (Ar * covs[s - 1]).transpose();
      }
    MatrixXd Soo(no, no), Sho(nh, no), Shh(nh, nh);
    VectorXd r(no);
    for (int i = 0; i < no; ++i) {
      r[i] = y[i] - mu[obs_idx[i]];
      for (int k = 0; k < no; ++k) Soo(i, k) = Sigma(obs_idx[i], obs_idx[k]);
      for (int k = 0; k < nh; ++k) Sho(k, i) = Sigma(hid_idx[k], obs_idx[i]);
    }
    for (int i = 0; i < nh; ++i)
      for (int k = 0; k < nh; ++k) Shh(i, k) = Sigma(hid_idx[i], hid_idx[k]);
    Eigen::LDLT<MatrixXd> ldlt(Soo);
    const VectorXd alpha = ldlt.solve(r);
    const double logdet = ldlt.vectorD().array().log().sum();
    logw[a] = lp - 0.5 * (r.dot(alpha) + logdet + no * std::log(2.0 * M_PI));
    VectorXd full = mu;
    for (int i = 0; i < no; ++i) full[obs_idx[i]] = y[i];
    const VectorXd hm = Sho * alpha;
    for (int i = 0; i < nh; ++i) full[hid_idx[i]] += hm[i];
    cmean[a] = full;
    MatrixXd hc = Shh - Sho * ldlt.solve(Sho.transpose());
    hc = 0.5 * (hc + hc.transpose());
    cchol[a] = nh ? MatrixXd(Eigen::LLT<MatrixXd>(hc).matrixL()) : MatrixXd(0, 0);
    zs[a] = z;
  }
  const double hi = *std::max_element(logw.begin(), logw.end());
  std::vector<double> w(total);
  for (long a = 0; a < total; ++a) w[a] = std::exp(logw[a] - hi);

  std::mt19937_64 rng(seed);
  std::discrete_distribution<long> pick(w.begin(), w.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  ExpectedStats probe(p, m);
  const Eigen::Index len = flatten_stats(probe).size();
  VectorXd sum = VectorXd::Zero(len), sumsq = VectorXd::Zero(len);
  VectorXd g(nh);
  for (long d = 0; d < draws; ++d) {
    const long a = pick(rng);
    VectorXd full = cmean[a];
    if (nh) {
      for (int i = 0; i < nh; ++i) g[i] = normal(rng);
      const VectorXd h = cchol[a] * g;
      for (int i = 0; i < nh; ++i) full[hid_idx[i]] += h[i];
    }
    ExpectedStats st(p, m);
    for (int s = 1; s <= n; ++s) {
      const VectorXd xs = full.segment((s - 1) * p, p);
      const VectorXd xp = s == 1 ? VectorXd(b.values.front()) : VectorXd(full.segment((s - 2) * p, p));
      for (int j = 0; j < p; ++j) {
        const int k = st.index(j, zs[a](s - 1, j));
        st.count[k] += 1.0;
        st.sum_x[k] += xs;
        st.sum_prev[k] += xp;
        st.sum_xx[k] += xs * xs.transpose();
        st.sum_prev_prev[k] += xp * xp.transpose();
        st.sum_x_prev[k] += xs * xp.transpose();
      }
    }
    const VectorXd f = flatten_stats(st);
    sum += f;
    sumsq += f.cwiseAbs2();
  }
  MonteCarloResult out;
  const double N = static_cast<double>(draws);
  out.mean = sum / N;
  const VectorXd var = (sumsq / N - out.mean.cwiseAbs2()).cwiseMax(0.0) * (N / (N - 1.0));
  out.se = (var / N).cwiseSqrt();
  return out;
}

}  // namespace svar::testing
