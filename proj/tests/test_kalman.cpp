#include "svar/error.hpp"
#include "svar/kalman.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace svar;
using namespace svar::testing;

namespace {

double log_normal_density(const VectorXd& x, const VectorXd& mean, const MatrixXd& cov) {
  const Eigen::LLT<MatrixXd> llt(cov);
  const VectorXd z = llt.matrixL().solve(x - mean);
  const double logdet = 2.0 * MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  return -0.5 * (z.squaredNorm() + logdet + x.size() * std::log(2.0 * M_PI));
}

Block full_block(const Trajectory& tr, long t0, long t1) {
  Block b;
  b.t0 = t0;
  b.t1 = t1;
  for (long t = t0; t <= t1; ++t) {
    std::vector<int> obs(tr.X.rows());
    for (int j = 0; j < tr.X.rows(); ++j) obs[j] = j;
    b.observed.push_back(obs);
    b.values.push_back(tr.X.col(t));
  }
  return b;
}

double max_abs(const MatrixXd& M) { return M.size() ? M.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

TEST_CASE("build_ssm shock moments") {
  std::mt19937_64 rng(1);
  SvarModel m = random_model(rng, 2, 1);
  m.shocks[0].means.setZero();
  m.shocks[1].means.setZero();
  const Trajectory tr = simulate(m, 4, VectorXd::Zero(2), 3);
  const Block b = full_block(tr, 0, 3);
  const auto ssm = build_ssm(m, b, Assignment::Zero(3, 2));
  const MatrixXd expected =
      m.C * m.shock_variance() * m.C.transpose();
  for (int s = 0; s < 3; ++s) {
    CHECK(ssm.shock_mean[s].isZero(0.0));
    CHECK(max_abs(ssm.shock_cov[s] - expected) < 1e-14);
  }

  SvarModel asym{MatrixXd::Identity(2, 2) * 0.5, MatrixXd::Identity(2, 2),
                  {asymmetric_shock(1.0), asymmetric_shock(-1.0)}};
  const auto s0 = build_ssm(asym, full_block(simulate(asym, 2, VectorXd::Zero(2), 1), 0, 1),
                            Assignment::Zero(1, 2));
  CHECK(max_abs(s0.shock_cov[0] - MatrixXd(VectorXd((VectorXd(2) << 0.04, 0.04).finished()).asDiagonal())) < 1e-15);
  CHECK(s0.shock_mean[0][0] == doctest::Approx(0.36));
  CHECK(s0.shock_mean[0][1] == doctest::Approx(-0.36));

  asym.C = (MatrixXd(2, 2) << 1.0, 0.0, -0.2, 1.0).finished();
  Assignment mixed(1, 2);
  mixed << 0, 1;
  const auto s1 = build_ssm(asym, full_block(simulate(asym, 2, VectorXd::Zero(2), 1), 0, 1), mixed);
  CHECK(max_abs(s1.shock_mean[0] - asym.C * Eigen::Vector2d(0.36, 0.84)) < 1e-15);

  Assignment bad = Assignment::Zero(1, 2);
  bad(0, 1) = 2;
  CHECK_THROWS_AS(build_ssm(asym, full_block(simulate(asym, 2, VectorXd::Zero(2), 1), 0, 1), bad),
                  ArgumentError);
}

TEST_CASE("fully observed block reduces to transition densities") {
  std::mt19937_64 rng(2);
  const SvarModel m = random_model(rng, 3, 2);
  const Trajectory tr = simulate(m, 5, VectorXd::Zero(3), 4);
  const Block b = full_block(tr, 0, 4);
  const Assignment z = random_assignment(rng, 4, 3, 2);
  const auto ssm = build_ssm(m, b, z);
  const auto sm = filter_smooth(ssm, b);
  double ll = 0.0;
  for (int s = 1; s <= 4; ++s) {
    CHECK(sm.mean[s] == tr.X.col(s));
    CHECK(sm.cov[s].isZero(0.0));
    ll += log_normal_density(tr.X.col(s), m.A * tr.X.col(s - 1) + ssm.shock_mean[s - 1],
                             ssm.shock_cov[s - 1]);
  }
  CHECK(sm.loglik == doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("single anchor-to-anchor step has the closed-form likelihood") {
  std::mt19937_64 rng(3);
  const SvarModel m = random_model(rng, 2, 2);
  const Trajectory tr = simulate(m, 2, VectorXd::Ones(2), 5);
  const Block b = full_block(tr, 0, 1);
  Assignment z(1, 2);
  z << 1, 0;
  const auto ssm = build_ssm(m, b, z);
  const double expect = log_normal_density(tr.X.col(1), m.A * tr.X.col(0) + ssm.shock_mean[0],
                                           ssm.shock_cov[0]);
  CHECK(filter_smooth(ssm, b).loglik == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("filter and smoother match the dense Gaussian oracle") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + trial % 3;
    const int n = 1 + (trial / 3) % 4;
    const SvarModel m = random_model(rng, p, 2);
    const Block b = random_block(rng, m, n);
    const auto ssm = build_ssm(m, b, random_assignment(rng, n, p, 2));
    const auto fs = filter_smooth(ssm, b);
    const auto oracle = gaussian_condition_oracle(ssm, b);
    CHECK(std::abs(fs.loglik - oracle.loglik) < 1e-8);
    for (int s = 0; s <= n; ++s) {
      CHECK(max_abs(fs.mean[s] - oracle.mean[s]) < 1e-10);
      CHECK(max_abs(fs.cov[s] - oracle.cov[s]) < 1e-10);
      CHECK(max_abs(fs.cross[s] - oracle.cross[s]) < 1e-10);
      CHECK(max_abs(fs.cov[s] - fs.cov[s].transpose()) <= 1e-12);
      if (b.observed[s].size() == static_cast<std::size_t>(p)) CHECK(fs.cov[s].isZero(0.0));
    }
  }
}

TEST_CASE("compiled smoother agrees with the direct filter for any data") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int p = 1 + trial % 3;
    const int n = 1 + trial % 4;
    const SvarModel m = random_model(rng, p, 2);
    const Block shape = random_block(rng, m, n);
    const auto ssm = build_ssm(m, shape, random_assignment(rng, n, p, 2));
    const AffineSmoother compiled = compile_smoother(ssm);
    for (int rep = 0; rep < 3; ++rep) {
      Block b = shape;
      for (auto& v : b.values) v = random_matrix(rng, static_cast<int>(v.size()), 1);
      ConditionalSSM direct = ssm;
      direct.anchor = b.values.front();
      const auto fs = filter_smooth(direct, b);
      const VectorXd d = block_data_vector(b);
      CHECK(std::abs(compiled.loglik(d) - fs.loglik) < 1e-9 * (1.0 + std::abs(fs.loglik)));
      const VectorXd means = compiled.mean_coef * d;
      for (int s = 0; s <= n; ++s) {
        CHECK(max_abs(means.segment(s * p, p) - fs.mean[s]) < 1e-10);
        CHECK(max_abs(compiled.cov[s] - fs.cov[s]) < 1e-12);
        CHECK(max_abs(compiled.cross[s] - fs.cross[s]) < 1e-12);
      }
    }
  }
}

TEST_CASE("singular innovation covariance reports the time index") {
  SvarModel m{MatrixXd::Identity(2, 2) * 0.5, MatrixXd::Zero(2, 2),
              {standard_normal_shock(), standard_normal_shock()}};
  Block b;
  b.t0 = 0;
  b.t1 = 2;
  b.observed = {{0, 1}, {0}, {0, 1}};
  b.values = {VectorXd::Ones(2), VectorXd::Ones(1), VectorXd::Ones(2)};
  const auto ssm = build_ssm(m, b, Assignment::Zero(2, 2));
  try {
    filter_smooth(ssm, b);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(e.time_index() == 1);
  }
}

TEST_CASE("mismatched block and model are rejected") {
  std::mt19937_64 rng(6);
  const SvarModel m = random_model(rng, 2, 2);
  const Block b = random_block(rng, m, 3);
  CHECK_THROWS_AS(build_ssm(m, b, Assignment::Zero(2, 2)), StructuralError);
  const auto ssm = build_ssm(m, b, Assignment::Zero(3, 2));
  const Block other = random_block(rng, m, 2);
  CHECK_THROWS_AS(filter_smooth(ssm, other), StructuralError);
}
