#include "svar/error.hpp"
#include "svar/eval.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace svar;
using namespace svar::testing;

namespace {

SignedPermutation random_signed_permutation(std::mt19937_64& rng, int p) {
  SignedPermutation P = SignedPermutation::identity(p);
  std::shuffle(P.perm.begin(), P.perm.end(), rng);
  std::bernoulli_distribution coin(0.5);
  for (int& s : P.sign) s = coin(rng) ? -1 : 1;
  return P;
}

}  // namespace

TEST_CASE("signed permutation matrix convention") {
  SignedPermutation P{{1, 0}, {1, -1}};
  const MatrixXd C = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  const MatrixXd CP = C * P.matrix();
  CHECK(CP.col(0) == C.col(1));
  CHECK(CP.col(1) == -C.col(0));
  CHECK(SignedPermutation::identity(3).matrix() == MatrixXd::Identity(3, 3));
}

TEST_CASE("align finds the identity and a constructed flip") {
  const MatrixXd C = (MatrixXd(2, 2) << 1.0, 0.2, -0.3, 0.9).finished();
  const Alignment same = align(C, C);
  CHECK(same.P == SignedPermutation::identity(2));
  CHECK(same.error == 0.0);

  MatrixXd swapped(2, 2);
  swapped << -C.col(1), C.col(0);
  const Alignment al = align(swapped, C);
  CHECK(al.aligned == C);
  CHECK(al.error == 0.0);
  CHECK(al.P.perm == std::vector<int>{1, 0});
  CHECK(al.P.sign == std::vector<int>{1, -1});
}

TEST_CASE("planted signed permutations are recovered") {
  std::mt19937_64 rng(1);
  int hits = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + trial % 4;
    const MatrixXd C = MatrixXd::Identity(p, p) + random_matrix(rng, p, p, 0.3);
    const SignedPermutation Q = random_signed_permutation(rng, p);
    const MatrixXd C_hat = (C + random_matrix(rng, p, p, 0.01)) * Q.matrix();
    const Alignment al = align(C_hat, C);
    if ((al.P.matrix() - Q.matrix().transpose()).isZero(0.0)) ++hits;
  }
  CHECK(hits >= 190);
}

TEST_CASE("alignment beyond eight series is refused") {
  CHECK_THROWS_AS(align(MatrixXd::Identity(9, 9), MatrixXd::Identity(9, 9)), CapacityError);
  CHECK_THROWS_AS(align(MatrixXd::Identity(2, 2), MatrixXd::Identity(3, 3)), StructuralError);
}

TEST_CASE("the true model has zero error") {
  std::mt19937_64 rng(2);
  const SvarModel truth = random_model(rng, 3, 2);
  const RunErrors e = param_errors(Theta::from_model(truth), truth);
  CHECK(e.A_err.maxCoeff() == 0.0);
  CHECK(e.C_err.maxCoeff() < 1e-12);
  CHECK(e.P == SignedPermutation::identity(3));
}

TEST_CASE("errors are invariant under signed permutations of the estimate") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 2 + trial % 3;
    const SvarModel truth = random_model(rng, p, 2);
    const SvarModel est = random_model(rng, p, 2);
    const SignedPermutation Q = random_signed_permutation(rng, p);
    MatrixXd CQ(p, p);
    std::vector<MixtureSpec> shocks(p);
    for (int c = 0; c < p; ++c) {
      CQ.col(c) = Q.sign[c] * est.C.col(Q.perm[c]);
      shocks[c] = est.shocks[Q.perm[c]];
      if (Q.sign[c] < 0) shocks[c].means = -shocks[c].means;
    }
    const RunErrors a = param_errors(est.A, est.C, est.shocks, truth);
    const RunErrors b = param_errors(est.A, CQ, shocks, truth);
    CHECK(a.C_err == b.C_err);
    CHECK(a.A_err == b.A_err);
    CHECK(a.C_hat == b.C_hat);
  }
}

TEST_CASE("apply_signed_permutation preserves the implied process") {
  std::mt19937_64 rng(4);
  const SvarModel truth = random_model(rng, 3, 2);
  const Theta theta = Theta::from_model(truth);
  const SignedPermutation Q = random_signed_permutation(rng, 3);
  const Theta moved = apply_signed_permutation(theta, Q);
  CHECK((moved.C() - theta.C() * Q.matrix()).cwiseAbs().maxCoeff() < 1e-12);
  const ObservationSet obs = apply(uniform_scheme(3, 2), simulate_stationary(truth, 30, 5));
  CHECK(e_step(moved, obs).loglik == doctest::Approx(e_step(theta, obs).loglik).epsilon(1e-10));
}

TEST_CASE("symmetric comparison of A allows column signs") {
  std::mt19937_64 rng(6);
  const SvarModel truth = random_model(rng, 2, 2);
  MatrixXd A = truth.A;
  A.col(1) = -A.col(1);
  CHECK(param_errors(A, truth.C, truth.shocks, truth, true).A_err.maxCoeff() == 0.0);
  CHECK(param_errors(A, truth.C, truth.shocks, truth, false).A_err.maxCoeff() > 0.0);
}

TEST_CASE("shock scale is separated from C before alignment") {
  std::mt19937_64 rng(7);
  const SvarModel truth = random_model(rng, 2, 2);
  Theta theta = Theta::from_model(truth);
  impose_scale(theta);
  const RunErrors e = param_errors(theta, truth);
  CHECK(e.C_err.maxCoeff() < 1e-12);
}

TEST_CASE("histogram and median") {
  const Histogram h = histogram({0.0, 0.05, 0.5, 1.0, 1.5, -0.1}, 0.0, 1.0, 10);
  CHECK(h.counts.size() == 10);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[5] == 1);
  CHECK(h.counts[9] == 1);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), 0) == 4);
  CHECK_THROWS_AS(histogram({}, 1.0, 1.0), ArgumentError);
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(std::isnan(median({})));
}

TEST_CASE("summaries of runs") {
  std::mt19937_64 rng(8);
  const SvarModel truth = random_model(rng, 2, 2);
  const RunErrors exact = param_errors(Theta::from_model(truth), truth);

  const RunSummary one = summarize({exact}, truth);
  CHECK(one.entries.size() == 8);
  for (const auto& e : one.entries) CHECK(e.standard_error == 0.0);

  const RunSummary same = summarize(std::vector<RunErrors>(5, exact), truth);
  for (const auto& e : same.entries) {
    CHECK(e.standard_error == 0.0);
    CHECK(e.median_abs_error == doctest::Approx(e.mean_abs_error));
  }

  // Gaussian perturbations: E|err| = sd sqrt(2/pi).
  const double sd = 0.1, expected = sd * std::sqrt(2.0 / M_PI);
  std::vector<RunErrors> runs;
  for (int r = 0; r < 40; ++r) {
    const MatrixXd A = truth.A + random_matrix(rng, 2, 2, sd);
    runs.push_back(param_errors(A, truth.C, truth.shocks, truth));
  }
  const RunSummary s = summarize(runs, truth);
  for (const auto& e : s.entries) {
    if (e.matrix != "A") continue;
    CHECK(e.standard_error > 0.0);
    CHECK(std::abs(e.mean_abs_error - expected) <= 3.0 * e.standard_error);
  }
  CHECK(s.mean_abs_error_C < 1e-12);
  CHECK_THROWS_AS(summarize({}, truth), ArgumentError);
}

TEST_CASE("csv reports") {
  std::mt19937_64 rng(9);
  const SvarModel truth = random_model(rng, 2, 2);
  const Theta theta = Theta::from_model(truth);
  const RunErrors e = param_errors(theta, truth);
  const std::string errors = errors_csv({e, e}, {theta, theta}, truth);
  CHECK(std::count(errors.begin(), errors.end(), '\n') == 1 + 2 * 8);
  CHECK(errors.rfind("run,matrix,row,col,truth,raw,aligned,abs_error\n", 0) == 0);
  const std::string summary = summary_csv(summarize({e}, truth));
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 1 + 8);
}
