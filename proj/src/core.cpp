#include "svar/core.hpp"

#include "svar/error.hpp"
#include "svar/sampling.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace svar {

double MixtureSpec::mean() const { return weights.dot(means); }

double MixtureSpec::variance() const {
  const double m = mean();
  return weights.dot(variances + means.cwiseAbs2()) - m * m;
}

double MixtureSpec::third_central_moment() const {
  const double m = mean();
  double acc = 0.0;
  for (int i = 0; i < components(); ++i) {
    const double d = means[i] - m;
    acc += weights[i] * (d * d * d + 3.0 * d * variances[i]);
  }
  return acc;
}

void MixtureSpec::check() const {
  if (weights.size() == 0 || means.size() != weights.size() ||
      variances.size() != weights.size())
    throw StructuralError("mixture spec: weights, means and variances must have equal nonzero length");
  if ((weights.array() <= 0.0).any())
    throw ArgumentError("mixture spec: weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw ArgumentError("mixture spec: weights must sum to one");
  if ((variances.array() <= 0.0).any())
    throw ArgumentError("mixture spec: variances must be positive");
}

MixtureSpec standard_normal_shock() {
  MixtureSpec s;
  s.weights = VectorXd::Ones(1);
  s.means = VectorXd::Zero(1);
  s.variances = VectorXd::Ones(1);
  return s;
}

MixtureSpec asymmetric_shock(double sign) {
  MixtureSpec s;
  s.weights = (VectorXd(2) << 0.7, 0.3).finished();
  s.means = (VectorXd(2) << 0.36 * sign, -0.84 * sign).finished();
  s.variances = (VectorXd(2) << 0.04, 1.0).finished();
  return s;
}

void SvarModel::check_dimensions() const {
  const auto n = A.rows();
  if (n == 0 || A.cols() != n || C.rows() != n || C.cols() != n ||
      static_cast<Eigen::Index>(shocks.size()) != n) {
    std::ostringstream msg;
    msg << "model dimensions disagree: A " << A.rows() << "x" << A.cols() << ", C "
        << C.rows() << "x" << C.cols() << ", " << shocks.size() << " shock specs";
    throw StructuralError(msg.str());
  }
  for (const auto& s : shocks) {
    if (s.weights.size() == 0 || s.means.size() != s.weights.size() ||
        s.variances.size() != s.weights.size())
      throw StructuralError("shock spec vectors have mismatched lengths");
  }
}

MatrixXd SvarModel::shock_variance() const {
  VectorXd d(p());
  for (int j = 0; j < p(); ++j) d[j] = shocks[j].variance();
  return d.asDiagonal();
}

double spectral_radius(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

ValidationReport validate_model(const SvarModel& model) {
  model.check_dimensions();
  ValidationReport r;
  r.spectral_radius = spectral_radius(model.A);
  r.stationarity_boundary = std::abs(r.spectral_radius - 1.0) <= 1e-10;
  r.stationary = r.spectral_radius < 1.0 - 1e-10;
  if (r.stationarity_boundary)
    r.violations.push_back("A1: spectral radius of A is on the unit circle");
  else if (!r.stationary)
    r.violations.push_back("A1: spectral radius of A exceeds one");

  Eigen::FullPivLU<MatrixXd> lu(model.C);
  r.rank_C = static_cast<int>(lu.rank());
  r.full_rank = r.rank_C == model.p();
  if (!r.full_rank) r.violations.push_back("A5: C is rank deficient");

  for (int j = 0; j < model.p(); ++j) {
    const auto& s = model.shocks[j];
    try {
      s.check();
    } catch (const ArgumentError& e) {
      r.violations.push_back("shock " + std::to_string(j + 1) + ": " + e.what());
    }
    r.shock_mean.push_back(s.mean());
    r.shock_variance.push_back(s.variance());
    const double m3 = s.third_central_moment();
    r.shock_third_moment.push_back(m3);
    r.shock_asymmetric.push_back(std::abs(m3) > 1e-12);
  }
  return r;
}

MatrixXd matrix_power(const MatrixXd& A, int k) {
  if (k < 0) throw ArgumentError("matrix_power: negative exponent");
  MatrixXd out = MatrixXd::Identity(A.rows(), A.cols());
  for (int i = 0; i < k; ++i) out = out * A;
  return out;
}

namespace {

int draw_component(const MixtureSpec& s, std::mt19937_64& rng) {
  if (s.components() == 1) return 0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (int i = 0; i < s.components() - 1; ++i) {
    acc += s.weights[i];
    if (u < acc) return i;
  }
  return s.components() - 1;
}

}  // namespace

Trajectory simulate(const SvarModel& model, int T, const VectorXd& x0,
                    std::uint64_t seed) {
  model.check_dimensions();
  if (T < 1) throw ArgumentError("simulate: T must be at least 1");
  const int p = model.p();
  if (x0.size() != p) throw StructuralError("simulate: x0 has wrong length");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Trajectory out;
  out.seed = seed;
  out.X.resize(p, T);
  out.Z.resize(T, p);
  out.E.resize(p, T);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < p; ++j) {
      const auto& s = model.shocks[j];
      const int z = draw_component(s, rng);
      out.Z(t, j) = z;
      out.E(j, t) = s.means[z] + std::sqrt(s.variances[z]) * normal(rng);
    }
  }
  out.X.col(0) = x0;
  for (int t = 1; t < T; ++t)
    out.X.col(t) = model.A * out.X.col(t - 1) + model.C * out.E.col(t);
  return out;
}

Trajectory simulate_stationary(const SvarModel& model, int T,
                               std::uint64_t seed, int burn_in) {
  if (burn_in < 0) throw ArgumentError("simulate: negative burn-in");
  const VectorXd origin = VectorXd::Zero(model.p());
  Trajectory full = simulate(model, T + burn_in, origin, seed);
  Trajectory out;
  out.seed = seed;
  out.X = full.X.rightCols(T);
  out.E = full.E.rightCols(T);
  out.Z = full.Z.bottomRows(T);
  return out;
}

StackedRepresentation build_subsampled_repr(const SvarModel& model, int k) {
  model.check_dimensions();
  if (k < 1) throw ArgumentError("build_subsampled_repr: k must be at least 1");
  const int p = model.p();
  StackedRepresentation r;
  r.k_star = k;
  r.F = MatrixXd::Zero(p, k * p);
  r.L.resize(p, k * p);
  MatrixXd power = MatrixXd::Identity(p, p);
  for (int l = 0; l < k; ++l) {
    r.L.middleCols(l * p, p) = power * model.C;
    power = power * model.A;
  }
  r.F.rightCols(p) = power;
  return r;
}

StackedRepresentation build_mixed_freq_repr(const SvarModel& model,
                                            const SamplingScheme& scheme,
                                            long t_anchor) {
  model.check_dimensions();
  const int p = model.p();
  if (scheme.p() != p) throw StructuralError("scheme and model disagree on p");
  if (!scheme.fully_observed(t_anchor))
    throw ArgumentError("build_mixed_freq_repr: anchor time is not fully observed");
  const int ks = k_star(scheme);
  if (t_anchor < ks)
    throw ArgumentError("build_mixed_freq_repr: anchor leaves fewer than k* steps of history");

  // G_1 = A, G_{q+1} = G_q (I - I^(q)) A, where I^(q) keeps the rows
  // observed at t_anchor - q. The observed part of x_{t-q} enters through
  // G_q I^(q); the shock e_{t-q} through G_q (I - I^(q)) C.
  StackedRepresentation r;
  r.k_star = ks;
  r.F = MatrixXd::Zero(p, ks * p);
  r.L = MatrixXd::Zero(p, ks * p);
  r.L.leftCols(p) = model.C;
  MatrixXd G = model.A;
  for (int q = 1; q <= ks; ++q) {
    VectorXd keep(p);
    for (int j = 0; j < p; ++j) keep[j] = scheme.observed(t_anchor - q, j) ? 1.0 : 0.0;
    const MatrixXd observed_rows = keep.asDiagonal();
    const MatrixXd hidden_rows = (VectorXd::Ones(p) - keep).asDiagonal();
    r.F.middleCols((q - 1) * p, p) = G * observed_rows;
    if (q < ks) {
      r.L.middleCols(q * p, p) = G * hidden_rows * model.C;
      G = G * hidden_rows * model.A;
    }
  }
  return r;
}

MatrixXd subsampled_error_covariance(const SvarModel& model, int k) {
  const StackedRepresentation r = build_subsampled_repr(model, k);
  const int p = model.p();
  MatrixXd block_lambda = MatrixXd::Zero(k * p, k * p);
  const MatrixXd lambda = model.shock_variance();
  for (int l = 0; l < k; ++l) block_lambda.block(l * p, l * p, p, p) = lambda;
  return r.L * block_lambda * r.L.transpose();
}

double scale_to_spectral_radius(SvarModel& model, double target) {
  const double rho = spectral_radius(model.A);
  if (rho <= 0.0) throw ArgumentError("cannot rescale a nilpotent transition matrix");
  const double factor = target / rho;
  model.A *= factor;
  return factor;
}

}  // namespace svar
