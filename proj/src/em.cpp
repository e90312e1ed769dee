#include "svar/em.hpp"

#include "svar/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <thread>

namespace svar {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDegenerateMass = 1e-8;

double log_abs_det(const MatrixXd& W) {
  Eigen::PartialPivLU<MatrixXd> lu(W);
  const VectorXd d = lu.matrixLU().diagonal();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) acc += std::log(std::abs(d[i]));
  return acc;
}

bool invertible(const MatrixXd& W) {
  if (!W.allFinite()) return false;
  Eigen::JacobiSVD<MatrixXd> svd(W);
  const VectorXd sv = svd.singularValues();
  return sv.minCoeff() > 1e-12 * std::max(1.0, sv.maxCoeff());
}

}  // namespace

// ---------------------------------------------------------------- constraint

bool StructuralConstraint::is_free(int row, int col) const {
  switch (kind) {
    case ConstraintKind::Free: return true;
    case ConstraintKind::Identity: return false;
    case ConstraintKind::Mask: return mask(row, col);
  }
  return false;
}

int StructuralConstraint::free_count(int p) const {
  int n = 0;
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c) n += is_free(r, c) ? 1 : 0;
  return n;
}

void StructuralConstraint::check(int p) const {
  if (kind != ConstraintKind::Mask) return;
  if (mask.rows() != p || mask.cols() != p)
    throw ArgumentError("zero-pattern mask must be p x p");
  for (int i = 0; i < p; ++i)
    if (!mask(i, i)) throw ArgumentError("zero-pattern mask must keep the diagonal free");
  // Off-diagonal support must be a transitively closed DAG so that the
  // pattern survives matrix inversion.
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j || !mask(i, j)) continue;
      if (mask(j, i)) throw ArgumentError("zero-pattern mask encodes a cycle");
      for (int k = 0; k < p; ++k)
        if (k != i && k != j && mask(j, k) && !mask(i, k))
          throw ArgumentError("zero-pattern mask is not transitively closed");
    }
}

std::string StructuralConstraint::describe() const {
  switch (kind) {
    case ConstraintKind::Free: return "free";
    case ConstraintKind::Identity: return "identity";
    case ConstraintKind::Mask: {
      std::string s = "mask:";
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        if (r > 0) s += '/';
        for (Eigen::Index c = 0; c < mask.cols(); ++c) s += mask(r, c) ? '1' : '0';
      }
      return s;
    }
  }
  return "unknown";
}

// ------------------------------------------------------------------- theta

MatrixXd Theta::C() const { return W.inverse(); }

SvarModel Theta::model() const { return SvarModel{A, C(), shocks}; }

Theta Theta::from_model(const SvarModel& model) {
  model.check_dimensions();
  return Theta{model.A, model.C.inverse(), model.shocks};
}

void impose_scale(Theta& theta) {
  for (int j = 0; j < theta.p(); ++j) {
    auto& s = theta.shocks[j];
    const double scale = std::sqrt(s.variances[0]);
    s.means /= scale;
    s.variances /= scale * scale;
    s.variances[0] = 1.0;
    theta.W.row(j) /= scale;
  }
}

Theta conform(Theta theta, const StructuralConstraint& constraint) {
  const int p = theta.p();
  constraint.check(p);
  if (constraint.kind == ConstraintKind::Identity) {
    // A diagonal W moves into the shock scale exactly.
    for (int j = 0; j < p; ++j) {
      const double w = theta.W(j, j);
      if (w != 0.0) {
        theta.shocks[j].means /= w;
        theta.shocks[j].variances /= w * w;
      }
    }
    theta.W = MatrixXd::Identity(p, p);
    return theta;
  }
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c)
      if (!constraint.is_free(r, c)) theta.W(r, c) = 0.0;
  impose_scale(theta);
  return theta;
}

// ------------------------------------------------------------------- stats

ExpectedStats::ExpectedStats(int p_, int m_) : p(p_), m(m_) {
  const int n = p * m;
  count.assign(n, 0.0);
  sum_x.assign(n, VectorXd::Zero(p));
  sum_prev.assign(n, VectorXd::Zero(p));
  sum_xx.assign(n, MatrixXd::Zero(p, p));
  sum_prev_prev.assign(n, MatrixXd::Zero(p, p));
  sum_x_prev.assign(n, MatrixXd::Zero(p, p));
  responsibilities.resize(0, n);
}

ExpectedStats& ExpectedStats::operator+=(const ExpectedStats& o) {
  if (o.p != p || o.m != m) throw StructuralError("cannot add statistics of different shapes");
  transitions += o.transitions;
  for (std::size_t k = 0; k < count.size(); ++k) {
    count[k] += o.count[k];
    sum_x[k] += o.sum_x[k];
    sum_prev[k] += o.sum_prev[k];
    sum_xx[k] += o.sum_xx[k];
    sum_prev_prev[k] += o.sum_prev_prev[k];
    sum_x_prev[k] += o.sum_x_prev[k];
  }
  MatrixXd r(responsibilities.rows() + o.responsibilities.rows(), p * m);
  r << responsibilities, o.responsibilities;
  responsibilities = std::move(r);
  times.insert(times.end(), o.times.begin(), o.times.end());
  return *this;
}

MatrixXd ExpectedStats::residual_second(int j, int i, const MatrixXd& A) const {
  const int k = index(j, i);
  const MatrixXd cross = sum_x_prev[k] * A.transpose();
  return sum_xx[k] - cross - cross.transpose() + A * sum_prev_prev[k] * A.transpose();
}

VectorXd ExpectedStats::residual_first(int j, int i, const MatrixXd& A) const {
  const int k = index(j, i);
  return sum_x[k] - A * sum_prev[k];
}

// ------------------------------------------------------------------ config

void EmConfig::check() const {
  if (max_iterations < 1) throw ArgumentError("max_iterations must be positive");
  if (!(tolerance > 0.0) || !(newton_tolerance > 0.0) || !(inner_tolerance > 0.0))
    throw ArgumentError("tolerances must be positive");
  if (restarts < 0) throw ArgumentError("restart count must be non-negative");
  if (components < 1) throw ArgumentError("mixture needs at least one component");
  if (eta_growth < 1.0) throw ArgumentError("eta growth factor must be at least one");
  if (inner_cycles < 1 || newton_max_steps < 0) throw ArgumentError("bad inner iteration limits");
  if (threads < 0) throw ArgumentError("thread count must be non-negative");
}

// ------------------------------------------------------------- assignments

AssignmentRange::AssignmentRange(int length, int p, int m, double budget)
    : length_(length), p_(p), m_(m) {
  const double required = std::pow(static_cast<double>(m), static_cast<double>(length) * p);
  if (required > budget)
    throw CapacityError("block needs " + std::to_string(static_cast<long double>(required)) +
                            " mixture assignments, over the budget of " +
                            std::to_string(static_cast<long double>(budget)),
                        required);
  count_ = static_cast<std::size_t>(required + 0.5);
}

Assignment AssignmentRange::operator[](std::size_t index) const {
  Assignment a(length_, p_);
  for (int s = 0; s < length_; ++s)
    for (int j = 0; j < p_; ++j) {
      a(s, j) = static_cast<int>(index % static_cast<std::size_t>(m_));
      index /= static_cast<std::size_t>(m_);
    }
  return a;
}

AssignmentRange enumerate_assignments(const Block& block, int m, int p, double budget) {
  return AssignmentRange(block.length(), p, m, budget);
}

// ------------------------------------------------------------------ E-step

namespace {

struct CompiledPattern {
  std::vector<AffineSmoother> smoothers;
  std::vector<double> log_prior;
  std::vector<std::vector<int>> components;  // flattened (s, j) -> i
};

CompiledPattern compile_pattern(const SvarModel& model, const Block& block,
                                int m, double budget) {
  const int p = model.p();
  const AssignmentRange range(block.length(), p, m, budget);
  CompiledPattern out;
  out.smoothers.reserve(range.size());
  for (std::size_t a = 0; a < range.size(); ++a) {
    const Assignment z = range[a];
    double lp = 0.0;
    std::vector<int> flat(static_cast<std::size_t>(block.length()) * p);
    for (int s = 0; s < block.length(); ++s)
      for (int j = 0; j < p; ++j) {
        lp += std::log(model.shocks[j].weights[z(s, j)]);
        flat[static_cast<std::size_t>(s) * p + j] = z(s, j);
      }
    out.smoothers.push_back(compile_smoother(build_ssm(model, block, z)));
    out.log_prior.push_back(lp);
    out.components.push_back(std::move(flat));
  }
  return out;
}

}  // namespace

EStepResult e_step(const Theta& theta, const ObservationSet& obs, double assignment_budget) {
  const int p = theta.p();
  const int m = theta.m();
  if (obs.p != p) throw StructuralError("observations and parameters disagree on p");
  const SvarModel model = theta.model();
  if (!model.C.allFinite()) throw NumericalError("W is not invertible");

  EStepResult out;
  out.stats = ExpectedStats(p, m);
  ExpectedStats& st = out.stats;
  const long rows = obs.transition_count();
  st.responsibilities = MatrixXd::Zero(rows, p * m);
  st.transitions = static_cast<double>(rows);

  // Blocks sharing an observation pattern share every compiled smoother;
  // their data vectors are processed together.
  std::map<std::vector<unsigned long long>, std::vector<std::size_t>> groups;
  std::vector<long> row_of(obs.blocks.size());
  long row0 = 0;
  st.times.reserve(static_cast<std::size_t>(rows));
  for (std::size_t b = 0; b < obs.blocks.size(); ++b) {
    const Block& blk = obs.blocks[b];
    groups[blk.pattern()].push_back(b);
    row_of[b] = row0;
    for (int s = 1; s <= blk.length(); ++s) st.times.push_back(blk.t0 + s);
    row0 += blk.length();
  }

  VectorXd block_ll = VectorXd::Zero(static_cast<Eigen::Index>(obs.blocks.size()));
  for (const auto& [key, members] : groups) {
    const Block& first = obs.blocks[members.front()];
    const CompiledPattern cp = compile_pattern(model, first, m, assignment_budget);
    const int n = first.length();
    const Eigen::Index nb = static_cast<Eigen::Index>(members.size());
    const Eigen::Index na = static_cast<Eigen::Index>(cp.smoothers.size());

    const VectorXd d0 = block_data_vector(first);
    MatrixXd D(d0.size(), nb);
    for (Eigen::Index c = 0; c < nb; ++c) D.col(c) = block_data_vector(obs.blocks[members[c]]);

    MatrixXd ll(nb, na);
    for (Eigen::Index a = 0; a < na; ++a) {
      const AffineSmoother& sm = cp.smoothers[a];
      const MatrixXd r = sm.whitened_coef * D;
      ll.col(a) = (-0.5 * r.colwise().squaredNorm().transpose()).array() +
                  (sm.log_norm + cp.log_prior[a]);
    }
    for (Eigen::Index c = 0; c < nb; ++c) {
      const double hi = ll.row(c).maxCoeff();
      if (!std::isfinite(hi))
        throw NumericalError("block likelihood is not finite for any assignment",
                             obs.blocks[members[c]].t0);
      const double lse = hi + std::log((ll.row(c).array() - hi).exp().sum());
      block_ll[static_cast<Eigen::Index>(members[c])] = lse;
      ll.row(c) = (ll.row(c).array() - lse).exp();
    }

    for (Eigen::Index a = 0; a < na; ++a) {
      const auto w = ll.col(a);
      const double mass = w.sum();
      if (mass == 0.0) continue;
      const AffineSmoother& sm = cp.smoothers[a];
      const MatrixXd Dw = D * w.asDiagonal();
      const MatrixXd second = Dw * D.transpose();
      const VectorXd first_m = Dw.rowwise().sum();
      for (int s = 1; s <= n; ++s) {
        const auto Ms = sm.mean_coef.middleRows(s * p, p);
        const auto Mp = sm.mean_coef.middleRows((s - 1) * p, p);
        const MatrixXd MsD = Ms * second;
        const VectorXd ex = Ms * first_m;
        const VectorXd ep = Mp * first_m;
        const MatrixXd exx = mass * sm.cov[s] + MsD * Ms.transpose();
        const MatrixXd epp = mass * sm.cov[s - 1] + Mp * second * Mp.transpose();
        const MatrixXd exp_ = mass * sm.cross[s] + MsD * Mp.transpose();
        for (int j = 0; j < p; ++j) {
          const int k = st.index(j, cp.components[a][static_cast<std::size_t>(s - 1) * p + j]);
          st.count[k] += mass;
          st.sum_x[k] += ex;
          st.sum_prev[k] += ep;
          st.sum_xx[k] += exx;
          st.sum_prev_prev[k] += epp;
          st.sum_x_prev[k] += exp_;
          for (Eigen::Index c = 0; c < nb; ++c)
            st.responsibilities(row_of[members[c]] + s - 1, k) += w[c];
        }
      }
    }
  }
  out.loglik = block_ll.sum();
  return out;
}

// ------------------------------------------------------------------ M-step

double expected_complete_loglik(const Theta& theta, const ExpectedStats& stats) {
  const int p = theta.p();
  const int m = theta.m();
  double q = stats.transitions * log_abs_det(theta.W);
  for (int j = 0; j < p; ++j) {
    const auto Wj = theta.W.row(j);
    for (int i = 0; i < m; ++i) {
      const int k = stats.index(j, i);
      const double n = stats.count[k];
      if (n == 0.0) continue;
      const double pi = theta.shocks[j].weights[i];
      const double mu = theta.shocks[j].means[i];
      const double var = theta.shocks[j].variances[i];
      const double quad = Wj * stats.residual_second(j, i, theta.A) * Wj.transpose();
      const double lin = Wj.dot(stats.residual_first(j, i, theta.A));
      q += n * std::log(pi) - 0.5 * n * (kLog2Pi + std::log(var)) -
           (quad - 2.0 * mu * lin + mu * mu * n) / (2.0 * var);
    }
  }
  return q;
}

MatrixXd m_step_A(const ExpectedStats& stats, const Theta& theta) {
  const int p = theta.p();
  const int m = theta.m();
  // Rows of B = W A decouple; A = W^{-1} B.
  MatrixXd B(p, p);
  for (int j = 0; j < p; ++j) {
    MatrixXd gram = MatrixXd::Zero(p, p);
    VectorXd rhs = VectorXd::Zero(p);
    const VectorXd Wj = theta.W.row(j).transpose();
    for (int i = 0; i < m; ++i) {
      const int k = stats.index(j, i);
      const double var = theta.shocks[j].variances[i];
      gram += stats.sum_prev_prev[k] / var;
      rhs += (stats.sum_x_prev[k].transpose() * Wj - theta.shocks[j].means[i] * stats.sum_prev[k]) / var;
    }
    Eigen::LLT<MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) throw NumericalError("weighted Gram matrix for A is singular");
    B.row(j) = llt.solve(rhs).transpose();
  }
  Eigen::PartialPivLU<MatrixXd> lu(theta.W);
  return lu.solve(B);
}

Theta m_step_mixture(const ExpectedStats& stats, const Theta& theta, bool scale_fixed,
                     double variance_floor) {
  const int p = theta.p();
  const int m = theta.m();
  Theta out = theta;
  for (int j = 0; j < p; ++j) {
    const auto Wj = theta.W.row(j);
    double total = 0.0;
    for (int i = 0; i < m; ++i) total += stats.count[stats.index(j, i)];
    auto& s = out.shocks[j];
    for (int i = 0; i < m; ++i) {
      const double n = stats.count[stats.index(j, i)];
      if (n < kDegenerateMass)
        throw DegenerateComponentError("mixture component has vanishing responsibility", j, i);
      const double mu = Wj.dot(stats.residual_first(j, i, theta.A)) / n;
      const double second = Wj * stats.residual_second(j, i, theta.A) * Wj.transpose();
      // The scale convention can leave a variance below the floor; clamping
      // to the smaller of the two keeps each update an ascent step.
      const double floor = std::min(variance_floor, theta.shocks[j].variances[i]);
      s.means[i] = mu;
      s.variances[i] = std::max(second / n - mu * mu, floor);
      s.weights[i] = n / total;
    }
  }
  if (scale_fixed) impose_scale(out);
  return out;
}

MatrixXd w_gradient(const Theta& theta, const ExpectedStats& stats) {
  const int p = theta.p();
  const int m = theta.m();
  Eigen::PartialPivLU<MatrixXd> lu(theta.W);
  if (!invertible(theta.W)) throw NumericalError("W is singular");
  MatrixXd g = stats.transitions * lu.inverse().transpose();
  for (int j = 0; j < p; ++j) {
    const VectorXd Wj = theta.W.row(j).transpose();
    for (int i = 0; i < m; ++i) {
      const double var = theta.shocks[j].variances[i];
      const double mu = theta.shocks[j].means[i];
      g.row(j) -= ((stats.residual_second(j, i, theta.A) * Wj -
                    mu * stats.residual_first(j, i, theta.A)) / var).transpose();
    }
  }
  return g;
}

MatrixXd w_hessian(const Theta& theta, const ExpectedStats& stats) {
  const int p = theta.p();
  const int m = theta.m();
  if (!invertible(theta.W)) throw NumericalError("W is singular");
  const MatrixXd Wi = theta.W.inverse();
  const int n = p * p;
  MatrixXd H(n, n);
  // d^2 log|det W| / dW_ab dW_cd = -(W^-1)_bc (W^-1)_da, vec index a + b p.
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      for (int c = 0; c < p; ++c)
        for (int d = 0; d < p; ++d)
          H(a + b * p, c + d * p) = -stats.transitions * Wi(b, c) * Wi(d, a);
  for (int j = 0; j < p; ++j) {
    MatrixXd gamma = MatrixXd::Zero(p, p);
    for (int i = 0; i < m; ++i)
      gamma -= stats.residual_second(j, i, theta.A) / theta.shocks[j].variances[i];
    for (int c = 0; c < p; ++c)
      for (int d = 0; d < p; ++d) H(j + c * p, j + d * p) += gamma(c, d);
  }
  return H;
}

WStepResult m_step_W(const Theta& theta, const ExpectedStats& stats, const EmConfig& config) {
  const int p = theta.p();
  WStepResult out{theta.W, 0, false};
  if (config.constraint.kind == ConstraintKind::Identity) return out;

  std::vector<int> free;
  for (int c = 0; c < p; ++c)
    for (int r = 0; r < p; ++r)
      if (config.constraint.is_free(r, c)) free.push_back(r + c * p);
  const int nf = static_cast<int>(free.size());
  if (nf == 0) return out;

  Theta work = theta;
  auto objective = [&](const MatrixXd& W) {
    if (!invertible(W)) return kNegInf;
    work.W = W;
    const double q = expected_complete_loglik(work, stats);
    return std::isfinite(q) ? q : kNegInf;
  };
  const double gtol = config.newton_tolerance * std::max(1.0, stats.transitions);

  MatrixXd W = theta.W;
  double q0 = objective(W);
  for (int step = 0; step < config.newton_max_steps; ++step) {
    work.W = W;
    const MatrixXd G = w_gradient(work, stats);
    VectorXd g(nf);
    for (int f = 0; f < nf; ++f) g[f] = G(free[f] % p, free[f] / p);
    if (g.lpNorm<Eigen::Infinity>() <= gtol) break;

    const MatrixXd H = w_hessian(work, stats);
    MatrixXd negH(nf, nf);
    for (int a = 0; a < nf; ++a)
      for (int b = 0; b < nf; ++b) negH(a, b) = -H(free[a], free[b]);

    std::vector<VectorXd> directions;
    Eigen::LLT<MatrixXd> llt(negH);
    if (llt.info() == Eigen::Success) directions.push_back(llt.solve(g));
    const double curv = std::max(negH.diagonal().cwiseAbs().maxCoeff(), 1e-12);
    directions.push_back(g / curv);

    bool moved = false;
    for (const VectorXd& d : directions) {
      const double slope = g.dot(d);
      if (!(slope > 0.0)) continue;
      double alpha = 1.0;
      for (int halving = 0; halving < 60; ++halving, alpha *= 0.5) {
        MatrixXd Wn = W;
        for (int f = 0; f < nf; ++f) Wn(free[f] % p, free[f] / p) += alpha * d[f];
        const double qn = objective(Wn);
        if (qn >= q0 + 1e-4 * alpha * slope && qn > q0) {
          W = Wn;
          q0 = qn;
          moved = true;
          break;
        }
      }
      if (moved) break;
    }
    if (!moved) {
      out.stalled = true;
      break;
    }
    ++out.steps;
  }
  out.W = W;
  return out;
}

Theta m_step(const Theta& theta, const ExpectedStats& stats, const EmConfig& config) {
  Theta cur = theta;
  const bool scale_fixed = config.constraint.scale_fixed();
  double q0 = expected_complete_loglik(cur, stats);
  for (int cycle = 0; cycle < config.inner_cycles; ++cycle) {
    cur.A = m_step_A(stats, cur);
    cur.W = m_step_W(cur, stats, config).W;
    cur = m_step_mixture(stats, cur, scale_fixed, config.variance_floor);
    const double q1 = expected_complete_loglik(cur, stats);
    const bool done = std::abs(q1 - q0) <= config.inner_tolerance * std::max(1.0, std::abs(q0));
    q0 = q1;
    if (done) break;
  }
  return cur;
}

// -------------------------------------------------------- over-relaxation

namespace {

// Unconstrained coordinates: A, free W entries, means, log variances (the
// pinned first variance excluded) and weight logits relative to component 1.
VectorXd pack(const Theta& t, const StructuralConstraint& c) {
  const int p = t.p(), m = t.m();
  const int first_var = c.scale_fixed() ? 1 : 0;
  std::vector<double> v(t.A.data(), t.A.data() + t.A.size());
  for (int col = 0; col < p; ++col)
    for (int r = 0; r < p; ++r)
      if (c.is_free(r, col)) v.push_back(t.W(r, col));
  for (int j = 0; j < p; ++j) {
    const auto& s = t.shocks[j];
    for (int i = 0; i < m; ++i) v.push_back(s.means[i]);
    for (int i = first_var; i < m; ++i) v.push_back(std::log(s.variances[i]));
    for (int i = 1; i < m; ++i) v.push_back(std::log(s.weights[i] / s.weights[0]));
  }
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Theta unpack(const VectorXd& v, const Theta& like, const StructuralConstraint& c) {
  Theta t = like;
  const int p = t.p(), m = t.m();
  const int first_var = c.scale_fixed() ? 1 : 0;
  Eigen::Index at = 0;
  for (Eigen::Index k = 0; k < t.A.size(); ++k) t.A.data()[k] = v[at++];
  for (int col = 0; col < p; ++col)
    for (int r = 0; r < p; ++r)
      if (c.is_free(r, col)) t.W(r, col) = v[at++];
  for (int j = 0; j < p; ++j) {
    auto& s = t.shocks[j];
    for (int i = 0; i < m; ++i) s.means[i] = v[at++];
    for (int i = first_var; i < m; ++i) s.variances[i] = std::exp(v[at++]);
    VectorXd logits = VectorXd::Zero(m);
    for (int i = 1; i < m; ++i) logits[i] = v[at++];
    const VectorXd e = (logits.array() - logits.maxCoeff()).exp();
    s.weights = e / e.sum();
  }
  return t;
}

void reseed_component(Theta& theta, const ExpectedStats& stats, int j, int i,
                      std::mt19937_64& rng, const EmConfig& config) {
  const int m = theta.m();
  const auto Wj = theta.W.row(j);
  double n = 0.0, first = 0.0, second = 0.0;
  for (int c = 0; c < m; ++c) {
    n += stats.count[stats.index(j, c)];
    first += Wj.dot(stats.residual_first(j, c, theta.A));
    second += Wj * stats.residual_second(j, c, theta.A) * Wj.transpose();
  }
  const double mean = first / std::max(n, 1.0);
  const double var = std::max(second / std::max(n, 1.0) - mean * mean, config.variance_floor);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& s = theta.shocks[j];
  s.means[i] = mean + std::sqrt(var) * normal(rng);
  s.variances[i] = var;
  s.weights[i] = 1.0 / m;
  s.weights /= s.weights.sum();
  if (config.constraint.scale_fixed()) impose_scale(theta);
}

}  // namespace

// --------------------------------------------------------------- EM driver

FitResult em_fit(const Theta& init, const ObservationSet& obs, const EmConfig& config) {
  config.check();
  const auto started = std::chrono::steady_clock::now();
  FitResult out;
  out.observed_count = obs.observed_count();
  const auto& constraint = config.constraint;

  Theta theta = conform(init, constraint);
  for (const auto& s : theta.shocks) s.check();
  EStepResult cur;
  try {
    cur = e_step(theta, obs, config.assignment_budget);
  } catch (const NumericalError& e) {
    out.theta = theta;
    out.failed = true;
    out.message = e.what();
    out.loglik = kNegInf;
    return out;
  }
  out.trace.push_back(cur.loglik);
  out.steps.push_back(StepKind::Initial);

  std::mt19937_64 reseed_rng = restart_rng(config.seed, 0xDE6E4E2A7Eull);
  double eta = 1.0;
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    ++out.iterations;
    try {
      Theta em_theta;
      try {
        em_theta = m_step(theta, cur.stats, config);
      } catch (const DegenerateComponentError& e) {
        reseed_component(theta, cur.stats, e.series(), e.component(), reseed_rng, config);
        cur = e_step(theta, obs, config.assignment_budget);
        out.trace.push_back(cur.loglik);
        out.steps.push_back(StepKind::Reseed);
        ++out.reseeds;
        eta = 1.0;
        continue;
      }

      const double prev = cur.loglik;
      bool accepted = false;
      if (config.overrelax && eta > 1.0) {
        const VectorXd base = pack(theta, constraint);
        const VectorXd target = pack(em_theta, constraint);
        const Theta x = unpack(base + eta * (target - base), theta, constraint);
        try {
          EStepResult ex = e_step(x, obs, config.assignment_budget);
          if (std::isfinite(ex.loglik) && ex.loglik >= prev) {
            theta = x;
            cur = std::move(ex);
            out.steps.push_back(StepKind::Extrapolated);
            accepted = true;
          }
        } catch (const NumericalError&) {
        }
        if (!accepted) eta = 1.0;
      }
      if (!accepted) {
        cur = e_step(em_theta, obs, config.assignment_budget);
        theta = std::move(em_theta);
        out.steps.push_back(StepKind::Plain);
      }
      if (config.overrelax) eta = std::min(eta * config.eta_growth, config.eta_max);
      out.trace.push_back(cur.loglik);

      const double rel = std::abs(cur.loglik - prev) / std::max(std::abs(prev), 1e-300);
      if (rel < config.tolerance) {
        out.converged = true;
        break;
      }
    } catch (const NumericalError& e) {
      out.failed = true;
      out.message = e.what();
      break;
    }
  }
  out.theta = theta;
  out.loglik = cur.loglik;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

// ----------------------------------------------------------- restarts

std::mt19937_64 restart_rng(std::uint64_t root_seed, std::uint64_t restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(root_seed), static_cast<std::uint32_t>(root_seed >> 32),
                    static_cast<std::uint32_t>(restart), static_cast<std::uint32_t>(restart >> 32),
                    0x5EEDu};
  return std::mt19937_64(seq);
}

namespace {

// Real part of the principal k-th root; exact for matrices whose eigenvalues
// avoid the negative real axis.
MatrixXd principal_root(const MatrixXd& M, int k) {
  if (k == 1) return M;
  Eigen::EigenSolver<MatrixXd> es(M);
  if (es.info() != Eigen::Success) return MatrixXd::Zero(M.rows(), M.cols());
  const Eigen::MatrixXcd V = es.eigenvectors();
  Eigen::VectorXcd lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = std::pow(lam[i], 1.0 / k);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(V);
  if (!lu.isInvertible()) {
    const double rho = spectral_radius(M);
    return rho > 0 ? MatrixXd(M * (std::pow(rho, 1.0 / k) / rho)) : MatrixXd(M);
  }
  return (V * lam.asDiagonal() * lu.inverse()).real();
}

}  // namespace

Theta random_init(const ObservationSet& obs, const EmConfig& config, std::mt19937_64& rng) {
  const int p = obs.p;
  const int m = config.components;
  std::normal_distribution<double> normal(0.0, 1.0);

  // Regression of each block end on its start over the most common block length.
  std::map<int, int> lengths;
  for (const auto& b : obs.blocks) ++lengths[b.length()];
  int gap = 1, best = 0;
  for (auto [len, n] : lengths)
    if (n > best) best = n, gap = len;
  MatrixXd sxx = MatrixXd::Zero(p, p), syx = MatrixXd::Zero(p, p);
  for (const auto& b : obs.blocks) {
    if (b.length() != gap) continue;
    sxx += b.values.front() * b.values.front().transpose();
    syx += b.values.back() * b.values.front().transpose();
  }
  MatrixXd A = MatrixXd::Zero(p, p);
  Eigen::LLT<MatrixXd> llt(sxx);
  if (llt.info() == Eigen::Success) A = principal_root(llt.solve(syx.transpose()).transpose(), gap);
  if (!A.allFinite()) A.setZero();
  for (Eigen::Index k = 0; k < A.size(); ++k) A.data()[k] += 0.2 * normal(rng);
  const double rho = spectral_radius(A);
  if (rho > 0.98) A *= 0.98 / rho;

  MatrixXd W = MatrixXd::Identity(p, p);
  if (config.constraint.kind != ConstraintKind::Identity) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      W.setIdentity();
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c)
          if (config.constraint.is_free(r, c)) W(r, c) += 0.1 * normal(rng);
      if (invertible(W)) break;
    }
  }

  std::uniform_real_distribution<double> logvar(std::log(0.04), 0.0);
  std::vector<MixtureSpec> shocks(p);
  for (int j = 0; j < p; ++j) {
    auto& s = shocks[j];
    s.weights = VectorXd::Constant(m, 1.0 / m);
    s.means.resize(m);
    s.variances.resize(m);
    for (int i = 0; i < m; ++i) s.means[i] = 0.5 * normal(rng);
    s.means.array() -= s.means.mean();
    s.variances[0] = 1.0;
    for (int i = 1; i < m; ++i) s.variances[i] = std::exp(logvar(rng));
  }
  return Theta{A, W, shocks};
}

FitResult multi_start_fit(const ObservationSet& obs, const EmConfig& config,
                          const std::vector<Theta>& warm_starts) {
  config.check();
  config.constraint.check(obs.p);
  const int random_runs = config.restarts;
  const int total = random_runs + static_cast<int>(warm_starts.size());
  if (total < 1) throw ArgumentError("multi_start_fit needs at least one restart");

  std::vector<FitResult> runs(total);
  auto run_one = [&](int r) {
    Theta init;
    if (r < random_runs) {
      std::mt19937_64 rng = restart_rng(config.seed, static_cast<std::uint64_t>(r));
      init = random_init(obs, config, rng);
    } else {
      init = warm_starts[r - random_runs];
    }
    EmConfig local = config;
    local.seed = config.seed + static_cast<std::uint64_t>(r);
    try {
      runs[r] = em_fit(init, obs, local);
    } catch (const Error& e) {
      runs[r].failed = true;
      runs[r].message = e.what();
      runs[r].loglik = kNegInf;
      runs[r].theta = init;
    }
    runs[r].restart = r;
  };

  const int threads = std::max(1, std::min(config.threads > 0 ? config.threads
                                                              : static_cast<int>(std::thread::hardware_concurrency()),
                                           total));
  if (threads == 1) {
    for (int r = 0; r < total; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int r = next++; r < total; r = next++) run_one(r);
      });
    for (auto& th : pool) th.join();
  }

  int best = -1;
  for (int r = 0; r < total; ++r) {
    if (runs[r].failed || !std::isfinite(runs[r].loglik)) continue;
    if (best < 0 || runs[r].loglik > runs[best].loglik) best = r;
  }
  if (best < 0) throw NumericalError("all " + std::to_string(total) + " restarts failed");

  FitResult out = runs[best];
  out.restarts.clear();
  for (int r = 0; r < total; ++r)
    out.restarts.push_back({r, runs[r].loglik, runs[r].iterations, runs[r].converged,
                            runs[r].failed, r >= random_runs});
  out.seconds = 0.0;
  for (const auto& r : runs) out.seconds += r.seconds;
  return out;
}

}  // namespace svar
