#include "svar/eval.hpp"

#include "svar/error.hpp"
#include "svar/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace svar {

SignedPermutation SignedPermutation::identity(int p) {
  SignedPermutation s;
  s.perm.resize(p);
  std::iota(s.perm.begin(), s.perm.end(), 0);
  s.sign.assign(p, 1);
  return s;
}

MatrixXd SignedPermutation::matrix() const {
  const int p = static_cast<int>(perm.size());
  MatrixXd P = MatrixXd::Zero(p, p);
  for (int c = 0; c < p; ++c) P(perm[c], c) = sign[c];
  return P;
}

Alignment align(const MatrixXd& C_hat, const MatrixXd& C_true) {
  const int p = static_cast<int>(C_true.cols());
  if (C_hat.rows() != C_true.rows() || C_hat.cols() != p)
    throw StructuralError("align: shape mismatch");
  if (p > 8) throw CapacityError("exhaustive alignment supports p <= 8", p);

  // cost[s][src][dst]: squared error of column dst when filled by sign s
  // times column src; each candidate's total is summed in dst order.
  std::vector<double> cost(2 * p * p);
  for (int src = 0; src < p; ++src)
    for (int dst = 0; dst < p; ++dst) {
      cost[(0 * p + src) * p + dst] = (C_hat.col(src) - C_true.col(dst)).squaredNorm();
      cost[(1 * p + src) * p + dst] = (-C_hat.col(src) - C_true.col(dst)).squaredNorm();
    }

  Alignment best;
  best.error = std::numeric_limits<double>::infinity();
  std::vector<int> perm(p);
  std::iota(perm.begin(), perm.end(), 0);
  const unsigned n_signs = 1u << p;
  do {
    for (unsigned mask = 0; mask < n_signs; ++mask) {
      double err = 0.0;
      for (int c = 0; c < p; ++c) err += cost[(((mask >> c) & 1u) * p + perm[c]) * p + c];
      if (err < best.error) {
        best.error = err;
        best.P.perm = perm;
        best.P.sign.resize(p);
        for (int c = 0; c < p; ++c) best.P.sign[c] = ((mask >> c) & 1u) ? -1 : 1;
      }
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  best.aligned = MatrixXd(C_hat.rows(), p);
  for (int c = 0; c < p; ++c) best.aligned.col(c) = best.P.sign[c] * C_hat.col(best.P.perm[c]);
  best.error = std::sqrt(best.error);
  return best;
}

Theta apply_signed_permutation(const Theta& theta, const SignedPermutation& P) {
  const int p = theta.p();
  Theta out = theta;
  // C' = C P  <=>  W' = P^T W, shocks e' = P^T e.
  for (int c = 0; c < p; ++c) {
    out.W.row(c) = P.sign[c] * theta.W.row(P.perm[c]);
    out.shocks[c] = theta.shocks[P.perm[c]];
    if (P.sign[c] < 0) out.shocks[c].means = -out.shocks[c].means;
  }
  return out;
}

namespace {

MatrixXd unit_variance_columns(const MatrixXd& C, const std::vector<MixtureSpec>& shocks) {
  MatrixXd out = C;
  for (Eigen::Index j = 0; j < C.cols(); ++j) out.col(j) *= std::sqrt(shocks[j].variance());
  return out;
}

}  // namespace

RunErrors param_errors(const Theta& fit, const SvarModel& truth, bool symmetric) {
  return param_errors(fit.A, fit.C(), fit.shocks, truth, symmetric);
}

RunErrors param_errors(const MatrixXd& A_hat, const MatrixXd& C_hat,
                       const std::vector<MixtureSpec>& shocks_hat, const SvarModel& truth,
                       bool symmetric) {
  const int p = truth.p();
  if (A_hat.rows() != p || C_hat.rows() != p || static_cast<int>(shocks_hat.size()) != p)
    throw StructuralError("param_errors: dimension mismatch");
  RunErrors r;
  const Alignment al = align(unit_variance_columns(C_hat, shocks_hat),
                             unit_variance_columns(truth.C, truth.shocks));
  r.P = al.P;
  r.C_hat = al.aligned;
  for (int c = 0; c < p; ++c) r.C_hat.col(c) /= std::sqrt(truth.shocks[c].variance());
  r.C_err = (r.C_hat - truth.C).cwiseAbs();

  r.A_hat = A_hat;
  if (symmetric) {
    double best = std::numeric_limits<double>::infinity();
    MatrixXd best_A = A_hat;
    for (unsigned mask = 0; mask < (1u << p); ++mask) {
      MatrixXd cand = A_hat;
      for (int c = 0; c < p; ++c)
        if ((mask >> c) & 1u) cand.col(c) = -cand.col(c);
      const double e = (cand - truth.A).squaredNorm();
      if (e < best) best = e, best_A = cand;
    }
    r.A_hat = best_A;
  }
  r.A_err = (r.A_hat - truth.A).cwiseAbs();
  return r;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (bins < 1 || !(hi > lo)) throw ArgumentError("histogram needs bins >= 1 and hi > lo");
  Histogram h{lo, hi, std::vector<int>(bins, 0)};
  for (double v : values) {
    if (v < lo || v > hi) continue;
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RunSummary summarize(const std::vector<RunErrors>& runs, const SvarModel& truth, int bins) {
  if (runs.empty()) throw ArgumentError("summarize needs at least one run");
  const int p = truth.p();
  RunSummary s;
  s.runs = runs;
  std::vector<double> all_A, all_C;
  for (const char* name : {"A", "C"}) {
    const bool isA = name[0] == 'A';
    const MatrixXd& tm = isA ? truth.A : truth.C;
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c) {
        std::vector<double> est, err;
        for (const auto& run : runs) {
          est.push_back(isA ? run.A_hat(r, c) : run.C_hat(r, c));
          err.push_back(isA ? run.A_err(r, c) : run.C_err(r, c));
        }
        EntrySummary e;
        e.matrix = name;
        e.row = r;
        e.col = c;
        e.truth = tm(r, c);
        const double n = static_cast<double>(runs.size());
        e.mean_estimate = std::accumulate(est.begin(), est.end(), 0.0) / n;
        e.mean_abs_error = std::accumulate(err.begin(), err.end(), 0.0) / n;
        e.median_abs_error = median(err);
        if (runs.size() > 1) {
          double ss = 0.0;
          for (double x : err) ss += (x - e.mean_abs_error) * (x - e.mean_abs_error);
          e.standard_error = std::sqrt(ss / (n - 1.0) / n);
        }
        e.hist = histogram(est, e.truth - 1.0, e.truth + 1.0, bins);
        (isA ? all_A : all_C).insert((isA ? all_A : all_C).end(), err.begin(), err.end());
        s.entries.push_back(std::move(e));
      }
  }
  s.mean_abs_error_A = std::accumulate(all_A.begin(), all_A.end(), 0.0) / all_A.size();
  s.mean_abs_error_C = std::accumulate(all_C.begin(), all_C.end(), 0.0) / all_C.size();
  s.median_abs_error_A = median(all_A);
  s.median_abs_error_C = median(all_C);
  return s;
}

std::string errors_csv(const std::vector<RunErrors>& runs, const std::vector<Theta>& raw,
                       const SvarModel& truth) {
  std::ostringstream os;
  os << "run,matrix,row,col,truth,raw,aligned,abs_error\n";
  const int p = truth.p();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const MatrixXd rawC = i < raw.size() ? raw[i].C() : runs[i].C_hat;
    const MatrixXd rawA = i < raw.size() ? raw[i].A : runs[i].A_hat;
    for (int m = 0; m < 2; ++m)
      for (int r = 0; r < p; ++r)
        for (int c = 0; c < p; ++c) {
          const bool isA = m == 0;
          os << i + 1 << ',' << (isA ? 'A' : 'C') << ',' << r + 1 << ',' << c + 1 << ','
             << format_double(isA ? truth.A(r, c) : truth.C(r, c)) << ','
             << format_double(isA ? rawA(r, c) : rawC(r, c)) << ','
             << format_double(isA ? runs[i].A_hat(r, c) : runs[i].C_hat(r, c)) << ','
             << format_double(isA ? runs[i].A_err(r, c) : runs[i].C_err(r, c)) << '\n';
        }
  }
  return os.str();
}

std::string summary_csv(const RunSummary& s) {
  std::ostringstream os;
  os << "matrix,row,col,truth,mean_estimate,mean_abs_error,median_abs_error,standard_error,runs,"
        "k,T,max_eigenvalue,eigen_scale,histogram\n";
  for (const auto& e : s.entries) {
    os << e.matrix << ',' << e.row + 1 << ',' << e.col + 1 << ',' << format_double(e.truth) << ','
       << format_double(e.mean_estimate) << ',' << format_double(e.mean_abs_error) << ','
       << format_double(e.median_abs_error) << ',' << format_double(e.standard_error) << ','
       << s.runs.size() << ',' << s.k << ',' << s.T << ',' << format_double(s.max_eigenvalue) << ','
       << format_double(s.eigen_scale) << ',';
    for (std::size_t b = 0; b < e.hist.counts.size(); ++b) os << (b ? ";" : "") << e.hist.counts[b];
    os << '\n';
  }
  return os.str();
}

}  // namespace svar
