#include "svar/sampling.hpp"

#include "svar/error.hpp"

#include <limits>
#include <numeric>

namespace svar {

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::None: return "none";
    case SchemeKind::A: return "A";
    case SchemeKind::B: return "B";
    case SchemeKind::C: return "C";
    case SchemeKind::D: return "D";
    case SchemeKind::Mask: return "mask";
  }
  return "unknown";
}

int SamplingScheme::p() const {
  return kind == SchemeKind::Mask ? static_cast<int>(mask.cols())
                                  : static_cast<int>(rates.size());
}

bool SamplingScheme::observed(long t, int series) const {
  if (t < 0) return false;
  if (kind == SchemeKind::Mask) return t < mask.rows() && mask(t, series);
  return t % rates[series] == 0;
}

bool SamplingScheme::fully_observed(long t) const {
  for (int j = 0; j < p(); ++j)
    if (!observed(t, j)) return false;
  return true;
}

SamplingScheme uniform_scheme(int p, int k) {
  if (p < 1) throw ArgumentError("uniform_scheme: p must be positive");
  if (k < 1) throw ArgumentError("uniform_scheme: k must be at least 1");
  SamplingScheme s;
  s.kind = k == 1 ? SchemeKind::None : SchemeKind::A;
  s.rates.assign(p, k);
  return s;
}

SamplingScheme mixed_scheme(const std::vector<int>& rates) {
  if (rates.empty()) throw ArgumentError("mixed_scheme: empty rate vector");
  int lo = std::numeric_limits<int>::max(), hi = 0, g = 0;
  for (int k : rates) {
    if (k < 1) throw ArgumentError("mixed_scheme: rates must be at least 1");
    lo = std::min(lo, k);
    hi = std::max(hi, k);
    g = std::gcd(g, k);
  }
  SamplingScheme s;
  s.rates = rates;
  if (lo == hi)
    s.kind = lo == 1 ? SchemeKind::None : SchemeKind::A;
  else if (lo == 1)
    s.kind = SchemeKind::B;
  else if (g > 1)
    s.kind = SchemeKind::C;
  else
    s.kind = SchemeKind::D;
  return s;
}

SamplingScheme mask_scheme(MaskMatrix mask) {
  if (mask.cols() < 1) throw ArgumentError("mask_scheme: empty mask");
  SamplingScheme s;
  s.kind = SchemeKind::Mask;
  s.mask = std::move(mask);
  return s;
}

int k_star(const SamplingScheme& scheme) {
  if (scheme.kind == SchemeKind::Mask) return 1;
  int l = 1;
  for (int k : scheme.rates) l = std::lcm(l, k);
  return l;
}

MaskedSeries refine(const MaskedSeries& series, int k) {
  if (k < 1) throw ArgumentError("refine: factor must be at least 1");
  if (k == 1 || series.T() == 0) return series;
  const int p = series.p();
  const long T = static_cast<long>(series.T() - 1) * k + 1;
  MaskedSeries out;
  out.values = MatrixXd::Constant(p, T, std::numeric_limits<double>::quiet_NaN());
  out.mask = MaskMatrix::Constant(T, p, false);
  for (int t = 0; t < series.T(); ++t) {
    out.values.col(static_cast<long>(t) * k) = series.values.col(t);
    out.mask.row(static_cast<long>(t) * k) = series.mask.row(t);
  }
  return out;
}

std::vector<unsigned long long> Block::pattern() const {
  std::vector<unsigned long long> key;
  key.reserve(observed.size());
  key.push_back(static_cast<unsigned long long>(length()));
  for (int s = 1; s < length(); ++s) {
    unsigned long long bits = 0;
    for (int j : observed[s]) bits |= 1ULL << j;
    key.push_back(bits);
  }
  return key;
}

long ObservationSet::observed_count() const {
  long n = 0;
  for (const auto& b : blocks)
    for (int s = 1; s <= b.length(); ++s) n += static_cast<long>(b.observed[s].size());
  return n;
}

long ObservationSet::transition_count() const {
  long n = 0;
  for (const auto& b : blocks) n += b.length();
  return n;
}

MaskedSeries observe(const SamplingScheme& scheme, const Trajectory& traj) {
  const int p = static_cast<int>(traj.X.rows());
  if (scheme.p() != p) throw StructuralError("scheme and trajectory disagree on p");
  if (scheme.kind == SchemeKind::Mask && scheme.mask.rows() < traj.T())
    throw SchemeError("mask scheme does not cover the trajectory");
  MaskedSeries out;
  out.values = MatrixXd::Constant(p, traj.T(), std::numeric_limits<double>::quiet_NaN());
  out.mask = MaskMatrix::Constant(traj.T(), p, false);
  for (int t = 0; t < traj.T(); ++t)
    for (int j = 0; j < p; ++j)
      if (scheme.observed(t, j)) {
        out.mask(t, j) = true;
        out.values(j, t) = traj.X(j, t);
      }
  return out;
}

ObservationSet decompose(const MaskedSeries& series, SamplingScheme scheme) {
  const int p = series.p();
  const long T = series.T();
  if (series.mask.rows() != T || series.mask.cols() != p)
    throw StructuralError("mask shape does not match values");

  std::vector<long> anchors;
  for (long t = 0; t < T; ++t)
    if (series.mask.row(t).all()) anchors.push_back(t);
  if (anchors.size() < 2)
    throw SchemeError("record has fewer than two fully observed time points; no block can be formed");

  ObservationSet out;
  out.p = p;
  out.T = T;
  out.scheme = std::move(scheme);
  out.record = series;
  if (anchors.front() > 0)
    out.warnings.push_back("dropped " + std::to_string(anchors.front()) +
                           " leading time points before the first fully observed time");
  if (anchors.back() < T - 1)
    out.warnings.push_back("dropped " + std::to_string(T - 1 - anchors.back()) +
                           " trailing time points after the last fully observed time");

  for (std::size_t a = 0; a + 1 < anchors.size(); ++a) {
    Block b;
    b.t0 = anchors[a];
    b.t1 = anchors[a + 1];
    for (long t = b.t0; t <= b.t1; ++t) {
      std::vector<int> obs;
      for (int j = 0; j < p; ++j)
        if (series.mask(t, j)) obs.push_back(j);
      VectorXd vals(static_cast<Eigen::Index>(obs.size()));
      for (std::size_t i = 0; i < obs.size(); ++i) vals[i] = series.values(obs[i], t);
      b.observed.push_back(std::move(obs));
      b.values.push_back(std::move(vals));
    }
    out.blocks.push_back(std::move(b));
  }
  return out;
}

ObservationSet decompose(const MaskedSeries& series) {
  return decompose(series, mask_scheme(series.mask));
}

ObservationSet apply(const SamplingScheme& scheme, const Trajectory& traj) {
  return decompose(observe(scheme, traj), scheme);
}

}  // namespace svar
