#include "svar/selection.hpp"

#include "svar/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace svar {

ModelVariant parse_variant(const std::string& name, int p, int k, int m) {
  ModelVariant v{name, StructuralConstraint::free(), k, m};
  if (name == "free") return v;
  if (name == "identity") {
    v.constraint = StructuralConstraint::identity();
    return v;
  }
  MaskMatrix mask = MaskMatrix::Constant(p, p, false);
  if (name == "diagonal") {
    mask.diagonal().setConstant(true);
  } else if (name == "lower") {
    for (int r = 0; r < p; ++r)
      for (int c = 0; c <= r; ++c) mask(r, c) = true;
  } else if (name == "upper") {
    for (int r = 0; r < p; ++r)
      for (int c = r; c < p; ++c) mask(r, c) = true;
  } else {
    int r = 0, c = 0;
    for (char ch : name) {
      if (ch == '/') {
        if (c != p) throw ArgumentError("mask row has wrong length: " + name);
        ++r, c = 0;
        continue;
      }
      if ((ch != '0' && ch != '1') || r >= p || c >= p)
        throw ArgumentError("unknown variant: " + name);
      mask(r, c++) = ch == '1';
    }
    if (r != p - 1 || c != p) throw ArgumentError("mask has wrong shape: " + name);
  }
  v.constraint = StructuralConstraint::pattern(mask);
  v.constraint.check(p);
  return v;
}

int count_params(const ModelVariant& variant, int p, int m) {
  const bool fixed = variant.constraint.scale_fixed();
  const int per_series = (m - 1) + m + (fixed ? m - 1 : m);
  return p * p + variant.constraint.free_count(p) + p * per_series;
}

double bic(const FitResult& fit, const ModelVariant& variant, long n) {
  if (fit.failed) throw NumericalError("cannot score a failed fit: " + fit.message);
  const int d = count_params(variant, fit.theta.p(), fit.theta.m());
  return -2.0 * fit.loglik + d * std::log(static_cast<double>(n));
}

namespace {

// Every free entry of `inner` is free in `outer`.
bool nested(const StructuralConstraint& inner, const StructuralConstraint& outer, int p) {
  if (inner.kind == ConstraintKind::Identity) return true;
  if (outer.kind == ConstraintKind::Identity) return false;
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < p; ++c)
      if (inner.is_free(r, c) && !outer.is_free(r, c)) return false;
  return true;
}

}  // namespace

std::vector<ScoredModel> select(const ObservationSet& obs,
                                const std::vector<ModelVariant>& variants,
                                const EmConfig& config) {
  if (variants.empty()) throw ArgumentError("select needs at least one variant");
  const int p = obs.p;
  const long n = obs.observed_count();

  std::map<int, ObservationSet> refined;
  for (const auto& v : variants) {
    if (v.k < 1) throw ArgumentError("refinement factor must be at least 1");
    v.constraint.check(p);
    if (!refined.count(v.k))
      refined.emplace(v.k, v.k == 1 ? obs : decompose(refine(obs.record, v.k)));
  }

  std::vector<int> order(variants.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& va = variants[a];
    const auto& vb = variants[b];
    const int fa = va.constraint.kind == ConstraintKind::Identity ? -1 : va.constraint.free_count(p);
    const int fb = vb.constraint.kind == ConstraintKind::Identity ? -1 : vb.constraint.free_count(p);
    return fa < fb;
  });

  std::vector<ScoredModel> out(variants.size());
  std::vector<bool> ok(variants.size(), false);
  for (int idx : order) {
    const ModelVariant& v = variants[idx];
    EmConfig cfg = config;
    cfg.constraint = v.constraint;
    cfg.components = v.m;
    std::vector<Theta> warm;
    for (std::size_t other = 0; other < variants.size(); ++other) {
      if (!ok[other] || static_cast<int>(other) == idx) continue;
      const auto& u = variants[other];
      if (u.k == v.k && u.m == v.m && nested(u.constraint, v.constraint, p))
        warm.push_back(conform(out[other].fit.theta, v.constraint));
    }
    ScoredModel& s = out[idx];
    s.variant = v;
    s.order = idx;
    s.n = n;
    s.d = count_params(v, p, v.m);
    try {
      s.fit = multi_start_fit(refined.at(v.k), cfg, warm);
      s.bic = bic(s.fit, v, n);
      ok[idx] = true;
    } catch (const NumericalError& e) {
      s.fit.failed = true;
      s.fit.message = e.what();
      s.bic = std::numeric_limits<double>::infinity();
    }
  }
  if (std::none_of(ok.begin(), ok.end(), [](bool b) { return b; }))
    throw NumericalError("every variant failed to fit");

  std::stable_sort(out.begin(), out.end(), [](const ScoredModel& a, const ScoredModel& b) {
    if (a.bic != b.bic) return a.bic < b.bic;
    if (a.d != b.d) return a.d < b.d;
    return a.order < b.order;
  });
  return out;
}

std::string format_selection_table(const std::vector<ScoredModel>& scored) {
  std::vector<std::string> names;
  std::vector<int> ks;
  std::map<std::pair<std::string, int>, double> grid;
  std::vector<ScoredModel> by_order = scored;
  std::sort(by_order.begin(), by_order.end(),
            [](const ScoredModel& a, const ScoredModel& b) { return a.order < b.order; });
  for (const auto& s : by_order) {
    if (std::find(names.begin(), names.end(), s.variant.name) == names.end())
      names.push_back(s.variant.name);
    if (std::find(ks.begin(), ks.end(), s.variant.k) == ks.end()) ks.push_back(s.variant.k);
    grid[{s.variant.name, s.variant.k}] = s.bic;
  }
  std::sort(ks.begin(), ks.end());

  std::size_t w0 = 5;
  for (const auto& nm : names) w0 = std::max(w0, nm.size());
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), "model");
  os << buf;
  for (int k : ks) {
    std::snprintf(buf, sizeof buf, " %14s", ("k=" + std::to_string(k)).c_str());
    os << buf;
  }
  os << '\n';
  for (const auto& nm : names) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(w0), nm.c_str());
    os << buf;
    for (int k : ks) {
      auto it = grid.find({nm, k});
      if (it == grid.end())
        std::snprintf(buf, sizeof buf, " %14s", "-");
      else
        std::snprintf(buf, sizeof buf, " %14.2f", it->second);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace svar
