#pragma once

// Observation schemes and the decomposition of observed data into blocks
// bounded by fully observed time points. Times are 0-based internally: a
// series with rate k is observed at t = 0, k, 2k, ...

#include "svar/core.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace svar {

using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Sampling cases: none (fully observed), A (uniform subsampling),
/// B (mixed with a unit rate), C (mixed rates sharing a factor > 1),
/// D (mixed rates without common factor), or an explicit mask.
enum class SchemeKind { None, A, B, C, D, Mask };

std::string to_string(SchemeKind kind);

struct SamplingScheme {
  SchemeKind kind = SchemeKind::None;
  std::vector<int> rates;  // per series; empty for mask schemes
  MaskMatrix mask;         // T x p; used when kind == Mask

  int p() const;
  bool observed(long t, int series) const;
  bool fully_observed(long t) const;
};

SamplingScheme uniform_scheme(int p, int k);
SamplingScheme mixed_scheme(const std::vector<int>& rates);
SamplingScheme mask_scheme(MaskMatrix mask);

/// Least common multiple of the rates; 1 for mask schemes.
int k_star(const SamplingScheme& scheme);

/// A dense record with missing entries: values is p x T, mask is T x p.
/// Unobserved entries of `values` are NaN.
struct MaskedSeries {
  MatrixXd values;
  MaskMatrix mask;

  int p() const { return static_cast<int>(values.rows()); }
  int T() const { return static_cast<int>(values.cols()); }
};

/// Inserts k-1 fully hidden steps between consecutive records, so that a
/// record at time t maps to time t*k on the finer clock.
MaskedSeries refine(const MaskedSeries& series, int k);

/// Stretch of data between consecutive fully observed times t0 < t1.
struct Block {
  long t0 = 0;
  long t1 = 0;
  /// observed[s] lists observed series at time t0 + s, s = 0..t1-t0.
  std::vector<std::vector<int>> observed;
  /// values[s] holds the observed entries at time t0 + s in `observed` order.
  std::vector<VectorXd> values;

  int length() const { return static_cast<int>(t1 - t0); }
  /// Observation pattern key: length followed by interior observation bitmasks.
  std::vector<unsigned long long> pattern() const;
};

struct ObservationSet {
  std::vector<Block> blocks;
  int p = 0;
  long T = 0;
  SamplingScheme scheme;
  MaskedSeries record;
  std::vector<std::string> warnings;

  /// Observed scalars entering the conditional likelihood (first anchor excluded).
  long observed_count() const;
  /// Shock times covered by the blocks.
  long transition_count() const;
};

MaskedSeries observe(const SamplingScheme& scheme, const Trajectory& traj);

/// Splits a record into anchored blocks. Consecutive fully observed times
/// become unit blocks; data before the first or after the last anchor is
/// dropped with a warning. Throws SchemeError when fewer than two anchors exist.
ObservationSet decompose(const MaskedSeries& series, SamplingScheme scheme);
ObservationSet decompose(const MaskedSeries& series);

ObservationSet apply(const SamplingScheme& scheme, const Trajectory& traj);

}  // namespace svar
