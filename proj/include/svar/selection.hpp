#pragma once

// BIC scoring of structural variants and candidate refinement factors.

#include "svar/em.hpp"
#include "svar/sampling.hpp"

#include <string>
#include <vector>

namespace svar {

struct ModelVariant {
  std::string name;
  StructuralConstraint constraint;
  /// Number of latent steps per record step; the record is refined by
  /// inserting k-1 hidden steps between consecutive rows.
  int k = 1;
  int m = 2;
};

/// Named variants: "free", "identity", "diagonal", "lower", "upper", or a
/// mask written row by row as in "10/11".
ModelVariant parse_variant(const std::string& name, int p, int k = 1, int m = 2);

struct ScoredModel {
  ModelVariant variant;
  FitResult fit;
  int d = 0;
  long n = 0;
  double bic = 0.0;
  int order = 0;  // position in the input variant list
};

/// p^2 for A, the free entries of C, and per series (m-1) weights, m means
/// and m-1 variances (m variances under the identity constraint).
int count_params(const ModelVariant& variant, int p, int m);

/// Throws NumericalError when the fit failed.
double bic(const FitResult& fit, const ModelVariant& variant, long n);

/// Fits every variant and returns them sorted by BIC, then by parameter count,
/// then by input order. Variants with the same k and m whose free W entries
/// contain another variant's are warm-started from that variant's optimum.
std::vector<ScoredModel> select(const ObservationSet& obs,
                                const std::vector<ModelVariant>& variants,
                                const EmConfig& config);

/// Model by k grid of BIC values.
std::string format_selection_table(const std::vector<ScoredModel>& scored);

}  // namespace svar
