#include "svar/error.hpp"
#include "svar/selection.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace svar;
using namespace svar::testing;

namespace {

SvarModel lower_truth() {
  return {(MatrixXd(2, 2) << 0.98, 0.0, 0.2, 0.98).finished(),
          (MatrixXd(2, 2) << 1.0, 0.0, -0.2, 1.0).finished(),
          {asymmetric_shock(1.0), asymmetric_shock(-1.0)}};
}

}  // namespace

TEST_CASE("parameter counts") {
  CHECK(count_params(parse_variant("identity", 2), 2, 2) == 14);
  CHECK(count_params(parse_variant("free", 2), 2, 2) == 16);
  CHECK(count_params(parse_variant("diagonal", 2), 2, 2) == 14);
  CHECK(count_params(parse_variant("lower", 2), 2, 2) == 15);
  CHECK(count_params(parse_variant("free", 3), 3, 1) == 9 + 9 + 3);
  CHECK(count_params(parse_variant("identity", 1), 1, 3) == 1 + 8);
}

TEST_CASE("BIC arithmetic") {
  FitResult fit;
  fit.theta = Theta::from_model(lower_truth());
  fit.loglik = -123.5;
  const ModelVariant v = parse_variant("free", 2);
  CHECK(bic(fit, v, 400) == doctest::Approx(247.0 + 16.0 * std::log(400.0)).epsilon(1e-14));
  fit.loglik = -100.0;
  CHECK(bic(fit, v, 400) < 247.0 + 16.0 * std::log(400.0));
  CHECK(bic(fit, v, 1) == doctest::Approx(200.0));
  fit.failed = true;
  CHECK_THROWS_AS(bic(fit, v, 400), NumericalError);
}

TEST_CASE("variant parsing") {
  const ModelVariant lower = parse_variant("lower", 2);
  CHECK(lower.constraint.kind == ConstraintKind::Mask);
  CHECK(lower.constraint.is_free(1, 0));
  CHECK_FALSE(lower.constraint.is_free(0, 1));
  const ModelVariant mask = parse_variant("10/11", 2, 3, 1);
  CHECK(mask.constraint.mask == lower.constraint.mask);
  CHECK(mask.k == 3);
  CHECK(mask.m == 1);
  CHECK(parse_variant("identity", 2).constraint.kind == ConstraintKind::Identity);
  CHECK_THROWS_AS(parse_variant("11/11", 2), ArgumentError);
  CHECK_THROWS_AS(parse_variant("10/1", 2), ArgumentError);
  CHECK_THROWS_AS(parse_variant("sideways", 2), ArgumentError);
}

TEST_CASE("a single candidate is returned with its score") {
  const ObservationSet obs = apply(uniform_scheme(2, 1), simulate_stationary(lower_truth(), 150, 1));
  EmConfig cfg;
  cfg.max_iterations = 200;
  const auto out = select(obs, {parse_variant("lower", 2)}, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].n == obs.observed_count());
  CHECK(out[0].d == 15);
  CHECK(out[0].bic == doctest::Approx(bic(out[0].fit, out[0].variant, out[0].n)));
  CHECK(std::isfinite(out[0].bic));
  CHECK_THROWS_AS(select(obs, {}, cfg), ArgumentError);
}

TEST_CASE("nested variants are warm-started and ordered by likelihood") {
  const ObservationSet obs = apply(uniform_scheme(2, 1), simulate_stationary(lower_truth(), 300, 2));
  EmConfig cfg;
  cfg.restarts = 2;
  cfg.max_iterations = 300;
  const std::vector<ModelVariant> variants{parse_variant("free", 2), parse_variant("diagonal", 2),
                                           parse_variant("lower", 2)};
  const auto out = select(obs, variants, cfg);
  REQUIRE(out.size() == 3);
  double ll[3];
  for (const auto& s : out) {
    ll[s.order] = s.fit.loglik;
    if (s.variant.name == "free") {
      CHECK(s.fit.restarts.size() == 4);  // two random plus diagonal and lower
    }
    if (s.variant.name == "diagonal") CHECK(s.fit.restarts.size() == 2);
  }
  // Warm starts make the larger model at least as good as the nested ones, up
  // to the convergence tolerance.
  CHECK(ll[0] >= ll[1] - 1e-6 * std::abs(ll[1]));
  CHECK(ll[2] >= ll[1] - 1e-6 * std::abs(ll[1]));
  for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i - 1].bic <= out[i].bic);
}

TEST_CASE("refinement factors are scored on the same observed count") {
  const ObservationSet obs = apply(uniform_scheme(2, 1), simulate_stationary(lower_truth(), 60, 3));
  EmConfig cfg;
  cfg.max_iterations = 50;
  std::vector<ModelVariant> variants;
  for (int k : {1, 2})
    for (const char* name : {"identity", "free"}) variants.push_back(parse_variant(name, 2, k));
  const auto out = select(obs, variants, cfg);
  for (const auto& s : out) CHECK(s.n == obs.observed_count());

  const std::string table = format_selection_table(out);
  std::istringstream in(table);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].find("k=1") != std::string::npos);
  CHECK(lines[0].find("k=2") != std::string::npos);
  CHECK(lines[1].rfind("identity", 0) == 0);
  CHECK(lines[2].rfind("free", 0) == 0);
}
