#pragma once

// JSON and CSV serialization.
//
// Data CSV: header `t,x1,...,xp`, t counting from 1, missing entries empty.
// Numbers are written in shortest round-trip form.

#include "svar/core.hpp"
#include "svar/em.hpp"
#include "svar/sampling.hpp"
#include "svar/selection.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace svar {

using json = nlohmann::json;

std::string format_double(double x);

json matrix_to_json(const MatrixXd& M);
MatrixXd matrix_from_json(const json& j);

json model_to_json(const SvarModel& model);
SvarModel model_from_json(const json& j);

json theta_to_json(const Theta& theta);
Theta theta_from_json(const json& j);

/// Deterministic content only; wall-clock figures go to fit_timings_json.
json fit_to_json(const FitResult& fit);
FitResult fit_from_json(const json& j);
json fit_timings_json(const FitResult& fit);

json selection_to_json(const std::vector<ScoredModel>& scored);

std::string series_to_csv(const MaskedSeries& series);
MaskedSeries series_from_csv(const std::string& text);

/// File helpers; failures raise IoError naming the path.
std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);
json read_json(const std::string& path);
void write_json(const std::string& path, const json& j);

}  // namespace svar
