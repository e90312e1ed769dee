#pragma once

// Experiment commands behind the svar_cli executable.

#include "svar/core.hpp"
#include "svar/io.hpp"

#include <iosfwd>
#include <string>

namespace svar::cli {

enum ExitCode { kOk = 0, kInputError = 2, kNotConverged = 3 };

/// Named models: example1, a1_c1, a1_c2, a2_c1, a2_c2.
SvarModel preset_model(const std::string& name);

struct ConfoundDemo {
  MatrixXd A;
  MatrixXd A_k;
  MatrixXd L;
  MatrixXd covariance;
  MatrixXd cholesky;  // lower factor of the covariance
  int k = 2;
  std::string text;
};

ConfoundDemo demo_confound(int k = 2);

// Each command reads the merged configuration (file values overridden by
// flags) and returns an exit code.
int cmd_simulate(const json& config, std::ostream& out);
int cmd_fit(const json& config, std::ostream& out);
int cmd_select(const json& config, std::ostream& out);
int cmd_eval(const json& config, std::ostream& out);
int cmd_demo_confound(std::ostream& out);

/// Full command-line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace svar::cli
