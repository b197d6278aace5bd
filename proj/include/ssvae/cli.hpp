#pragma once

#include <string>
#include <vector>

namespace ssvae {

// Full command-line front end; returns the process exit code.
// 0 success, 1 check failure, 2 config/data error, 3 incompatible checkpoint.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);  // convenience for tests

struct GradcheckRow {
  std::string component;
  std::string group;
  double max_rel_err = 0.0;
};

// Finite-difference sweep over every cell kind, encoder, classifier, the
// labeled and enumerated unlabeled bounds, and the S1 regression.
// `corrupt` scales one analytic gradient as a negative control.
std::vector<GradcheckRow> run_gradcheck(double tolerance, bool corrupt,
                                        std::vector<std::string>* log = nullptr);

}  // namespace ssvae
