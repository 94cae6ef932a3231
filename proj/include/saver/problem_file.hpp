#pragma once

#include "saver/feeder.hpp"
#include "saver/linearization.hpp"
#include "saver/safety_layer.hpp"

#include <iosfwd>
#include <memory>
#include <string>

namespace saver {

/// A projection instance read from a `[problem]` file:
///
///   [problem]
///   feeder = ieee13.feeder       # relative to the problem file
///   q_proposed = 0.1 0.1 ...      # one per controllable bus
///   p = ...                       # optional, N values, default nominal loads
///   q_background = ...            # optional, N values, default nominal loads
///   v_lower = ... / v_upper = ... # optional, N squared values
///   q_lower = ... / q_upper = ... # optional, one per controllable bus
///   tol = 1e-7                    # optional
struct ProblemFile {
  std::shared_ptr<const Feeder> feeder;
  std::shared_ptr<const SensitivityModel<double>> model;
  ProjectionProblem<double> problem;
  double tol = 1e-7;
};

ProblemFile parse_problem(std::istream& in, const std::string& source, const std::string& base_dir = ".");
ProblemFile load_problem(const std::string& path);

/// `key = value` lines describing the result.
void write_projection_result(std::ostream& out, const ProjectionResult<double>& r, const ProblemFile& p);

}  // namespace saver
