#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mxfar::cli {

/// Exit status categories.
enum Exit : int {
    Ok = 0,
    Internal = 1,
    Usage = 2,
    Input = 3,          ///< ingestion, I/O
    Configuration = 4,  ///< invalid flags or model specification
    Estimation = 5,     ///< singular systems, gaps, empty neighborhoods, selection
    Inference = 6,      ///< bootstrap drop rate
    Simulation = 7,     ///< generation, stability, extrapolation
    Mismatch = 8,       ///< rerun did not reproduce the recorded outputs
};

/// Runs one subcommand; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mxfar::cli
