#pragma once

#include <iosfwd>
#include <optional>
#include <string>

namespace gkelab {

// CLI exit contract: 0 success, 1 a gated criterion failed under --gate,
// 2 configuration error, 3 solver failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitGateFail = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;

struct RunArgs {
  std::string config_path;
  std::string out_dir;
  bool resume = false;
  bool gate = false;
  std::optional<long long> seed;        // overrides experiment.seed
  std::optional<double> tol;            // overrides experiment.tol
  std::optional<std::string> schedule;  // overrides experiment.schedule
};

// Runs one experiment end to end. The out directory receives the config
// echo (with every derived quantity), runlog.csv, summary.txt, checkpoints
// and kind-specific artifacts; progress lines go to log.
int run_experiment(const RunArgs& args, std::ostream& log);

// Prints the digest of a run directory; a directory missing required
// artifacts lists all of them and fails.
int report_run(const std::string& run_dir, std::ostream& out);

}  // namespace gkelab
