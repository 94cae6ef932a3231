#pragma once

#include "saver/dataset.hpp"
#include "saver/harness.hpp"
#include "saver/rl_agent.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace saver {

/// Experiment configuration file with sections [feeder], [rl], [safety]
/// and [experiment]. Relative paths are resolved against the file's
/// directory. Unknown sections and keys are rejected.
struct ExperimentConfig {
  std::string feeder_path;

  DdpgConfig agent;
  int episodes = 50;
  int steps_per_episode = 288;

  SafetySettings safety;
  bool safe = false;

  std::string data = "synthetic";  // or a CSV path
  double step_minutes = 5.0;
  bool full_res = false;           // 6 s steps
  SyntheticOptions synthetic;      // shared by the train and test days
  int train_days = 20;
  int test_days = 20;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 1001;
  int eval_steps = 0;
  std::vector<std::string> controllers{"noop", "linear", "rl", "safe_rl"};
  std::string output_dir = "out";

  /// Effective control step in minutes.
  double effective_step() const { return full_res ? 0.1 : step_minutes; }
  TrainConfig train_config() const;
  EvalConfig eval_config() const;
};

ExperimentConfig parse_config(std::istream& in, const std::string& source, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Train and test days, labeled "train" and "test".
LoadDataset build_dataset(const ExperimentConfig& cfg, const Feeder& f);

}  // namespace saver
