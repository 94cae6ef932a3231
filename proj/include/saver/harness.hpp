#pragma once

#include "saver/baselines.hpp"
#include "saver/dataset.hpp"
#include "saver/feeder.hpp"
#include "saver/linearization.hpp"
#include "saver/powerflow.hpp"
#include "saver/rl_agent.hpp"
#include "saver/safety_layer.hpp"

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace saver {

struct ControlDecision {
  Eigen::VectorXd raw;      // controller output
  Eigen::VectorXd applied;  // after projection, if any
  bool projected = false;
  ProjectionStatus status = ProjectionStatus::Optimal;
  int active = 0;
  double slack = 0;
  int iterations = 0;
  double t_inference = 0;   // seconds
  double t_projection = 0;
};

class Controller {
 public:
  virtual ~Controller() = default;
  virtual std::string name() const = 0;
  /// Called at the start of every episode.
  virtual void reset() {}
  virtual ControlDecision decide(const State& s, const Eigen::VectorXd& q_background) = 0;
};

class NoopController final : public Controller {
 public:
  explicit NoopController(Eigen::Index num_controllable) : m_(num_controllable) {}
  std::string name() const override { return "noop"; }
  ControlDecision decide(const State& s, const Eigen::VectorXd& q_background) override;

 private:
  Eigen::Index m_;
};

class LinearController final : public Controller {
 public:
  explicit LinearController(LinearPolicy policy) : policy_(std::move(policy)) {}
  std::string name() const override { return "linear"; }
  void reset() override { policy_.reset(); }
  ControlDecision decide(const State& s, const Eigen::VectorXd& q_background) override;

 private:
  LinearPolicy policy_;
};

struct SafetySettings {
  ProjectionOptions projection;
  double voltage_margin = 0;  // per-unit^2 tightening of both voltage bounds
  bool warm_start = true;
};

/// Deterministic actor, optionally followed by the safety projection.
class RlController final : public Controller {
 public:
  RlController(const Feeder& f, DdpgAgent agent);
  RlController(const Feeder& f, DdpgAgent agent, const SafetySettings& safety);

  std::string name() const override { return layer_ ? "safe_rl" : "rl"; }
  void reset() override { warm_ = {}; }
  ControlDecision decide(const State& s, const Eigen::VectorXd& q_background) override;

 private:
  DdpgAgent agent_;
  std::shared_ptr<const SensitivityModel<double>> model_;
  std::optional<SafetyLayer<double>> layer_;
  SafetySettings safety_;
  Eigen::VectorXd lo_, hi_, q_lo_, q_hi_;
  WarmStart<double> warm_;
};

/// `name` is one of linear, rl, safe_rl, noop. The RL variants need an agent.
std::unique_ptr<Controller> make_controller(const std::string& name, const Feeder& f, const DdpgAgent* agent,
                                            const SafetySettings& safety = {});

struct StepRecord {
  int step = 0;
  Eigen::VectorXd v_obs;      // observed squared voltages (N)
  Eigen::VectorXd p;          // active injections (N)
  Eigen::VectorXd q_raw;      // per controllable bus
  Eigen::VectorXd q_applied;
  std::string status = "none";  // projection status, "none" without projection
  int active = 0;
  double slack = 0;
  Eigen::VectorXd v;          // nonlinear squared voltages, all buses (N+1)
  double reward = 0;
  double t_inference = 0;
  double t_projection = 0;
  double linear_violation = 0;  // worst linear-model bound violation of the applied action
};

struct EpisodeRecord {
  std::string controller;
  int episode = 0;
  std::string label;
  std::vector<StepRecord> steps;
};

struct EvalConfig {
  double eta = 0.1;
  int steps_per_episode = 0;  // 0: whole episode
  PowerFlowOptions powerflow;
};

/// Runs `controller` over every episode of `data` with the nonlinear power
/// flow as the plant. Power-flow failures are rethrown with the step index.
std::vector<EpisodeRecord> evaluate(const Feeder& f, Controller& controller, const LoadDataset& data,
                                    const EvalConfig& cfg = {});

struct MethodSummary {
  std::string name;
  long steps = 0;
  long bus_steps = 0;
  long violations = 0;
  double violation_pct = 0;    // nonlinear magnitudes outside the band, all buses
  double mean_time = 0;        // seconds per step, inference + projection
  double median_time = 0;
  double mean_abs_q_kvar = 0;
  long projected = 0;
  long relaxed = 0;
  long failed = 0;
  double max_linear_violation_optimal = 0;
  Eigen::VectorXd deviation_mean;  // per bus, |v|^(1/2) - v0^(1/2), all buses
  Eigen::VectorXd deviation_var;
};

struct ResultSummary {
  std::vector<MethodSummary> methods;

  const MethodSummary& method(const std::string& name) const;
};

/// Pure fold over the records, grouped by controller in order of first
/// appearance.
ResultSummary summarize(const std::vector<EpisodeRecord>& records, const Feeder& f);

/// Writes the feeder and one CSV per episode record into `dir`.
void write_records(const std::string& dir, const std::vector<EpisodeRecord>& records, const Feeder& f);
struct StoredRecords {
  Feeder feeder;
  std::vector<EpisodeRecord> records;
};
StoredRecords read_records(const std::string& dir);

/// summary.csv, summary.txt, voltages.csv and deviation.csv in `out_dir`.
void report(const ResultSummary& summary, const std::vector<EpisodeRecord>& records, const Feeder& f,
            const std::string& out_dir);

}  // namespace saver
