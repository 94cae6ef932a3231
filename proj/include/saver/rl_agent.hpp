#pragma once

#include "saver/dataset.hpp"
#include "saver/feeder.hpp"
#include "saver/nn.hpp"
#include "saver/powerflow.hpp"
#include "saver/safety_layer.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace saver {

/// Observation: squared voltages seen at the end of the previous step and
/// the active injections of the current step (both length N).
struct State {
  Eigen::VectorXd v;
  Eigen::VectorXd p;

  Eigen::VectorXd stacked() const;
};

struct Transition {
  Eigen::VectorXd s;  // stacked state
  Eigen::VectorXd a;  // applied action, per controllable bus
  double r = 0;
  Eigen::VectorXd s_next;
  bool done = false;
};

/// Fixed-capacity ring buffer. Once full, each push overwrites the oldest
/// entry.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return slots_.size(); }
  /// Slot the next push will write.
  std::size_t next_slot() const { return next_; }
  const Transition& slot(std::size_t i) const;

  /// Uniform draw with replacement from the filled slots.
  std::vector<const Transition*> sample(std::size_t batch, std::mt19937_64& rng) const;

 private:
  std::vector<Transition> slots_;
  std::size_t next_ = 0;
  std::size_t size_ = 0;
};

/// r = -(||v - v0||^2 + eta ||q||^2) over the non-root buses.
double step_reward(const Eigen::VectorXd& v_nodes, double v0, const Eigen::VectorXd& q, double eta);

struct StepOutcome {
  State next;
  double reward = 0;
  bool done = false;        // power flow failed; episode ends
  Eigen::VectorXd v_all;    // all buses including the head, empty on failure
  int pf_iterations = 0;
};

/// Applies `action` together with the state's p and the background q, runs
/// the nonlinear power flow, and returns the next state (new voltages with
/// `p_next`) and the reward. A power-flow failure yields `failure_reward`,
/// done = true and an unchanged voltage vector.
StepOutcome env_step(const Feeder& f, const State& s, const Eigen::VectorXd& action,
                     const Eigen::VectorXd& q_background, const Eigen::VectorXd& p_next, double eta,
                     const PowerFlowOptions& pf = {}, double failure_reward = -10.0);

struct DdpgConfig {
  std::vector<int> hidden{64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 128;
  std::size_t warmup = 0;      // transitions before the first update, 0: batch_size
  int update_every = 1;        // environment steps per gradient update
  double noise_sigma = 0.05;   // fraction of the action range
  double noise_decay = 0.97;   // per episode
  double noise_min = 0.005;
  double eta = 0.1;
  double v_scale = 0.05;       // observation scaling for v - v0
  double p_scale = 0;          // observation scaling for p, 0: largest nominal load
  double failure_reward = -10.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct UpdateStats {
  double critic_loss = 0;
  double actor_objective = 0;
};

class DdpgAgent {
 public:
  DdpgAgent(const Feeder& f, DdpgConfig cfg);

  /// Deterministic policy output, inside the q box.
  Eigen::VectorXd act(const State& s) const;
  /// Policy output plus Gaussian exploration noise when `explore`, clipped.
  Eigen::VectorXd act(const State& s, bool explore);

  /// One critic and one actor step on `batch`, then soft target updates.
  UpdateStats update(const std::vector<const Transition*>& batch);

  void decay_noise();
  double noise_scale() const { return noise_; }
  long updates() const { return updates_; }

  const DdpgConfig& config() const { return cfg_; }
  const std::string& fingerprint() const { return fingerprint_; }
  int num_nodes() const { return n_; }
  const Eigen::VectorXd& q_min() const { return q_min_; }
  const Eigen::VectorXd& q_max() const { return q_max_; }

  Mlp<double>& actor() { return actor_; }
  Mlp<double>& critic() { return critic_; }
  const Mlp<double>& actor() const { return actor_; }
  const Mlp<double>& critic() const { return critic_; }
  const Mlp<double>& target_actor() const { return actor_target_; }
  const Mlp<double>& target_critic() const { return critic_target_; }

  /// Observation scaling applied before the networks.
  Eigen::MatrixXd normalize_states(const Eigen::MatrixXd& stacked) const;
  Eigen::MatrixXd to_unit_actions(const Eigen::MatrixXd& a) const;
  Eigen::MatrixXd from_unit_actions(const Eigen::MatrixXd& u) const;

  void save(std::ostream& out) const;
  /// Throws if the checkpoint was written for a different feeder.
  static DdpgAgent load(std::istream& in, const Feeder& f);
  void save_file(const std::string& path) const;
  static DdpgAgent load_file(const std::string& path, const Feeder& f);
  /// Feeder description embedded in a checkpoint file.
  static Feeder feeder_from_checkpoint(const std::string& path);

  bool operator==(const DdpgAgent& o) const;

 private:
  DdpgAgent() = default;

  DdpgConfig cfg_;
  std::string fingerprint_;
  std::string feeder_text_;
  int n_ = 0;
  double v0_ = 1.0;
  double p_scale_ = 1.0;
  Eigen::VectorXd q_min_, q_max_, mid_, half_;
  Mlp<double> actor_, critic_, actor_target_, critic_target_;
  Adam<double> actor_opt_, critic_opt_;
  std::mt19937_64 rng_;
  double noise_ = 0;
  long updates_ = 0;
};

/// Bus-steps whose voltage magnitude lies outside the feeder's band, over
/// every bus including the head.
int magnitude_violations(const Feeder& f, const Eigen::VectorXd& v_all);

struct TrainConfig {
  int episodes = 50;
  int steps_per_episode = 288;  // 0: whole episode
  bool safe = false;
  double voltage_margin = 0;    // tightening of the projection bounds, per-unit^2
  ProjectionOptions projection;
  bool warm_start = true;
  PowerFlowOptions powerflow;
};

struct TrainLogRow {
  int episode = 0;
  int day = 0;
  double episode_return = 0;
  int steps = 0;
  int violations = 0;          // nonlinear bus-steps outside the band
  int linear_violations = 0;   // steps with an optimal projection whose linear prediction is outside bounds
  int relaxed = 0;
  int failed = 0;
  int powerflow_failures = 0;
  int updates = 0;
  double critic_loss = 0;      // mean over the episode's updates
  double actor_objective = 0;
  double noise = 0;
  double wall_time = 0;        // seconds
};

struct TrainResult {
  DdpgAgent agent;
  std::vector<TrainLogRow> log;
};

/// Episodes sample days uniformly from `data`. With cfg.safe, every action
/// is projected before it reaches the feeder and the projected action is
/// what the replay buffer stores.
TrainResult train(const Feeder& f, const LoadDataset& data, const DdpgConfig& agent_cfg,
                  const TrainConfig& cfg, std::ostream* progress = nullptr);

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log);

}  // namespace saver
