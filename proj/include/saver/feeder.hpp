#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace saver {

/// Error raised while loading or validating a feeder description.
class FeederError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bus {
  int id = 0;
  std::string name;
  bool controllable = false;
  double q_min = -0.1;  // per-unit, used only when controllable
  double q_max = 0.1;
  double p_load = 0.0;  // nominal active demand, per-unit, consumption positive
  double q_load = 0.0;  // nominal reactive demand, per-unit, consumption positive
};

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;  // per-unit
  double x = 0.0;  // per-unit
};

/// Immutable radial feeder rooted at bus 0.
///
/// Bus ids are dense (0..N). Every non-root bus j owns exactly one parent
/// line; vectors indexed "by node" use position j-1. All electrical
/// quantities are per-unit and voltages are squared magnitudes.
class Feeder {
 public:
  struct Limits {
    double v0 = 1.0;           // squared head voltage
    double v_mag_lower = 0.95; // magnitude bounds, applied to every bus
    double v_mag_upper = 1.05;
  };
  struct Bases {
    double kV = 12.0;
    double MVA = 5.0;
  };

  Feeder(std::vector<Bus> buses, std::vector<Line> lines, Limits limits, Bases bases);

  int num_buses() const { return static_cast<int>(buses_.size()); }
  /// Number of non-root buses (N).
  int num_nodes() const { return num_buses() - 1; }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Line>& lines() const { return lines_; }
  const Bus& bus(int id) const;
  const Limits& limits() const { return limits_; }
  const Bases& bases() const { return bases_; }

  double v0() const { return limits_.v0; }
  /// Per-node squared-voltage bounds (length N).
  const Eigen::VectorXd& v_lower() const { return v_lower_; }
  const Eigen::VectorXd& v_upper() const { return v_upper_; }

  int parent(int id) const;
  /// Index into lines() of the line feeding bus `id`.
  int parent_line(int id) const;
  const std::vector<int>& children(int id) const;
  /// Root-first breadth-first order; parents always precede children.
  const std::vector<int>& topological_order() const { return order_; }

  /// Ids of controllable buses in ascending order.
  const std::vector<int>& controllable() const { return controllable_; }
  Eigen::VectorXd q_min() const;  // per controllable bus
  Eigen::VectorXd q_max() const;

  /// Nominal per-node demand (length N, consumption positive).
  Eigen::VectorXd p_load() const;
  Eigen::VectorXd q_load() const;

  /// Stable hash of topology, impedances and limits; stored in checkpoints.
  std::string fingerprint() const;

  bool operator==(const Feeder& other) const;

 private:
  void check_bus(int id) const;

  std::vector<Bus> buses_;
  std::vector<Line> lines_;
  Limits limits_;
  Bases bases_;
  Eigen::VectorXd v_lower_, v_upper_;
  std::vector<int> parent_, parent_line_, order_, controllable_;
  std::vector<std::vector<int>> children_;
};

/// All buses whose path to the root passes through `id`, including `id`.
std::vector<int> subtree_buses(const Feeder& f, int id);

/// Lines (as indices into f.lines()) from the root down to `id`.
std::vector<int> path_to_root(const Feeder& f, int id);

Feeder parse_feeder(std::istream& in, const std::string& source = "<stream>");
Feeder load_feeder(const std::string& path);
void write_feeder(std::ostream& out, const Feeder& f);
void save_feeder(const std::string& path, const Feeder& f);

}  // namespace saver
