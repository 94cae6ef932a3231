#pragma once

#include "saver/feeder.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace saver {

/// One day (or other contiguous window) of nodal injections. Rows are time
/// steps, columns are non-root buses; loads appear as negative values.
struct LoadEpisode {
  std::string label;  // "train", "test", ...
  Eigen::MatrixXd p;
  Eigen::MatrixXd q;

  Eigen::Index steps() const { return p.rows(); }
};

struct LoadDataset {
  double step_minutes = 5.0;
  int num_nodes = 0;
  std::vector<LoadEpisode> episodes;

  /// Episodes whose label equals `label`, in order.
  LoadDataset with_label(const std::string& label) const;
  void validate() const;
};

struct IngestOptions {
  double step_minutes = 5.0;    // target step after resampling
  int steps_per_episode = 0;    // 0: one episode per 24 h of data
  Eigen::VectorXd load_weights; // per node, empty: proportional to nominal p_load
  Eigen::VectorXd pv_weights;   // per node, empty: PV column ignored
  double scale = 1.0;           // applied to every demand and PV value
  std::string label = "test";
};

/// System-level CSV: a `timestamp` column (minutes, or `YYYY-MM-DD HH:MM[:SS]`),
/// one or more demand columns in MW (summed), and an optional `pv_mw` column.
/// Demand is split over buses by the load weights; reactive demand follows
/// each bus's nominal power factor.
LoadDataset ingest_profiles(std::istream& in, const Feeder& f, const IngestOptions& opts,
                            const std::string& source = "<stream>");
LoadDataset ingest_profiles_file(const std::string& path, const Feeder& f, const IngestOptions& opts);

/// Daily curves with a night trough, a morning shoulder and an evening peak,
/// optionally with rooftop PV under switching cloud cover.
struct SyntheticOptions {
  int days = 20;
  double step_minutes = 5.0;
  double load_scale = 1.0;     // multiplies the feeder's nominal loads
  double day_spread = 0.1;     // per-day scale drawn from 1 +- spread
  double peak_hour = 19.0;
  double peak_jitter = 0.0;    // std-dev in hours, drawn per bus and day
  double noise = 0.0;          // relative per-step, per-bus Gaussian noise
  double pv_capacity = 0.0;    // total per-unit PV at full sun
  std::vector<int> pv_buses;   // empty: every bus with nominal load
  double cloud_switch = 0.0;   // per-step probability of toggling cloud cover
  double cloud_depth = 0.75;   // fraction of PV lost under cloud
  std::uint64_t seed = 1;
  std::string label = "train";
};

LoadDataset synthesize_profiles(const Feeder& f, const SyntheticOptions& opts);

/// Per-bus dataset as CSV: episode,label,step,p_1..p_N,q_1..q_N.
void write_dataset_csv(std::ostream& out, const LoadDataset& d);
void save_dataset_csv(const std::string& path, const LoadDataset& d);
LoadDataset read_dataset_csv(std::istream& in, const std::string& source = "<stream>");
/// Reads either format, chosen by the header.
LoadDataset load_dataset(const std::string& path, const Feeder& f, const IngestOptions& opts);

}  // namespace saver
