#include "saver/feeder.hpp"

#include "saver/textfile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <queue>
#include <sstream>

namespace saver {

namespace {

std::string line_label(const Line& l) {
  return "line " + std::to_string(l.from_bus) + "-" + std::to_string(l.to_bus);
}

std::string exact(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

Feeder::Feeder(std::vector<Bus> buses, std::vector<Line> lines, Limits limits, Bases bases)
    : buses_(std::move(buses)), lines_(std::move(lines)), limits_(limits), bases_(bases) {
  const int n_bus = static_cast<int>(buses_.size());
  if (n_bus < 2) throw FeederError("feeder needs a root and at least one more bus");

  std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (int i = 0; i < n_bus; ++i) {
    const Bus& b = buses_[i];
    if (b.id != i) {
      throw FeederError("bus ids must be unique and dense 0.." + std::to_string(n_bus - 1) +
                        "; offending bus id " + std::to_string(b.id));
    }
    if (b.controllable) {
      if (i == 0) throw FeederError("bus 0 (feeder head) cannot be controllable");
      if (!(b.q_min <= 0.0 && 0.0 <= b.q_max && b.q_min < b.q_max)) {
        throw FeederError("bus " + std::to_string(i) + ": need q_min <= 0 <= q_max with q_min < q_max");
      }
    }
    if (!std::isfinite(b.p_load) || !std::isfinite(b.q_load)) {
      throw FeederError("bus " + std::to_string(i) + ": non-finite load");
    }
  }

  if (!(limits_.v0 > 0.0) || !(limits_.v_mag_lower > 0.0) ||
      !(limits_.v_mag_lower < limits_.v_mag_upper)) {
    throw FeederError("limits: need v0 > 0 and 0 < v_mag_lower < v_mag_upper");
  }
  const double lo = limits_.v_mag_lower * limits_.v_mag_lower;
  const double hi = limits_.v_mag_upper * limits_.v_mag_upper;
  if (!(lo < limits_.v0 && limits_.v0 < hi)) {
    throw FeederError("limits: squared bounds must straddle v0");
  }
  if (!(bases_.kV > 0.0) || !(bases_.MVA > 0.0)) throw FeederError("bases must be positive");

  std::vector<std::vector<std::pair<int, int>>> adjacency(n_bus);
  for (int e = 0; e < static_cast<int>(lines_.size()); ++e) {
    const Line& l = lines_[e];
    if (l.from_bus < 0 || l.from_bus >= n_bus || l.to_bus < 0 || l.to_bus >= n_bus) {
      throw FeederError(line_label(l) + ": unknown bus");
    }
    if (l.from_bus == l.to_bus) throw FeederError(line_label(l) + ": self loop");
    if (!(l.r > 0.0) || !(l.x > 0.0) || !std::isfinite(l.r) || !std::isfinite(l.x)) {
      throw FeederError(line_label(l) + ": impedance must be positive (r > 0, x > 0)");
    }
    adjacency[l.from_bus].emplace_back(l.to_bus, e);
    adjacency[l.to_bus].emplace_back(l.from_bus, e);
  }

  parent_.assign(n_bus, -1);
  parent_line_.assign(n_bus, -1);
  children_.assign(n_bus, {});
  std::vector<bool> seen(n_bus, false);
  std::vector<bool> used(lines_.size(), false);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = true;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    order_.push_back(u);
    for (const auto& [w, e] : adjacency[u]) {
      if (used[e]) continue;
      used[e] = true;
      if (seen[w]) throw FeederError("topology is not a tree: " + line_label(lines_[e]) + " closes a cycle");
      seen[w] = true;
      parent_[w] = u;
      parent_line_[w] = e;
      children_[u].push_back(w);
      // store lines oriented parent -> child
      lines_[e].from_bus = u;
      lines_[e].to_bus = w;
      frontier.push(w);
    }
  }
  for (int i = 0; i < n_bus; ++i) {
    if (!seen[i]) throw FeederError("topology is not a tree: bus " + std::to_string(i) + " is disconnected");
  }

  for (const Bus& b : buses_) {
    if (b.controllable) controllable_.push_back(b.id);
  }
  v_lower_ = Eigen::VectorXd::Constant(n_bus - 1, lo);
  v_upper_ = Eigen::VectorXd::Constant(n_bus - 1, hi);
}

void Feeder::check_bus(int id) const {
  if (id < 0 || id >= num_buses()) throw FeederError("unknown bus id " + std::to_string(id));
}

const Bus& Feeder::bus(int id) const {
  check_bus(id);
  return buses_[id];
}

int Feeder::parent(int id) const {
  check_bus(id);
  return parent_[id];
}

int Feeder::parent_line(int id) const {
  check_bus(id);
  return parent_line_[id];
}

const std::vector<int>& Feeder::children(int id) const {
  check_bus(id);
  return children_[id];
}

Eigen::VectorXd Feeder::q_min() const {
  Eigen::VectorXd out(controllable_.size());
  for (std::size_t k = 0; k < controllable_.size(); ++k) out(k) = buses_[controllable_[k]].q_min;
  return out;
}

Eigen::VectorXd Feeder::q_max() const {
  Eigen::VectorXd out(controllable_.size());
  for (std::size_t k = 0; k < controllable_.size(); ++k) out(k) = buses_[controllable_[k]].q_max;
  return out;
}

Eigen::VectorXd Feeder::p_load() const {
  Eigen::VectorXd out(num_nodes());
  for (int j = 1; j < num_buses(); ++j) out(j - 1) = buses_[j].p_load;
  return out;
}

Eigen::VectorXd Feeder::q_load() const {
  Eigen::VectorXd out(num_nodes());
  for (int j = 1; j < num_buses(); ++j) out(j - 1) = buses_[j].q_load;
  return out;
}

std::string Feeder::fingerprint() const {
  std::ostringstream os;
  write_feeder(os, *this);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << h;
  return hex.str();
}

bool Feeder::operator==(const Feeder& other) const {
  if (buses_.size() != other.buses_.size() || lines_.size() != other.lines_.size()) return false;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    const Bus& a = buses_[i];
    const Bus& b = other.buses_[i];
    if (a.id != b.id || a.name != b.name || a.controllable != b.controllable || a.q_min != b.q_min ||
        a.q_max != b.q_max || a.p_load != b.p_load || a.q_load != b.q_load) {
      return false;
    }
  }
  for (std::size_t e = 0; e < lines_.size(); ++e) {
    const Line& a = lines_[e];
    const Line& b = other.lines_[e];
    if (a.from_bus != b.from_bus || a.to_bus != b.to_bus || a.r != b.r || a.x != b.x) return false;
  }
  return limits_.v0 == other.limits_.v0 && limits_.v_mag_lower == other.limits_.v_mag_lower &&
         limits_.v_mag_upper == other.limits_.v_mag_upper && bases_.kV == other.bases_.kV &&
         bases_.MVA == other.bases_.MVA;
}

std::vector<int> subtree_buses(const Feeder& f, int id) {
  f.bus(id);
  std::vector<int> out{id};
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (int c : f.children(out[k])) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> path_to_root(const Feeder& f, int id) {
  f.bus(id);
  std::vector<int> out;
  for (int j = id; j != 0; j = f.parent(j)) out.push_back(f.parent_line(j));
  std::reverse(out.begin(), out.end());
  return out;
}

Feeder parse_feeder(std::istream& in, const std::string& source) {
  const SectionedText doc = SectionedText::parse(in, source);
  doc.require_known({"bases", "limits", "buses", "lines"});
  for (const char* required : {"bases", "limits", "buses", "lines"}) {
    if (doc.find(required) == nullptr) {
      throw FeederError(source + ": missing section [" + std::string(required) + "]");
    }
  }

  const KeyValues bases_kv(*doc.find("bases"), source);
  bases_kv.require_known({"kV", "MVA"});
  Feeder::Bases bases{bases_kv.number("kV"), bases_kv.number("MVA")};

  const KeyValues limits_kv(*doc.find("limits"), source);
  limits_kv.require_known({"v0", "v_mag_lower", "v_mag_upper"});
  Feeder::Limits limits;
  limits.v0 = limits_kv.number("v0", limits.v0);
  limits.v_mag_lower = limits_kv.number("v_mag_lower", limits.v_mag_lower);
  limits.v_mag_upper = limits_kv.number("v_mag_upper", limits.v_mag_upper);

  const Table bus_table = Table::from_section(*doc.find("buses"), source);
  for (const auto& col : bus_table.header) {
    static const std::vector<std::string> known{"id", "name", "controllable", "q_min", "q_max",
                                                "p_load", "q_load"};
    if (std::find(known.begin(), known.end(), col) == known.end()) {
      throw FeederError(source + ": [buses] unknown column '" + col + "'");
    }
  }
  if (bus_table.column("id") < 0) throw FeederError(source + ": [buses] needs an 'id' column");

  std::vector<Bus> buses;
  for (std::size_t r = 0; r < bus_table.rows.size(); ++r) {
    const auto& row = bus_table.rows[r];
    const std::string loc = source + ":" + std::to_string(bus_table.row_lines[r]);
    Bus b;
    b.id = static_cast<int>(parse_long(row[bus_table.column("id")], loc));
    if (int c = bus_table.column("name"); c >= 0 && row[c] != "-") b.name = row[c];
    if (int c = bus_table.column("controllable"); c >= 0) b.controllable = parse_long(row[c], loc) != 0;
    if (int c = bus_table.column("q_min"); c >= 0) b.q_min = parse_double(row[c], loc);
    if (int c = bus_table.column("q_max"); c >= 0) b.q_max = parse_double(row[c], loc);
    if (int c = bus_table.column("p_load"); c >= 0) b.p_load = parse_double(row[c], loc);
    if (int c = bus_table.column("q_load"); c >= 0) b.q_load = parse_double(row[c], loc);
    buses.push_back(b);
  }

  const Table line_table = Table::from_section(*doc.find("lines"), source);
  for (const auto& col : line_table.header) {
    if (col != "from" && col != "to" && col != "r" && col != "x") {
      throw FeederError(source + ": [lines] unknown column '" + col + "'");
    }
  }
  for (const char* col : {"from", "to", "r", "x"}) {
    if (line_table.column(col) < 0) {
      throw FeederError(source + ": [lines] needs a '" + std::string(col) + "' column");
    }
  }
  std::vector<Line> lines;
  for (std::size_t r = 0; r < line_table.rows.size(); ++r) {
    const auto& row = line_table.rows[r];
    const std::string loc = source + ":" + std::to_string(line_table.row_lines[r]);
    Line l;
    l.from_bus = static_cast<int>(parse_long(row[line_table.column("from")], loc));
    l.to_bus = static_cast<int>(parse_long(row[line_table.column("to")], loc));
    l.r = parse_double(row[line_table.column("r")], loc);
    l.x = parse_double(row[line_table.column("x")], loc);
    lines.push_back(l);
  }

  try {
    return Feeder(std::move(buses), std::move(lines), limits, bases);
  } catch (const FeederError& e) {
    throw FeederError(source + ": " + e.what());
  }
}

Feeder load_feeder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FeederError("cannot open feeder file '" + path + "'");
  try {
    return parse_feeder(in, path);
  } catch (const ParseError& e) {
    throw FeederError(e.what());
  }
}

void write_feeder(std::ostream& out, const Feeder& f) {
  out << "[bases]\n"
      << "kV = " << exact(f.bases().kV) << "\n"
      << "MVA = " << exact(f.bases().MVA) << "\n\n"
      << "[limits]\n"
      << "v0 = " << exact(f.v0()) << "\n"
      << "v_mag_lower = " << exact(f.limits().v_mag_lower) << "\n"
      << "v_mag_upper = " << exact(f.limits().v_mag_upper) << "\n\n"
      << "[buses]\n"
      << "id name controllable q_min q_max p_load q_load\n";
  for (const Bus& b : f.buses()) {
    out << b.id << ' ' << (b.name.empty() ? std::string("-") : b.name) << ' '
        << (b.controllable ? 1 : 0) << ' ' << exact(b.q_min) << ' ' << exact(b.q_max) << ' '
        << exact(b.p_load) << ' ' << exact(b.q_load) << "\n";
  }
  out << "\n[lines]\nfrom to r x\n";
  for (const Line& l : f.lines()) {
    out << l.from_bus << ' ' << l.to_bus << ' ' << exact(l.r) << ' ' << exact(l.x) << "\n";
  }
}

void save_feeder(const std::string& path, const Feeder& f) {
  std::ofstream out(path);
  if (!out) throw FeederError("cannot write feeder file '" + path + "'");
  write_feeder(out, f);
}

}  // namespace saver
