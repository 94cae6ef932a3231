#include "saver/dataset.hpp"

#include "saver/textfile.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace saver {

LoadDataset LoadDataset::with_label(const std::string& label) const {
  LoadDataset out{step_minutes, num_nodes, {}};
  for (const auto& e : episodes) {
    if (e.label == label) out.episodes.push_back(e);
  }
  return out;
}

void LoadDataset::validate() const {
  if (!(step_minutes > 0.0)) throw std::invalid_argument("dataset: step must be positive");
  for (std::size_t k = 0; k < episodes.size(); ++k) {
    const auto& e = episodes[k];
    if (e.p.cols() != num_nodes || e.q.cols() != num_nodes || e.p.rows() != e.q.rows() || e.p.rows() == 0) {
      throw std::invalid_argument("dataset: episode " + std::to_string(k) + " has inconsistent shape");
    }
    if (!e.p.allFinite() || !e.q.allFinite()) {
      throw std::invalid_argument("dataset: episode " + std::to_string(k) + " has non-finite values");
    }
  }
}

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
long days_from_civil(long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

double parse_timestamp(const std::string& token, const std::string& context) {
  const std::string t = trim(token);
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  double s = 0;
  char sep = 0;
  int used = 0;
  if (std::sscanf(t.c_str(), "%d-%d-%d%c%d:%d%n", &y, &mo, &d, &sep, &h, &mi, &used) == 6 &&
      (sep == ' ' || sep == 'T')) {
    if (static_cast<std::size_t>(used) < t.size()) {
      int more = 0;
      if (std::sscanf(t.c_str() + used, ":%lf%n", &s, &more) != 1 ||
          static_cast<std::size_t>(used + more) != t.size()) {
        throw ParseError(context + ": malformed timestamp '" + t + "'");
      }
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s >= 60) {
      throw ParseError(context + ": malformed timestamp '" + t + "'");
    }
    return static_cast<double>(days_from_civil(y, mo, d)) * 1440.0 + h * 60.0 + mi + s / 60.0;
  }
  return parse_double(t, context);
}

// Resamples rows (time) from step `from` to step `to` minutes.
Eigen::MatrixXd resample(const Eigen::MatrixXd& x, double from, double to, const std::string& source) {
  const double ratio = to / from;
  const double k_up = std::round(ratio);
  const double k_down = std::round(1.0 / ratio);
  if (std::abs(ratio - 1.0) < 1e-9) return x;
  if (ratio > 1.0 && std::abs(ratio - k_up) < 1e-9) {
    const auto k = static_cast<Eigen::Index>(k_up);
    const Eigen::Index n = x.rows() / k;
    Eigen::MatrixXd out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) out.row(i) = x.middleRows(i * k, k).colwise().mean();
    return out;
  }
  if (ratio < 1.0 && std::abs(1.0 / ratio - k_down) < 1e-9) {
    const auto k = static_cast<Eigen::Index>(k_down);
    const Eigen::Index n = (x.rows() - 1) * k + 1;
    Eigen::MatrixXd out(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index a = i / k;
      const double w = static_cast<double>(i % k) / static_cast<double>(k);
      out.row(i) = w == 0.0 ? x.row(a) : ((1.0 - w) * x.row(a) + w * x.row(a + 1)).eval();
    }
    return out;
  }
  throw ParseError(source + ": cannot resample a " + std::to_string(from) + "-minute series to " +
                   std::to_string(to) + " minutes");
}

Eigen::VectorXd power_factor_ratio(const Feeder& f) {
  const Eigen::VectorXd p = f.p_load();
  const Eigen::VectorXd q = f.q_load();
  Eigen::VectorXd ratio = Eigen::VectorXd::Zero(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p(i) > 0.0) ratio(i) = q(i) / p(i);
  }
  return ratio;
}

Eigen::VectorXd checked_weights(const Eigen::VectorXd& w, int n, const char* what) {
  if (w.size() != n) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(n) + " weights, got " +
                                std::to_string(w.size()));
  }
  if ((w.array() < 0.0).any()) throw std::invalid_argument(std::string(what) + ": negative weight");
  if (std::abs(w.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + ": weights must sum to 1 (got " + std::to_string(w.sum()) + ")");
  }
  return w;
}

std::vector<LoadEpisode> split_episodes(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, Eigen::Index len,
                                        const std::string& label) {
  std::vector<LoadEpisode> out;
  for (Eigen::Index start = 0; start < p.rows(); start += len) {
    const Eigen::Index n = std::min(len, p.rows() - start);
    out.push_back({label, p.middleRows(start, n), q.middleRows(start, n)});
  }
  return out;
}

}  // namespace

LoadDataset ingest_profiles(std::istream& in, const Feeder& f, const IngestOptions& opts,
                            const std::string& source) {
  const int n = f.num_nodes();
  if (!(opts.step_minutes > 0.0)) throw std::invalid_argument("ingest: step must be positive");
  Eigen::VectorXd load_w;
  if (opts.load_weights.size() == 0) {
    load_w = f.p_load();
    if (!(load_w.sum() > 0.0)) throw std::invalid_argument("ingest: feeder has no nominal load to weight by");
    load_w /= load_w.sum();
  } else {
    load_w = checked_weights(opts.load_weights, n, "ingest load weights");
  }
  Eigen::VectorXd pv_w = Eigen::VectorXd::Zero(n);
  if (opts.pv_weights.size() != 0) pv_w = checked_weights(opts.pv_weights, n, "ingest PV weights");

  std::string line;
  int number = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++number;
    if (!trim(line).empty()) header = split_char(line, ',');
  }
  if (header.empty()) throw ParseError(source + ": empty file");

  int ts_col = -1, pv_col = -1;
  std::vector<int> demand_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "timestamp") {
      ts_col = static_cast<int>(c);
    } else if (header[c] == "pv_mw") {
      pv_col = static_cast<int>(c);
    } else {
      demand_cols.push_back(static_cast<int>(c));
    }
  }
  if (ts_col < 0) throw ParseError(source + ":" + std::to_string(number) + ": missing 'timestamp' column");
  if (demand_cols.empty()) throw ParseError(source + ":" + std::to_string(number) + ": no demand column");

  std::vector<double> times, demand, pv;
  std::vector<std::string> stamps;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(number);
    const auto cells = split_char(line, ',');
    if (cells.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    times.push_back(parse_timestamp(cells[ts_col], where));
    stamps.push_back(cells[ts_col]);
    double total = 0;
    for (int c : demand_cols) total += parse_double(cells[c], where + " column '" + header[c] + "'");
    demand.push_back(total);
    pv.push_back(pv_col >= 0 ? parse_double(cells[pv_col], where + " column 'pv_mw'") : 0.0);
    if (!std::isfinite(total) || !std::isfinite(pv.back())) throw ParseError(where + ": non-finite value");
  }
  if (times.empty()) throw ParseError(source + ": no data rows");

  double step = opts.step_minutes;
  if (times.size() > 1) {
    step = times[1] - times[0];
    for (std::size_t i = 1; i < times.size(); ++i) {
      const double dt = times[i] - times[i - 1];
      if (!(dt > 0.0)) {
        throw ParseError(source + ": timestamps not increasing at '" + stamps[i] + "' (after '" + stamps[i - 1] + "')");
      }
      if (std::abs(dt - step) > 1e-6 * step) {
        if (dt > step && std::abs(dt / step - std::round(dt / step)) < 1e-6) {
          throw ParseError(source + ": gap in data, missing interval between '" + stamps[i - 1] + "' and '" +
                           stamps[i] + "'");
        }
        throw ParseError(source + ": irregular step at '" + stamps[i] + "'");
      }
    }
  }

  const double to_pu = opts.scale / f.bases().MVA;
  const Eigen::VectorXd pf = power_factor_ratio(f);
  const auto T = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd p(T, n), q(T, n);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Eigen::VectorXd load = load_w * (demand[t] * to_pu);
    p.row(t) = (-load + pv_w * (pv[t] * to_pu)).transpose();
    q.row(t) = (-load.cwiseProduct(pf)).transpose();
  }
  p = resample(p, step, opts.step_minutes, source);
  q = resample(q, step, opts.step_minutes, source);

  const auto per_day = static_cast<Eigen::Index>(
      opts.steps_per_episode > 0 ? double(opts.steps_per_episode) : std::max(1.0, std::round(1440.0 / opts.step_minutes)));
  LoadDataset d{opts.step_minutes, n, split_episodes(p, q, per_day, opts.label)};
  d.validate();
  return d;
}

LoadDataset ingest_profiles_file(const std::string& path, const Feeder& f, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return ingest_profiles(in, f, opts, path);
}

LoadDataset synthesize_profiles(const Feeder& f, const SyntheticOptions& o) {
  if (o.days < 0 || !(o.step_minutes > 0.0)) throw std::invalid_argument("synthesize: bad days or step");
  const int n = f.num_nodes();
  const Eigen::VectorXd p_nom = f.p_load();
  const Eigen::VectorXd q_nom = f.q_load();
  const auto T = static_cast<Eigen::Index>(std::round(1440.0 / o.step_minutes));

  Eigen::VectorXd pv_share = Eigen::VectorXd::Zero(n);
  if (o.pv_capacity > 0.0) {
    if (o.pv_buses.empty()) {
      pv_share = p_nom;
    } else {
      for (int b : o.pv_buses) {
        if (b < 1 || b > n) throw std::invalid_argument("synthesize: PV bus " + std::to_string(b) + " out of range");
        pv_share(b - 1) = std::max(p_nom(b - 1), 1e-12);
      }
    }
    pv_share /= pv_share.sum();
  }

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto bump = [](double h, double center, double width) {
    const double z = (h - center) / width;
    return std::exp(-z * z);
  };

  LoadDataset d{o.step_minutes, n, {}};
  for (int day = 0; day < o.days; ++day) {
    const double scale = o.load_scale * (1.0 + o.day_spread * (2.0 * unit(rng) - 1.0));
    Eigen::MatrixXd p(T, n), q(T, n);
    for (int b = 0; b < n; ++b) {
      const double peak = o.peak_hour + o.peak_jitter * gauss(rng);
      bool cloudy = false;
      for (Eigen::Index t = 0; t < T; ++t) {
        const double h = static_cast<double>(t) * o.step_minutes / 60.0;
        double level = 0.55 + 0.15 * bump(h, 8.5, 2.0) + 0.45 * bump(h, peak, 2.5) - 0.25 * bump(h, 3.5, 3.0);
        level *= scale;
        if (o.noise > 0.0) level *= 1.0 + o.noise * gauss(rng);
        double sun = 0.0;
        if (pv_share(b) > 0.0) {
          sun = std::pow(std::max(0.0, std::sin(std::numbers::pi * (h - 6.0) / 12.0)), 1.5);
          if (o.cloud_switch > 0.0 && unit(rng) < o.cloud_switch) cloudy = !cloudy;
          if (cloudy) sun *= 1.0 - o.cloud_depth;
        }
        p(t, b) = -p_nom(b) * level + pv_share(b) * o.pv_capacity * sun;
        q(t, b) = -q_nom(b) * level;
      }
    }
    d.episodes.push_back({o.label, std::move(p), std::move(q)});
  }
  return d;
}

void write_dataset_csv(std::ostream& out, const LoadDataset& d) {
  d.validate();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "# step_minutes=" << d.step_minutes << '\n';
  out << "episode,label,step";
  for (int i = 1; i <= d.num_nodes; ++i) out << ",p_" << i;
  for (int i = 1; i <= d.num_nodes; ++i) out << ",q_" << i;
  out << '\n';
  for (std::size_t e = 0; e < d.episodes.size(); ++e) {
    const auto& ep = d.episodes[e];
    for (Eigen::Index t = 0; t < ep.steps(); ++t) {
      out << e << ',' << ep.label << ',' << t;
      for (int i = 0; i < d.num_nodes; ++i) out << ',' << ep.p(t, i);
      for (int i = 0; i < d.num_nodes; ++i) out << ',' << ep.q(t, i);
      out << '\n';
    }
  }
}

void save_dataset_csv(const std::string& path, const LoadDataset& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_dataset_csv(out, d);
}

LoadDataset read_dataset_csv(std::istream& in, const std::string& source) {
  std::string line;
  int number = 0;
  double step = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.rfind("# step_minutes=", 0) == 0) {
      step = parse_double(t.substr(15), source + ":" + std::to_string(number));
    } else if (!t.empty() && t.front() != '#') {
      header = split_char(t, ',');
    }
  }
  if (header.empty()) throw ParseError(source + ": empty file");
  if (!(step > 0.0)) throw ParseError(source + ": missing '# step_minutes=' line");
  if (header.size() < 5 || (header.size() - 3) % 2 != 0 || header[0] != "episode" || header[1] != "label" ||
      header[2] != "step") {
    throw ParseError(source + ":" + std::to_string(number) + ": unexpected header");
  }
  const int n = static_cast<int>((header.size() - 3) / 2);
  for (int i = 1; i <= n; ++i) {
    if (header[2 + i] != "p_" + std::to_string(i) || header[2 + n + i] != "q_" + std::to_string(i)) {
      throw ParseError(source + ":" + std::to_string(number) + ": unexpected column '" + header[2 + i] + "'");
    }
  }

  struct Rows {
    std::string label;
    std::vector<Eigen::VectorXd> p, q;
  };
  std::vector<Rows> eps;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(number);
    const auto cells = split_char(line, ',');
    if (cells.size() != header.size()) throw ParseError(where + ": wrong number of fields");
    const long e = parse_long(cells[0], where);
    const long t = parse_long(cells[2], where);
    if (e < 0 || e > static_cast<long>(eps.size())) throw ParseError(where + ": episodes out of order");
    if (e == static_cast<long>(eps.size())) eps.push_back({cells[1], {}, {}});
    auto& ep = eps[e];
    if (e + 1 != static_cast<long>(eps.size()) || t != static_cast<long>(ep.p.size()) || ep.label != cells[1]) {
      throw ParseError(where + ": rows out of order");
    }
    Eigen::VectorXd p(n), q(n);
    for (int i = 0; i < n; ++i) {
      p(i) = parse_double(cells[3 + i], where);
      q(i) = parse_double(cells[3 + n + i], where);
    }
    ep.p.push_back(std::move(p));
    ep.q.push_back(std::move(q));
  }

  LoadDataset d{step, n, {}};
  for (auto& r : eps) {
    const auto T = static_cast<Eigen::Index>(r.p.size());
    LoadEpisode ep{r.label, Eigen::MatrixXd(T, n), Eigen::MatrixXd(T, n)};
    for (Eigen::Index t = 0; t < T; ++t) {
      ep.p.row(t) = r.p[t].transpose();
      ep.q.row(t) = r.q[t].transpose();
    }
    d.episodes.push_back(std::move(ep));
  }
  d.validate();
  return d;
}

LoadDataset load_dataset(const std::string& path, const Feeder& f, const IngestOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string first;
  std::getline(in, first);
  in.seekg(0);
  if (first.rfind("# step_minutes=", 0) == 0) {
    LoadDataset d = read_dataset_csv(in, path);
    if (d.num_nodes != f.num_nodes()) {
      throw ParseError(path + ": dataset has " + std::to_string(d.num_nodes) + " buses, feeder has " +
                       std::to_string(f.num_nodes()));
    }
    return d;
  }
  return ingest_profiles(in, f, opts, path);
}

}  // namespace saver
