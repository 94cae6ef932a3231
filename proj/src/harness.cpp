#include "saver/harness.hpp"

#include "saver/textfile.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace saver {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

ControlDecision NoopController::decide(const State&, const Eigen::VectorXd&) {
  const auto t0 = Clock::now();
  ControlDecision d;
  d.raw = noop_policy(m_);
  d.applied = d.raw;
  d.t_inference = seconds_since(t0);
  return d;
}

ControlDecision LinearController::decide(const State& s, const Eigen::VectorXd&) {
  const auto t0 = Clock::now();
  ControlDecision d;
  d.raw = policy_.step(s.v);
  d.applied = d.raw;
  d.t_inference = seconds_since(t0);
  return d;
}

RlController::RlController(const Feeder& f, DdpgAgent agent) : agent_(std::move(agent)) {
  if (agent_.fingerprint() != f.fingerprint()) throw std::invalid_argument("RlController: agent trained on another feeder");
}

RlController::RlController(const Feeder& f, DdpgAgent agent, const SafetySettings& safety)
    : RlController(f, std::move(agent)) {
  safety_ = safety;
  model_ = std::make_shared<const SensitivityModel<double>>(build_sensitivity(f));
  layer_.emplace(*model_, f.controllable(), safety.projection);
  lo_ = f.v_lower().array() + safety.voltage_margin;
  hi_ = f.v_upper().array() - safety.voltage_margin;
  if (!(lo_.array() < hi_.array()).all()) throw std::invalid_argument("RlController: voltage margin too large");
  q_lo_ = f.q_min();
  q_hi_ = f.q_max();
}

ControlDecision RlController::decide(const State& s, const Eigen::VectorXd& q_background) {
  ControlDecision d;
  auto t0 = Clock::now();
  d.raw = agent_.act(s);
  d.t_inference = seconds_since(t0);
  d.applied = d.raw;
  if (layer_) {
    t0 = Clock::now();
    const auto res = layer_->project(d.raw, layer_->offset(s.p, q_background), lo_, hi_, q_lo_, q_hi_,
                                     safety_.warm_start ? &warm_ : nullptr);
    d.t_projection = seconds_since(t0);
    d.applied = res.q_safe;
    d.projected = true;
    d.status = res.status;
    d.active = static_cast<int>(res.active_set.size());
    d.slack = res.slack_used;
    d.iterations = res.iterations;
  }
  return d;
}

std::unique_ptr<Controller> make_controller(const std::string& name, const Feeder& f, const DdpgAgent* agent,
                                            const SafetySettings& safety) {
  const auto m = static_cast<Eigen::Index>(f.controllable().size());
  if (name == "noop") return std::make_unique<NoopController>(m);
  if (name == "linear") {
    const auto model = build_sensitivity(f);
    return std::make_unique<LinearController>(
        LinearPolicy(f.controllable(), f.q_min(), f.q_max(), default_linear_gain(model, f.controllable()), f.v0()));
  }
  if (name == "rl" || name == "safe_rl") {
    if (agent == nullptr) throw std::invalid_argument("controller '" + name + "' needs a trained agent");
    if (name == "rl") return std::make_unique<RlController>(f, *agent);
    return std::make_unique<RlController>(f, *agent, safety);
  }
  throw std::invalid_argument("unknown controller '" + name + "' (expected linear, rl, safe_rl or noop)");
}

std::vector<EpisodeRecord> evaluate(const Feeder& f, Controller& controller, const LoadDataset& data,
                                    const EvalConfig& cfg) {
  data.validate();
  if (data.num_nodes != f.num_nodes()) throw std::invalid_argument("evaluate: dataset does not match the feeder");
  const int n = f.num_nodes();
  const auto model = build_sensitivity(f);
  std::vector<EpisodeRecord> out;

  for (std::size_t e = 0; e < data.episodes.size(); ++e) {
    const LoadEpisode& ep = data.episodes[e];
    const Eigen::Index T =
        cfg.steps_per_episode > 0 ? std::min<Eigen::Index>(cfg.steps_per_episode, ep.steps()) : ep.steps();
    EpisodeRecord rec{controller.name(), static_cast<int>(e), ep.label, {}};
    rec.steps.reserve(static_cast<std::size_t>(T));
    controller.reset();

    auto run_pf = [&](const Injections<double>& inj, Eigen::Index t) {
      try {
        return solve_distflow(f, inj, cfg.powerflow);
      } catch (const PowerFlowError& err) {
        throw std::runtime_error("evaluate: " + controller.name() + ", episode " + std::to_string(e) + ", step " +
                                 std::to_string(t) + ": " + err.what());
      }
    };

    State s{run_pf({ep.p.row(0).transpose(), ep.q.row(0).transpose()}, 0).node_voltages(), ep.p.row(0).transpose()};
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::VectorXd q_bg = ep.q.row(t).transpose();
      const ControlDecision d = controller.decide(s, q_bg);
      const Injections<double> inj{s.p, q_bg + scatter_controllable<double>(d.applied, f.controllable(), n)};
      const auto sol = run_pf(inj, t);

      StepRecord r;
      r.step = static_cast<int>(t);
      r.v_obs = s.v;
      r.p = s.p;
      r.q_raw = d.raw;
      r.q_applied = d.applied;
      r.status = d.projected ? to_string(d.status) : "none";
      r.active = d.active;
      r.slack = d.slack;
      r.v = sol.v;
      r.reward = step_reward(sol.node_voltages(), f.v0(), d.applied, cfg.eta);
      r.t_inference = d.t_inference;
      r.t_projection = d.t_projection;
      r.linear_violation = check_safety(model, inj, Eigen::VectorXd(f.v_lower()), Eigen::VectorXd(f.v_upper())).maxCoeff();
      rec.steps.push_back(std::move(r));

      s = {sol.node_voltages(), ep.p.row(t + 1 < ep.steps() ? t + 1 : t).transpose()};
    }
    out.push_back(std::move(rec));
  }
  return out;
}

const MethodSummary& ResultSummary::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.name == name) return m;
  }
  throw std::out_of_range("no summary for method '" + name + "'");
}

ResultSummary summarize(const std::vector<EpisodeRecord>& records, const Feeder& f) {
  if (records.empty()) throw std::invalid_argument("summarize: no records");
  const int buses = f.num_buses();
  const double kvar = f.bases().MVA * 1000.0;
  const double ref = std::sqrt(f.v0());

  struct Acc {
    MethodSummary s;
    std::vector<double> times;
    double q_sum = 0;
    long q_count = 0;
    Eigen::VectorXd dev_sum, dev_sq;
  };
  std::vector<Acc> acc;
  std::map<std::string, std::size_t> index;

  for (const auto& rec : records) {
    auto [it, fresh] = index.try_emplace(rec.controller, acc.size());
    if (fresh) {
      Acc a;
      a.s.name = rec.controller;
      a.dev_sum = Eigen::VectorXd::Zero(buses);
      a.dev_sq = Eigen::VectorXd::Zero(buses);
      acc.push_back(std::move(a));
    }
    Acc& a = acc[it->second];
    for (const auto& st : rec.steps) {
      require_size(st.v.size(), buses, "summarize: voltages");
      ++a.s.steps;
      a.s.bus_steps += buses;
      a.s.violations += magnitude_violations(f, st.v);
      const double t = st.t_inference + st.t_projection;
      a.times.push_back(t);
      a.s.mean_time += t;
      a.q_sum += st.q_applied.cwiseAbs().sum() * kvar;
      a.q_count += st.q_applied.size();
      if (st.status != "none") ++a.s.projected;
      if (st.status == "relaxed") ++a.s.relaxed;
      if (st.status == "failed") ++a.s.failed;
      if (st.status == "optimal") {
        a.s.max_linear_violation_optimal = std::max(a.s.max_linear_violation_optimal, st.linear_violation);
      }
      const Eigen::VectorXd dev = st.v.cwiseSqrt().array() - ref;
      a.dev_sum += dev;
      a.dev_sq += dev.cwiseAbs2();
    }
  }

  ResultSummary out;
  for (auto& a : acc) {
    MethodSummary s = std::move(a.s);
    if (s.steps == 0) throw std::invalid_argument("summarize: method '" + s.name + "' has no steps");
    const auto steps = static_cast<double>(s.steps);
    s.violation_pct = 100.0 * static_cast<double>(s.violations) / static_cast<double>(s.bus_steps);
    s.mean_time /= steps;
    std::sort(a.times.begin(), a.times.end());
    const std::size_t mid = a.times.size() / 2;
    s.median_time = a.times.size() % 2 ? a.times[mid] : 0.5 * (a.times[mid - 1] + a.times[mid]);
    s.mean_abs_q_kvar = a.q_count > 0 ? a.q_sum / static_cast<double>(a.q_count) : 0.0;
    s.deviation_mean = a.dev_sum / steps;
    s.deviation_var = (a.dev_sq / steps - s.deviation_mean.cwiseAbs2()).cwiseMax(0.0);
    out.methods.push_back(std::move(s));
  }
  return out;
}

// Record files: one per (controller, episode), named
// <controller>_<episode>.csv, with a `# controller=.. episode=.. label=..`
// line followed by a header and one row per step.

namespace {

template <class V>
void put_vec(std::ostream& out, const V& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v(i);
}

void put_names(std::ostream& out, const std::string& prefix, Eigen::Index first, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) out << ',' << prefix << first + i;
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw std::runtime_error("cannot create directory '" + dir + "'" + (ec ? ": " + ec.message() : ""));
  }
  return dir;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

}  // namespace

void write_records(const std::string& dir, const std::vector<EpisodeRecord>& records, const Feeder& f) {
  const auto root = ensure_dir(dir);
  save_feeder((root / "feeder.txt").string(), f);
  const Eigen::Index n = f.num_nodes();
  const auto m = static_cast<Eigen::Index>(f.controllable().size());
  for (const auto& rec : records) {
    std::ostringstream name;
    name << rec.controller << '_' << std::setw(4) << std::setfill('0') << rec.episode << ".csv";
    auto out = open_out(root / name.str());
    out << "# controller=" << rec.controller << " episode=" << rec.episode << " label=" << rec.label << '\n';
    out << "step,status,active,slack,reward,t_inference,t_projection,linear_violation";
    put_names(out, "v_", 0, n + 1);
    put_names(out, "vobs_", 1, n);
    put_names(out, "p_", 1, n);
    put_names(out, "qraw_", 1, m);
    put_names(out, "q_", 1, m);
    out << '\n';
    for (const auto& s : rec.steps) {
      out << s.step << ',' << s.status << ',' << s.active << ',' << s.slack << ',' << s.reward << ','
          << s.t_inference << ',' << s.t_projection << ',' << s.linear_violation;
      put_vec(out, s.v);
      put_vec(out, s.v_obs);
      put_vec(out, s.p);
      put_vec(out, s.q_raw);
      put_vec(out, s.q_applied);
      out << '\n';
    }
    if (!out) throw std::runtime_error("error writing records to '" + dir + "'");
  }
}

StoredRecords read_records(const std::string& dir) {
  const std::filesystem::path root(dir);
  if (!std::filesystem::is_directory(root)) throw ParseError("records directory '" + dir + "' does not exist");
  StoredRecords stored{load_feeder((root / "feeder.txt").string()), {}};
  const Feeder& f = stored.feeder;
  const Eigen::Index n = f.num_nodes();
  const auto m = static_cast<Eigen::Index>(f.controllable().size());
  const auto width = static_cast<std::size_t>(8 + (n + 1) + 2 * n + 2 * m);

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") {
      std::ifstream probe(entry.path());
      std::string first;
      std::getline(probe, first);
      if (first.rfind("# controller=", 0) == 0) files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ParseError("no record files in '" + dir + "'");

  for (const auto& path : files) {
    std::ifstream in(path);
    const std::string source = path.string();
    std::string line;
    std::getline(in, line);
    EpisodeRecord rec;
    for (const auto& tok : split_ws(line.substr(1))) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "controller") rec.controller = val;
      else if (key == "episode") rec.episode = static_cast<int>(parse_long(val, source));
      else if (key == "label") rec.label = val;
    }
    std::getline(in, line);
    if (split_char(line, ',').size() != width) throw ParseError(source + ":2: header does not match the feeder");
    int number = 2;
    while (std::getline(in, line)) {
      ++number;
      if (trim(line).empty()) continue;
      const std::string where = source + ":" + std::to_string(number);
      const auto c = split_char(line, ',');
      if (c.size() != width) throw ParseError(where + ": wrong number of fields");
      StepRecord s;
      s.step = static_cast<int>(parse_long(c[0], where));
      s.status = c[1];
      s.active = static_cast<int>(parse_long(c[2], where));
      s.slack = parse_double(c[3], where);
      s.reward = parse_double(c[4], where);
      s.t_inference = parse_double(c[5], where);
      s.t_projection = parse_double(c[6], where);
      s.linear_violation = parse_double(c[7], where);
      std::size_t k = 8;
      auto take = [&](Eigen::Index len) {
        Eigen::VectorXd v(len);
        for (Eigen::Index i = 0; i < len; ++i) v(i) = parse_double(c[k++], where);
        return v;
      };
      s.v = take(n + 1);
      s.v_obs = take(n);
      s.p = take(n);
      s.q_raw = take(m);
      s.q_applied = take(m);
      rec.steps.push_back(std::move(s));
    }
    stored.records.push_back(std::move(rec));
  }
  return stored;
}

void report(const ResultSummary& summary, const std::vector<EpisodeRecord>& records, const Feeder& f,
            const std::string& out_dir) {
  if (records.empty() || summary.methods.empty()) throw std::invalid_argument("report: no records");
  const auto root = ensure_dir(out_dir);

  {
    auto out = open_out(root / "summary.csv");
    out << "method,time_s,avg_q_kvar,violation_pct\n";
    for (const auto& m : summary.methods) {
      out << m.name << ',' << m.mean_time << ',' << m.mean_abs_q_kvar << ',' << m.violation_pct << '\n';
    }
  }
  {
    std::ofstream out(root / "summary.txt");
    if (!out) throw std::runtime_error("cannot write summary.txt in '" + out_dir + "'");
    out << std::left << std::setw(10) << "method" << std::right << std::setw(14) << "time (s)" << std::setw(16)
        << "avg q (kVAR)" << std::setw(16) << "violations %" << std::setw(10) << "steps" << std::setw(10)
        << "relaxed" << std::setw(8) << "failed" << '\n';
    for (const auto& m : summary.methods) {
      std::ostringstream t, q, v;
      t << std::scientific << std::setprecision(3) << m.mean_time;
      q << std::fixed << std::setprecision(3) << m.mean_abs_q_kvar;
      v << std::fixed << std::setprecision(3) << m.violation_pct;
      out << std::left << std::setw(10) << m.name << std::right << std::setw(14) << t.str() << std::setw(16)
          << q.str() << std::setw(16) << v.str() << std::setw(10) << m.steps << std::setw(10) << m.relaxed
          << std::setw(8) << m.failed << '\n';
    }
  }
  {
    auto out = open_out(root / "voltages.csv");
    out << "controller,episode,step";
    for (int b = 0; b < f.num_buses(); ++b) out << ",bus_" << b;
    out << '\n';
    for (const auto& rec : records) {
      for (const auto& s : rec.steps) {
        out << rec.controller << ',' << rec.episode << ',' << s.step;
        put_vec(out, s.v.cwiseSqrt());
        out << '\n';
      }
    }
  }
  {
    auto out = open_out(root / "deviation.csv");
    out << "controller,bus,mean,variance\n";
    for (const auto& m : summary.methods) {
      for (Eigen::Index b = 0; b < m.deviation_mean.size(); ++b) {
        out << m.name << ',' << b << ',' << m.deviation_mean(b) << ',' << m.deviation_var(b) << '\n';
      }
    }
  }
}

}  // namespace saver
