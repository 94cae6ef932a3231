#include "saver/config.hpp"
#include "saver/dataset.hpp"
#include "saver/feeder.hpp"
#include "saver/harness.hpp"
#include "saver/linearization.hpp"
#include "saver/powerflow.hpp"
#include "saver/problem_file.hpp"
#include "saver/rl_agent.hpp"
#include "saver/textfile.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace saver;

namespace {

std::string method_tag(bool safe) { return safe ? "safe_rl" : "rl"; }

Injections<double> read_injections(const std::string& path, const Feeder& f) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  auto inj = Injections<double>::zero(f.num_nodes());
  std::string line;
  int number = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto c = split_char(t, ',');
    const std::string where = path + ":" + std::to_string(number);
    if (!header) {
      if (c.size() != 3 || c[0] != "bus" || c[1] != "p" || c[2] != "q") {
        throw ParseError(where + ": expected header 'bus,p,q'");
      }
      header = true;
      continue;
    }
    if (c.size() != 3) throw ParseError(where + ": expected 3 fields");
    const long bus = parse_long(c[0], where);
    if (bus < 1 || bus > f.num_nodes()) throw ParseError(where + ": bus " + c[0] + " is not a non-root bus");
    inj.p(bus - 1) = parse_double(c[1], where);
    inj.q(bus - 1) = parse_double(c[2], where);
  }
  if (!header) throw ParseError(path + ": empty file");
  return inj;
}

int cmd_train(const std::string& config_path, bool safe_flag) {
  ExperimentConfig cfg = load_config(config_path);
  if (safe_flag) cfg.safe = true;
  const Feeder f = load_feeder(cfg.feeder_path);
  const LoadDataset data = build_dataset(cfg, f).with_label("train");
  fs::create_directories(cfg.output_dir);
  const std::string tag = method_tag(cfg.safe);
  std::cerr << "training " << tag << " for " << cfg.episodes << " episodes on " << data.episodes.size()
            << " days\n";
  const TrainResult res = train(f, data, cfg.agent, cfg.train_config(), &std::cerr);
  const fs::path ckpt = fs::path(cfg.output_dir) / ("checkpoint_" + tag + ".txt");
  const fs::path log = fs::path(cfg.output_dir) / ("train_log_" + tag + ".csv");
  res.agent.save_file(ckpt.string());
  std::ofstream out(log);
  if (!out) throw std::runtime_error("cannot write '" + log.string() + "'");
  write_train_log_csv(out, res.log);
  std::cout << "checkpoint " << ckpt.string() << "\nlog " << log.string() << '\n';
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, const std::string& feeder_path, const std::string& controller,
                 const std::string& data_path, const std::string& config_path, const std::string& out_dir) {
  if (checkpoint.empty() && feeder_path.empty()) throw std::invalid_argument("evaluate needs --checkpoint or --feeder");
  const Feeder f = checkpoint.empty() ? load_feeder(feeder_path) : DdpgAgent::feeder_from_checkpoint(checkpoint);
  if (!checkpoint.empty() && !feeder_path.empty() && load_feeder(feeder_path).fingerprint() != f.fingerprint()) {
    throw std::invalid_argument("checkpoint was trained on a different feeder than " + feeder_path);
  }
  SafetySettings safety;
  EvalConfig ec;
  IngestOptions io;
  if (!config_path.empty()) {
    const ExperimentConfig cfg = load_config(config_path);
    safety = cfg.safety;
    ec = cfg.eval_config();
    io.step_minutes = cfg.effective_step();
  }
  std::optional<DdpgAgent> agent;
  if (!checkpoint.empty()) {
    agent.emplace(DdpgAgent::load_file(checkpoint, f));
    ec.eta = agent->config().eta;
  }
  LoadDataset data = load_dataset(data_path, f, io);
  if (!data.with_label("test").episodes.empty()) data = data.with_label("test");
  auto ctrl = make_controller(controller, f, agent ? &*agent : nullptr, safety);
  const auto records = evaluate(f, *ctrl, data, ec);
  write_records(out_dir, records, f);
  const auto summary = summarize(records, f);
  const auto& m = summary.methods.front();
  std::cout << m.name << ": " << records.size() << " episodes, violations " << m.violation_pct << "%, avg q "
            << m.mean_abs_q_kvar << " kVAR, mean time " << m.mean_time << " s\nrecords " << out_dir << '\n';
  return 0;
}

int cmd_powerflow(const std::string& feeder_path, const std::string& inj_path, const std::string& export_dir) {
  const Feeder f = load_feeder(feeder_path);
  const auto inj = read_injections(inj_path, f);
  const auto sol = solve_distflow(f, inj);
  std::cout << std::setprecision(std::numeric_limits<double>::max_digits10);
  std::cout << "# iterations=" << sol.iterations << " residual=" << sol.residual << " loss=" << sol.total_loss(f)
            << '\n';
  std::cout << "bus,name,v_sq,v_pu,v_kV\n";
  for (int b = 0; b < f.num_buses(); ++b) {
    const double mag = std::sqrt(sol.v(b));
    std::cout << b << ',' << f.bus(b).name << ',' << sol.v(b) << ',' << mag << ',' << mag * f.bases().kV << '\n';
  }
  std::cout << "from,to,p_flow,q_flow,l\n";
  for (std::size_t e = 0; e < f.lines().size(); ++e) {
    std::cout << f.lines()[e].from_bus << ',' << f.lines()[e].to_bus << ',' << sol.p_flow(e) << ',' << sol.q_flow(e)
              << ',' << sol.l(e) << '\n';
  }
  if (!export_dir.empty()) {
    fs::create_directories(export_dir);
    export_sensitivity_csv(build_sensitivity(f), (fs::path(export_dir) / "R.csv").string(),
                           (fs::path(export_dir) / "X.csv").string());
  }
  return 0;
}

int cmd_project(const std::string& problem_path) {
  const ProblemFile pf = load_problem(problem_path);
  const auto res = project(pf.problem, pf.tol);
  write_projection_result(std::cout, res, pf);
  return res.status == ProjectionStatus::Failed ? 3 : 0;
}

int cmd_report(const std::string& records_dir, const std::string& out_dir) {
  const auto stored = read_records(records_dir);
  const auto summary = summarize(stored.records, stored.feeder);
  const std::string out = out_dir.empty() ? records_dir : out_dir;
  report(summary, stored.records, stored.feeder, out);
  std::ifstream txt(fs::path(out) / "summary.txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_experiment(const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const Feeder f = load_feeder(cfg.feeder_path);
  const LoadDataset data = build_dataset(cfg, f);
  const LoadDataset train_days = data.with_label("train");
  const LoadDataset test_days = data.with_label("test");
  fs::create_directories(cfg.output_dir);

  std::map<std::string, DdpgAgent> agents;
  for (const auto& name : cfg.controllers) {
    if (name != "rl" && name != "safe_rl") continue;
    TrainConfig tc = cfg.train_config();
    tc.safe = name == "safe_rl";
    std::cerr << "training " << name << '\n';
    TrainResult res = train(f, train_days, cfg.agent, tc, &std::cerr);
    res.agent.save_file((fs::path(cfg.output_dir) / ("checkpoint_" + name + ".txt")).string());
    std::ofstream log(fs::path(cfg.output_dir) / ("train_log_" + name + ".csv"));
    write_train_log_csv(log, res.log);
    agents.emplace(name, std::move(res.agent));
  }

  std::vector<EpisodeRecord> all;
  for (const auto& name : cfg.controllers) {
    const auto it = agents.find(name);
    auto ctrl = make_controller(name, f, it == agents.end() ? nullptr : &it->second, cfg.safety);
    std::cerr << "evaluating " << name << '\n';
    auto recs = evaluate(f, *ctrl, test_days, cfg.eval_config());
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  const std::string rec_dir = (fs::path(cfg.output_dir) / "records").string();
  write_records(rec_dir, all, f);
  const auto summary = summarize(all, f);
  report(summary, all, f, cfg.output_dir);
  std::ifstream txt(fs::path(cfg.output_dir) / "summary.txt");
  std::cout << txt.rdbuf();
  return 0;
}

int cmd_generate(const std::string& config_path, const std::string& out_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const Feeder f = load_feeder(cfg.feeder_path);
  save_dataset_csv(out_path, build_dataset(cfg, f));
  std::cout << "dataset " << out_path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safe volt-var control on radial feeders"};
  app.require_subcommand(1);

  std::string config, checkpoint, feeder, controller, data, injections, problem, records, out, export_dir;
  bool safe = false;

  auto* train_cmd = app.add_subcommand("train", "Train a DDPG controller");
  train_cmd->add_option("--config", config, "Experiment config file")->required();
  train_cmd->add_flag("--safe", safe, "Project every action during training");

  auto* eval_cmd = app.add_subcommand("evaluate", "Roll out a controller over a dataset");
  eval_cmd->add_option("--checkpoint", checkpoint, "Trained agent (also supplies the feeder)");
  eval_cmd->add_option("--feeder", feeder, "Feeder file, for controllers without a checkpoint");
  eval_cmd->add_option("--controller", controller, "linear | rl | safe_rl | noop")->required();
  eval_cmd->add_option("--data", data, "Dataset CSV (per-bus or system-level)")->required();
  eval_cmd->add_option("--config", config, "Experiment config for safety and step settings");
  eval_cmd->add_option("--out", out, "Records directory")->default_val("records");

  auto* pf_cmd = app.add_subcommand("powerflow", "Solve the nonlinear power flow once");
  pf_cmd->add_option("--feeder", feeder, "Feeder file")->required();
  pf_cmd->add_option("--injections", injections, "CSV with bus,p,q in per-unit")->required();
  pf_cmd->add_option("--export-rx", export_dir, "Also write R.csv and X.csv to this directory");

  auto* proj_cmd = app.add_subcommand("project", "Solve one safety projection");
  proj_cmd->add_option("--problem", problem, "Problem file")->required();

  auto* report_cmd = app.add_subcommand("report", "Summarize stored episode records");
  report_cmd->add_option("--records", records, "Records directory")->required();
  report_cmd->add_option("--out", out, "Output directory (default: the records directory)");

  auto* exp_cmd = app.add_subcommand("experiment", "Train, evaluate every controller and report");
  exp_cmd->add_option("--config", config, "Experiment config file")->required();

  auto* gen_cmd = app.add_subcommand("generate", "Write the configured dataset as per-bus CSV");
  gen_cmd->add_option("--config", config, "Experiment config file")->required();
  gen_cmd->add_option("--out", out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, safe);
    if (*eval_cmd) return cmd_evaluate(checkpoint, feeder, controller, data, config, out);
    if (*pf_cmd) return cmd_powerflow(feeder, injections, export_dir);
    if (*proj_cmd) return cmd_project(problem);
    if (*report_cmd) return cmd_report(records, out);
    if (*exp_cmd) return cmd_experiment(config);
    if (*gen_cmd) return cmd_generate(config, out);
  } catch (const std::exception& e) {
    std::cerr << "saver: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
