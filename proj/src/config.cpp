#include "saver/config.hpp"

#include "saver/textfile.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace saver {

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.episodes = episodes;
  t.steps_per_episode = steps_per_episode;
  t.safe = safe;
  t.voltage_margin = safety.voltage_margin;
  t.projection = safety.projection;
  t.warm_start = safety.warm_start;
  return t;
}

EvalConfig ExperimentConfig::eval_config() const {
  EvalConfig e;
  e.eta = agent.eta;
  e.steps_per_episode = eval_steps;
  return e;
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (std::filesystem::path(base) / p).lexically_normal().string();
}

KeyValues section(const SectionedText& doc, const std::string& name) {
  const auto* s = doc.find(name);
  return s == nullptr ? KeyValues() : KeyValues(*s, doc.source);
}

int positive_int(const KeyValues& kv, const std::string& key, long fallback, long min_value) {
  const long v = kv.integer(key, fallback);
  if (v < min_value || v > 1'000'000'000) {
    throw ParseError("[" + key + "] must be at least " + std::to_string(min_value) + ", got " + std::to_string(v));
  }
  return static_cast<int>(v);
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, const std::string& source, const std::string& base_dir) {
  const SectionedText doc = SectionedText::parse(in, source);
  doc.require_known({"feeder", "rl", "safety", "experiment"});
  ExperimentConfig c;

  const KeyValues fd = section(doc, "feeder");
  fd.require_known({"path"});
  c.feeder_path = resolve(base_dir, fd.str("path"));

  const KeyValues rl = section(doc, "rl");
  rl.require_known({"hidden", "gamma", "tau", "actor_lr", "critic_lr", "buffer", "batch", "warmup", "update_every",
                    "noise_sigma", "noise_decay", "noise_min", "eta", "v_scale", "p_scale", "failure_reward", "seed",
                    "episodes", "steps_per_episode"});
  DdpgConfig& a = c.agent;
  if (rl.has("hidden")) {
    a.hidden.clear();
    for (double h : rl.numbers("hidden")) {
      if (h != std::floor(h) || h < 1) throw ParseError(source + ": [rl] hidden widths must be positive integers");
      a.hidden.push_back(static_cast<int>(h));
    }
  }
  a.gamma = rl.number("gamma", a.gamma);
  a.tau = rl.number("tau", a.tau);
  a.actor_lr = rl.number("actor_lr", a.actor_lr);
  a.critic_lr = rl.number("critic_lr", a.critic_lr);
  a.buffer_capacity = static_cast<std::size_t>(positive_int(rl, "buffer", static_cast<long>(a.buffer_capacity), 1));
  a.batch_size = static_cast<std::size_t>(positive_int(rl, "batch", static_cast<long>(a.batch_size), 1));
  a.warmup = static_cast<std::size_t>(positive_int(rl, "warmup", static_cast<long>(a.warmup), 0));
  a.update_every = positive_int(rl, "update_every", a.update_every, 1);
  a.noise_sigma = rl.number("noise_sigma", a.noise_sigma);
  a.noise_decay = rl.number("noise_decay", a.noise_decay);
  a.noise_min = rl.number("noise_min", a.noise_min);
  a.eta = rl.number("eta", a.eta);
  a.v_scale = rl.number("v_scale", a.v_scale);
  a.p_scale = rl.number("p_scale", a.p_scale);
  a.failure_reward = rl.number("failure_reward", a.failure_reward);
  a.seed = static_cast<std::uint64_t>(positive_int(rl, "seed", static_cast<long>(a.seed), 0));
  c.episodes = positive_int(rl, "episodes", c.episodes, 0);
  c.steps_per_episode = positive_int(rl, "steps_per_episode", c.steps_per_episode, 0);
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(source + ": " + e.what());
  }

  const KeyValues sf = section(doc, "safety");
  sf.require_known({"tol", "rho", "max_iter", "polish_every", "voltage_margin", "warm_start", "safe"});
  ProjectionOptions& p = c.safety.projection;
  p.tol = sf.number("tol", p.tol);
  p.rho = sf.number("rho", p.rho);
  p.max_iter = positive_int(sf, "max_iter", p.max_iter, 1);
  p.polish_every = positive_int(sf, "polish_every", p.polish_every, 1);
  c.safety.voltage_margin = sf.number("voltage_margin", c.safety.voltage_margin);
  c.safety.warm_start = sf.boolean("warm_start", c.safety.warm_start);
  c.safe = sf.boolean("safe", c.safe);
  if (!(p.tol > 0.0) || !(p.rho > 0.0) || c.safety.voltage_margin < 0.0) {
    throw ParseError(source + ": [safety] tol and rho must be positive, voltage_margin non-negative");
  }

  const KeyValues ex = section(doc, "experiment");
  ex.require_known({"data", "step_minutes", "full_res", "train_days", "test_days", "train_seed", "test_seed",
                    "load_scale", "day_spread", "peak_hour", "peak_jitter", "noise", "pv_capacity", "pv_buses",
                    "cloud_switch", "cloud_depth", "eval_steps", "controllers", "output_dir"});
  c.data = ex.str("data", c.data);
  if (c.data != "synthetic") c.data = resolve(base_dir, c.data);
  c.step_minutes = ex.number("step_minutes", c.step_minutes);
  c.full_res = ex.boolean("full_res", c.full_res);
  if (!(c.step_minutes > 0.0)) throw ParseError(source + ": [experiment] step_minutes must be positive");
  c.train_days = positive_int(ex, "train_days", c.train_days, 0);
  c.test_days = positive_int(ex, "test_days", c.test_days, 0);
  c.train_seed = static_cast<std::uint64_t>(positive_int(ex, "train_seed", static_cast<long>(c.train_seed), 0));
  c.test_seed = static_cast<std::uint64_t>(positive_int(ex, "test_seed", static_cast<long>(c.test_seed), 0));
  SyntheticOptions& s = c.synthetic;
  s.load_scale = ex.number("load_scale", s.load_scale);
  s.day_spread = ex.number("day_spread", s.day_spread);
  s.peak_hour = ex.number("peak_hour", s.peak_hour);
  s.peak_jitter = ex.number("peak_jitter", s.peak_jitter);
  s.noise = ex.number("noise", s.noise);
  s.pv_capacity = ex.number("pv_capacity", s.pv_capacity);
  if (ex.has("pv_buses")) {
    for (double b : ex.numbers("pv_buses")) s.pv_buses.push_back(static_cast<int>(b));
  }
  s.cloud_switch = ex.number("cloud_switch", s.cloud_switch);
  s.cloud_depth = ex.number("cloud_depth", s.cloud_depth);
  c.eval_steps = positive_int(ex, "eval_steps", c.eval_steps, 0);
  if (ex.has("controllers")) c.controllers = split_ws(ex.str("controllers"));
  c.output_dir = resolve(base_dir, ex.str("output_dir", c.output_dir));
  if (c.full_res && !rl.has("steps_per_episode")) c.steps_per_episode = 0;
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_config(in, path, dir.empty() ? "." : dir.string());
}

LoadDataset build_dataset(const ExperimentConfig& cfg, const Feeder& f) {
  if (cfg.data == "synthetic") {
    SyntheticOptions o = cfg.synthetic;
    o.step_minutes = cfg.effective_step();
    o.days = cfg.train_days;
    o.seed = cfg.train_seed;
    o.label = "train";
    LoadDataset d = synthesize_profiles(f, o);
    o.days = cfg.test_days;
    o.seed = cfg.test_seed;
    o.label = "test";
    for (auto& e : synthesize_profiles(f, o).episodes) d.episodes.push_back(std::move(e));
    return d;
  }
  IngestOptions io;
  io.step_minutes = cfg.effective_step();
  io.label = "train";
  LoadDataset d = load_dataset(cfg.data, f, io);
  const bool labeled = std::any_of(d.episodes.begin(), d.episodes.end(), [](const LoadEpisode& e) {
    return e.label == "test";
  });
  if (!labeled) {
    const auto total = static_cast<int>(d.episodes.size());
    for (int k = std::max(0, total - cfg.test_days); k < total; ++k) d.episodes[k].label = "test";
  }
  return d;
}

}  // namespace saver
