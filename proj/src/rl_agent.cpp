#include "saver/rl_agent.hpp"

#include "saver/linearization.hpp"
#include "saver/textfile.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

namespace saver {

Eigen::VectorXd State::stacked() const {
  Eigen::VectorXd s(v.size() + p.size());
  s << v, p;
  return s;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : slots_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  slots_[next_] = std::move(t);
  next_ = (next_ + 1) % slots_.size();
  size_ = std::min(size_ + 1, slots_.size());
}

const Transition& ReplayBuffer::slot(std::size_t i) const {
  if (i >= size_) throw std::out_of_range("ReplayBuffer: slot " + std::to_string(i) + " not written");
  return slots_[i];
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("ReplayBuffer: sample from empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<const Transition*> out(batch);
  for (auto& t : out) t = &slots_[pick(rng)];
  return out;
}

double step_reward(const Eigen::VectorXd& v_nodes, double v0, const Eigen::VectorXd& q, double eta) {
  return -((v_nodes.array() - v0).matrix().squaredNorm() + eta * q.squaredNorm());
}

StepOutcome env_step(const Feeder& f, const State& s, const Eigen::VectorXd& action,
                     const Eigen::VectorXd& q_background, const Eigen::VectorXd& p_next, double eta,
                     const PowerFlowOptions& pf, double failure_reward) {
  const int n = f.num_nodes();
  require_size(s.v.size(), n, "env_step: state v");
  require_size(s.p.size(), n, "env_step: state p");
  require_size(action.size(), static_cast<Eigen::Index>(f.controllable().size()), "env_step: action");
  require_size(q_background.size(), n, "env_step: background q");
  require_size(p_next.size(), n, "env_step: next p");

  Injections<double> inj{s.p, q_background + scatter_controllable<double>(action, f.controllable(), n)};
  StepOutcome out;
  try {
    const auto sol = solve_distflow(f, inj, pf);
    out.v_all = sol.v;
    out.pf_iterations = sol.iterations;
    out.next = {sol.node_voltages(), p_next};
    out.reward = step_reward(out.next.v, f.v0(), action, eta);
  } catch (const PowerFlowError&) {
    out.next = {s.v, p_next};
    out.reward = failure_reward;
    out.done = true;
  }
  return out;
}

void DdpgConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("rl: gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("rl: tau must lie in (0, 1]");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw std::invalid_argument("rl: learning rates must be positive");
  if (buffer_capacity == 0 || batch_size == 0) throw std::invalid_argument("rl: buffer and batch must be positive");
  if (update_every < 1) throw std::invalid_argument("rl: update_every must be >= 1");
  if (noise_sigma < 0.0 || noise_min < 0.0 || !(noise_decay > 0.0 && noise_decay <= 1.0)) {
    throw std::invalid_argument("rl: bad exploration noise settings");
  }
  if (eta < 0.0 || !(v_scale > 0.0) || p_scale < 0.0) throw std::invalid_argument("rl: bad eta or scaling");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("rl: hidden widths must be positive");
  }
}

namespace {

std::string feeder_text(const Feeder& f) {
  std::ostringstream os;
  write_feeder(os, f);
  return os.str();
}

}  // namespace

DdpgAgent::DdpgAgent(const Feeder& f, DdpgConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  if (f.controllable().empty()) throw std::invalid_argument("DdpgAgent: feeder has no controllable bus");
  fingerprint_ = f.fingerprint();
  feeder_text_ = feeder_text(f);
  n_ = f.num_nodes();
  v0_ = f.v0();
  p_scale_ = cfg_.p_scale > 0.0 ? cfg_.p_scale : std::max(f.p_load().cwiseAbs().maxCoeff(), 1e-3);
  q_min_ = f.q_min();
  q_max_ = f.q_max();
  mid_ = 0.5 * (q_max_ + q_min_);
  half_ = 0.5 * (q_max_ - q_min_);

  const int m = static_cast<int>(q_min_.size());
  rng_.seed(cfg_.seed);
  std::vector<int> actor_sizes{2 * n_};
  std::vector<int> critic_sizes{2 * n_ + m};
  for (int h : cfg_.hidden) {
    actor_sizes.push_back(h);
    critic_sizes.push_back(h);
  }
  actor_sizes.push_back(m);
  critic_sizes.push_back(1);
  actor_ = Mlp<double>::make(actor_sizes, Activation::Relu, Activation::Tanh, rng_);
  critic_ = Mlp<double>::make(critic_sizes, Activation::Relu, Activation::Identity, rng_);
  actor_target_ = actor_;
  critic_target_ = critic_;
  actor_opt_ = Adam<double>(actor_, cfg_.actor_lr);
  critic_opt_ = Adam<double>(critic_, cfg_.critic_lr);
  noise_ = cfg_.noise_sigma;
}

Eigen::MatrixXd DdpgAgent::normalize_states(const Eigen::MatrixXd& stacked) const {
  require_size(stacked.rows(), 2 * n_, "DdpgAgent: state");
  Eigen::MatrixXd z(stacked.rows(), stacked.cols());
  z.topRows(n_) = (stacked.topRows(n_).array() - v0_) / cfg_.v_scale;
  z.bottomRows(n_) = stacked.bottomRows(n_) / p_scale_;
  return z;
}

Eigen::MatrixXd DdpgAgent::to_unit_actions(const Eigen::MatrixXd& a) const {
  Eigen::MatrixXd u(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    u.row(i) = half_(i) > 0.0 ? ((a.row(i).array() - mid_(i)) / half_(i)).matrix().eval()
                              : Eigen::RowVectorXd::Zero(a.cols()).eval();
  }
  return u;
}

Eigen::MatrixXd DdpgAgent::from_unit_actions(const Eigen::MatrixXd& u) const {
  Eigen::MatrixXd a = half_.asDiagonal() * u;
  a.colwise() += mid_;
  return a;
}

Eigen::VectorXd DdpgAgent::act(const State& s) const {
  const Eigen::VectorXd u = actor_.apply(normalize_states(s.stacked()));
  return from_unit_actions(u).col(0).cwiseMax(q_min_).cwiseMin(q_max_);
}

Eigen::VectorXd DdpgAgent::act(const State& s, bool explore) {
  Eigen::VectorXd a = static_cast<const DdpgAgent&>(*this).act(s);
  if (explore && noise_ > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += noise_ * (q_max_(i) - q_min_(i)) * gauss(rng_);
    a = a.cwiseMax(q_min_).cwiseMin(q_max_);
  }
  return a;
}

UpdateStats DdpgAgent::update(const std::vector<const Transition*>& batch) {
  if (batch.empty()) throw std::invalid_argument("DdpgAgent::update: empty batch");
  const auto B = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index m = q_min_.size();
  Eigen::MatrixXd S(2 * n_, B), S2(2 * n_, B), A(m, B);
  Eigen::RowVectorXd R(B), live(B);
  for (Eigen::Index k = 0; k < B; ++k) {
    const Transition& t = *batch[k];
    S.col(k) = t.s;
    S2.col(k) = t.s_next;
    A.col(k) = t.a;
    R(k) = t.r;
    live(k) = t.done ? 0.0 : 1.0;
  }
  const Eigen::MatrixXd Z = normalize_states(S);
  const Eigen::MatrixXd Z2 = normalize_states(S2);

  Eigen::MatrixXd in2(2 * n_ + m, B);
  in2 << Z2, actor_target_.apply(Z2);
  const Eigen::RowVectorXd target = R + cfg_.gamma * live.cwiseProduct(critic_target_.apply(in2).row(0));

  Eigen::MatrixXd in(2 * n_ + m, B);
  in << Z, to_unit_actions(A);
  const Eigen::RowVectorXd diff = critic_.forward(in).row(0) - target;
  UpdateStats stats;
  stats.critic_loss = diff.squaredNorm() / static_cast<double>(B);
  critic_.backward((2.0 / static_cast<double>(B)) * diff);
  critic_opt_.step(critic_);

  const Eigen::MatrixXd U = actor_.forward(Z);
  in.bottomRows(m) = U;
  stats.actor_objective = critic_.forward(in).mean();
  const Eigen::MatrixXd g_in = critic_.backward(Eigen::RowVectorXd::Constant(B, -1.0 / static_cast<double>(B)));
  actor_.backward(g_in.bottomRows(m));
  actor_opt_.step(actor_);

  if (!std::isfinite(stats.critic_loss) || !std::isfinite(stats.actor_objective) ||
      !actor_.params().allFinite() || !critic_.params().allFinite()) {
    std::ostringstream os;
    os << "DdpgAgent::update: non-finite values after update " << updates_ + 1 << " (critic loss "
       << stats.critic_loss << ", actor objective " << stats.actor_objective << ", actor lr " << cfg_.actor_lr
       << ", critic lr " << cfg_.critic_lr << ")";
    throw std::runtime_error(os.str());
  }

  actor_target_.soft_update(actor_, cfg_.tau);
  critic_target_.soft_update(critic_, cfg_.tau);
  ++updates_;
  return stats;
}

void DdpgAgent::decay_noise() { noise_ = std::max(cfg_.noise_min, noise_ * cfg_.noise_decay); }

bool DdpgAgent::operator==(const DdpgAgent& o) const {
  return fingerprint_ == o.fingerprint_ && actor_.same_shape(o.actor_) && critic_.same_shape(o.critic_) &&
         actor_.params() == o.actor_.params() && critic_.params() == o.critic_.params() &&
         actor_target_.params() == o.actor_target_.params() &&
         critic_target_.params() == o.critic_target_.params() && noise_ == o.noise_ && updates_ == o.updates_;
}

// Checkpoint format: a line-oriented text file.
//
//   saver-checkpoint 1
//   fingerprint <hex>
//   <key> <value...>            agent settings
//   feeder <line count>         followed by the feeder file verbatim
//   net <name> <layers> <sizes...> <activations...>
//   <W row-major> / <b>         one line each per layer
//   adam <name> <t>             then mW, vW, mb, vb per layer
//   rng <engine state>
//   end

namespace {

constexpr int kCheckpointVersion = 1;

template <class M>
void write_values(std::ostream& out, const M& m) {
  bool first = true;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!first) out << ' ';
      out << m(i, j);
      first = false;
    }
  }
  out << '\n';
}

template <class M>
void read_values(std::istream& in, M& m, const std::string& what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!(in >> m(i, j))) throw ParseError("checkpoint: truncated values in " + what);
    }
  }
}

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) {
    throw ParseError("checkpoint: expected '" + word + "', got '" + got + "'");
  }
}

template <class T>
T read_one(std::istream& in, const std::string& key) {
  expect(in, key);
  T v{};
  if (!(in >> v)) throw ParseError("checkpoint: bad value for '" + key + "'");
  return v;
}

void write_net(std::ostream& out, const std::string& name, const Mlp<double>& net) {
  out << "net " << name << ' ' << net.layers().size();
  for (int s : net.sizes()) out << ' ' << s;
  for (const auto& l : net.layers()) out << ' ' << to_string(l.act);
  out << '\n';
  for (const auto& l : net.layers()) {
    write_values(out, l.W);
    write_values(out, l.b);
  }
}

Mlp<double> read_net(std::istream& in, const std::string& name) {
  expect(in, "net");
  expect(in, name);
  std::size_t layers = 0;
  if (!(in >> layers) || layers == 0 || layers > 64) throw ParseError("checkpoint: bad layer count for " + name);
  std::vector<int> sizes(layers + 1);
  for (auto& s : sizes) {
    if (!(in >> s) || s < 1) throw ParseError("checkpoint: bad layer size for " + name);
  }
  Mlp<double> net;
  for (std::size_t k = 0; k < layers; ++k) {
    std::string act;
    in >> act;
    net.layers().emplace_back(sizes[k], sizes[k + 1], activation_from_string(act));
  }
  for (auto& l : net.layers()) {
    read_values(in, l.W, name);
    read_values(in, l.b, name);
  }
  return net;
}

void write_adam(std::ostream& out, const std::string& name, const Adam<double>& opt) {
  out << "adam " << name << ' ' << opt.t << ' ' << opt.lr << ' ' << opt.beta1 << ' ' << opt.beta2 << ' '
      << opt.eps << '\n';
  for (const auto& m : opt.moments) {
    write_values(out, m.mW);
    write_values(out, m.vW);
    write_values(out, m.mb);
    write_values(out, m.vb);
  }
}

Adam<double> read_adam(std::istream& in, const std::string& name, const Mlp<double>& net) {
  expect(in, "adam");
  expect(in, name);
  Adam<double> opt(net);
  if (!(in >> opt.t >> opt.lr >> opt.beta1 >> opt.beta2 >> opt.eps)) {
    throw ParseError("checkpoint: bad optimizer header for " + name);
  }
  for (auto& m : opt.moments) {
    read_values(in, m.mW, name);
    read_values(in, m.vW, name);
    read_values(in, m.mb, name);
    read_values(in, m.vb, name);
  }
  return opt;
}

std::string read_feeder_block(std::istream& in) {
  const auto count = read_one<int>(in, "feeder");
  std::string line;
  std::getline(in, line);
  std::string text;
  for (int k = 0; k < count; ++k) {
    if (!std::getline(in, line)) throw ParseError("checkpoint: truncated feeder block");
    text += line + '\n';
  }
  return text;
}

void read_header(std::istream& in, std::string& fingerprint) {
  expect(in, "saver-checkpoint");
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  fingerprint = read_one<std::string>(in, "fingerprint");
}

}  // namespace

void DdpgAgent::save(std::ostream& out) const {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "saver-checkpoint " << kCheckpointVersion << '\n';
  out << "fingerprint " << fingerprint_ << '\n';
  out << "hidden " << cfg_.hidden.size();
  for (int h : cfg_.hidden) out << ' ' << h;
  out << '\n';
  out << "gamma " << cfg_.gamma << "\ntau " << cfg_.tau << "\nactor_lr " << cfg_.actor_lr << "\ncritic_lr "
      << cfg_.critic_lr << "\nbuffer_capacity " << cfg_.buffer_capacity << "\nbatch_size " << cfg_.batch_size
      << "\nwarmup " << cfg_.warmup << "\nupdate_every " << cfg_.update_every << "\nnoise_sigma "
      << cfg_.noise_sigma << "\nnoise_decay " << cfg_.noise_decay << "\nnoise_min " << cfg_.noise_min
      << "\neta " << cfg_.eta << "\nv_scale " << cfg_.v_scale << "\np_scale " << p_scale_
      << "\nfailure_reward " << cfg_.failure_reward << "\nseed " << cfg_.seed << "\nnoise " << noise_
      << "\nupdates " << updates_ << '\n';
  int lines = 0;
  for (char c : feeder_text_) lines += c == '\n';
  out << "feeder " << lines << '\n' << feeder_text_;
  write_net(out, "actor", actor_);
  write_net(out, "critic", critic_);
  write_net(out, "actor_target", actor_target_);
  write_net(out, "critic_target", critic_target_);
  write_adam(out, "actor", actor_opt_);
  write_adam(out, "critic", critic_opt_);
  out << "rng " << rng_ << "\nend\n";
}

DdpgAgent DdpgAgent::load(std::istream& in, const Feeder& f) {
  DdpgAgent a;
  read_header(in, a.fingerprint_);
  if (a.fingerprint_ != f.fingerprint()) {
    throw ParseError("checkpoint: trained on feeder " + a.fingerprint_ + ", got feeder " + f.fingerprint());
  }
  expect(in, "hidden");
  std::size_t layers = 0;
  in >> layers;
  a.cfg_.hidden.resize(layers);
  for (auto& h : a.cfg_.hidden) in >> h;
  a.cfg_.gamma = read_one<double>(in, "gamma");
  a.cfg_.tau = read_one<double>(in, "tau");
  a.cfg_.actor_lr = read_one<double>(in, "actor_lr");
  a.cfg_.critic_lr = read_one<double>(in, "critic_lr");
  a.cfg_.buffer_capacity = read_one<std::size_t>(in, "buffer_capacity");
  a.cfg_.batch_size = read_one<std::size_t>(in, "batch_size");
  a.cfg_.warmup = read_one<std::size_t>(in, "warmup");
  a.cfg_.update_every = read_one<int>(in, "update_every");
  a.cfg_.noise_sigma = read_one<double>(in, "noise_sigma");
  a.cfg_.noise_decay = read_one<double>(in, "noise_decay");
  a.cfg_.noise_min = read_one<double>(in, "noise_min");
  a.cfg_.eta = read_one<double>(in, "eta");
  a.cfg_.v_scale = read_one<double>(in, "v_scale");
  a.p_scale_ = read_one<double>(in, "p_scale");
  a.cfg_.p_scale = a.p_scale_;
  a.cfg_.failure_reward = read_one<double>(in, "failure_reward");
  a.cfg_.seed = read_one<std::uint64_t>(in, "seed");
  a.noise_ = read_one<double>(in, "noise");
  a.updates_ = read_one<long>(in, "updates");
  a.cfg_.validate();
  a.feeder_text_ = read_feeder_block(in);

  a.n_ = f.num_nodes();
  a.v0_ = f.v0();
  a.q_min_ = f.q_min();
  a.q_max_ = f.q_max();
  a.mid_ = 0.5 * (a.q_max_ + a.q_min_);
  a.half_ = 0.5 * (a.q_max_ - a.q_min_);
  a.actor_ = read_net(in, "actor");
  a.critic_ = read_net(in, "critic");
  a.actor_target_ = read_net(in, "actor_target");
  a.critic_target_ = read_net(in, "critic_target");
  const int m = static_cast<int>(a.q_min_.size());
  if (a.actor_.in_size() != 2 * a.n_ || a.actor_.out_size() != m || a.critic_.in_size() != 2 * a.n_ + m ||
      a.critic_.out_size() != 1 || !a.actor_.same_shape(a.actor_target_) || !a.critic_.same_shape(a.critic_target_)) {
    throw ParseError("checkpoint: network shapes do not match the feeder");
  }
  a.actor_opt_ = read_adam(in, "actor", a.actor_);
  a.critic_opt_ = read_adam(in, "critic", a.critic_);
  expect(in, "rng");
  if (!(in >> a.rng_)) throw ParseError("checkpoint: bad rng state");
  expect(in, "end");
  return a;
}

void DdpgAgent::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  save(out);
  if (!out) throw std::runtime_error("error writing '" + path + "'");
}

DdpgAgent DdpgAgent::load_file(const std::string& path, const Feeder& f) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return load(in, f);
}

Feeder DdpgAgent::feeder_from_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string fingerprint;
  read_header(in, fingerprint);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("feeder ", 0) != 0) continue;
    const long count = parse_long(line.substr(7), path + ": feeder line count");
    std::string text;
    for (long k = 0; k < count; ++k) {
      if (!std::getline(in, line)) throw ParseError(path + ": truncated feeder block");
      text += line + '\n';
    }
    std::istringstream block(text);
    Feeder f = parse_feeder(block, path + " (embedded feeder)");
    if (f.fingerprint() != fingerprint) throw ParseError(path + ": embedded feeder does not match its fingerprint");
    return f;
  }
  throw ParseError(path + ": no feeder block");
}

int magnitude_violations(const Feeder& f, const Eigen::VectorXd& v_all) {
  require_size(v_all.size(), f.num_buses(), "magnitude_violations");
  int count = 0;
  for (Eigen::Index i = 0; i < v_all.size(); ++i) {
    const double mag = std::sqrt(v_all(i));
    if (mag < f.limits().v_mag_lower || mag > f.limits().v_mag_upper) ++count;
  }
  return count;
}

TrainResult train(const Feeder& f, const LoadDataset& data, const DdpgConfig& agent_cfg, const TrainConfig& cfg,
                  std::ostream* progress) {
  data.validate();
  if (cfg.episodes < 0 || cfg.steps_per_episode < 0) throw std::invalid_argument("train: negative episode settings");
  if (cfg.episodes > 0 && data.episodes.empty()) throw std::invalid_argument("train: dataset has no episodes");
  if (data.num_nodes != f.num_nodes()) throw std::invalid_argument("train: dataset does not match the feeder");

  TrainResult result{DdpgAgent(f, agent_cfg), {}};
  DdpgAgent& agent = result.agent;
  const DdpgConfig& ac = agent.config();
  ReplayBuffer buffer(ac.buffer_capacity);
  const std::size_t warmup = ac.warmup > 0 ? ac.warmup : ac.batch_size;
  std::mt19937_64 rng(ac.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick_day(0, data.episodes.empty() ? 0 : data.episodes.size() - 1);

  const auto model = build_sensitivity(f);
  const SafetyLayer<double> layer(model, f.controllable(), cfg.projection);
  const Eigen::VectorXd lo = f.v_lower().array() + cfg.voltage_margin;
  const Eigen::VectorXd hi = f.v_upper().array() - cfg.voltage_margin;
  if (cfg.safe && !(lo.array() < hi.array()).all()) throw std::invalid_argument("train: voltage margin too large");
  const Eigen::VectorXd q_lo = f.q_min();
  const Eigen::VectorXd q_hi = f.q_max();
  const double tol = cfg.projection.tol;

  for (int e = 0; e < cfg.episodes; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t d = pick_day(rng);
    const LoadEpisode& ep = data.episodes[d];
    const Eigen::Index T = cfg.steps_per_episode > 0 ? std::min<Eigen::Index>(cfg.steps_per_episode, ep.steps())
                                                     : ep.steps();
    TrainLogRow row;
    row.episode = e;
    row.day = static_cast<int>(d);
    row.noise = agent.noise_scale();

    State s;
    try {
      const auto sol = solve_distflow(f, Injections<double>{ep.p.row(0).transpose(), ep.q.row(0).transpose()},
                                      cfg.powerflow);
      s = {sol.node_voltages(), ep.p.row(0).transpose()};
    } catch (const PowerFlowError& err) {
      throw std::runtime_error("train: episode " + std::to_string(e) + " (day " + std::to_string(d) +
                               "): initial power flow failed: " + err.what());
    }

    WarmStart<double> warm;
    for (Eigen::Index t = 0; t < T; ++t) {
      const Eigen::VectorXd q_bg = ep.q.row(t).transpose();
      Eigen::VectorXd a = agent.act(s, true);
      if (cfg.safe) {
        const auto res = layer.project(a, layer.offset(s.p, q_bg), lo, hi, q_lo, q_hi,
                                       cfg.warm_start ? &warm : nullptr);
        a = res.q_safe;
        if (res.status == ProjectionStatus::Relaxed) ++row.relaxed;
        if (res.status == ProjectionStatus::Failed) ++row.failed;
        if (res.status == ProjectionStatus::Optimal) {
          const Injections<double> inj{s.p, q_bg + scatter_controllable<double>(a, f.controllable(), f.num_nodes())};
          if (check_safety(model, inj, lo, hi).maxCoeff() > tol) ++row.linear_violations;
        }
      }
      const Eigen::VectorXd p_next = ep.p.row(t + 1 < ep.steps() ? t + 1 : t).transpose();
      StepOutcome out;
      try {
        out = env_step(f, s, a, q_bg, p_next, ac.eta, cfg.powerflow, ac.failure_reward);
      } catch (const std::exception& err) {
        throw std::runtime_error("train: episode " + std::to_string(e) + ", step " + std::to_string(t) + ": " +
                                 err.what());
      }
      row.episode_return += out.reward;
      ++row.steps;
      if (out.done) {
        ++row.powerflow_failures;
      } else {
        row.violations += magnitude_violations(f, out.v_all);
      }
      buffer.push({s.stacked(), a, out.reward, out.next.stacked(), out.done});
      s = out.next;

      if (buffer.size() >= warmup && (t + 1) % ac.update_every == 0) {
        UpdateStats st;
        try {
          st = agent.update(buffer.sample(ac.batch_size, rng));
        } catch (const std::exception& err) {
          throw std::runtime_error("train: episode " + std::to_string(e) + ", step " + std::to_string(t) + ": " +
                                   err.what());
        }
        row.critic_loss += st.critic_loss;
        row.actor_objective += st.actor_objective;
        ++row.updates;
      }
      if (out.done) break;
    }
    if (row.updates > 0) {
      row.critic_loss /= row.updates;
      row.actor_objective /= row.updates;
    }
    agent.decay_noise();
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress != nullptr) {
      *progress << "episode " << e << " day " << d << " return " << row.episode_return << " violations "
                << row.violations << " critic_loss " << row.critic_loss << '\n';
    }
    result.log.push_back(row);
  }
  return result;
}

void write_train_log_csv(std::ostream& out, const std::vector<TrainLogRow>& log) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "episode,day,return,steps,violations,linear_violations,relaxed,failed,powerflow_failures,updates,"
         "critic_loss,actor_objective,noise,wall_time\n";
  for (const auto& r : log) {
    out << r.episode << ',' << r.day << ',' << r.episode_return << ',' << r.steps << ',' << r.violations << ','
        << r.linear_violations << ',' << r.relaxed << ',' << r.failed << ',' << r.powerflow_failures << ','
        << r.updates << ',' << r.critic_loss << ',' << r.actor_objective << ',' << r.noise << ',' << r.wall_time
        << '\n';
  }
}

}  // namespace saver
