#include "saver/problem_file.hpp"

#include "saver/textfile.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>

namespace saver {

namespace {

Eigen::VectorXd vec(const KeyValues& kv, const std::string& key, Eigen::Index len, const Eigen::VectorXd& fallback,
                    const std::string& source) {
  if (!kv.has(key)) return fallback;
  const auto values = kv.numbers(key);
  if (static_cast<Eigen::Index>(values.size()) != len) {
    throw ParseError(source + ": [problem] " + key + " needs " + std::to_string(len) + " values, got " +
                     std::to_string(values.size()));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), len);
}

}  // namespace

ProblemFile parse_problem(std::istream& in, const std::string& source, const std::string& base_dir) {
  const SectionedText doc = SectionedText::parse(in, source);
  doc.require_known({"problem"});
  const auto* sec = doc.find("problem");
  if (sec == nullptr) throw ParseError(source + ": missing [problem] section");
  const KeyValues kv(*sec, source);
  kv.require_known({"feeder", "q_proposed", "p", "q_background", "v_lower", "v_upper", "q_lower", "q_upper", "tol"});

  std::filesystem::path fp(kv.str("feeder"));
  if (fp.is_relative()) fp = std::filesystem::path(base_dir) / fp;
  ProblemFile pf;
  pf.feeder = std::make_shared<const Feeder>(load_feeder(fp.string()));
  pf.model = std::make_shared<const SensitivityModel<double>>(build_sensitivity(*pf.feeder));
  const Feeder& f = *pf.feeder;
  const Eigen::Index n = f.num_nodes();
  const auto m = static_cast<Eigen::Index>(f.controllable().size());

  auto& pr = pf.problem;
  pr.model = pf.model.get();
  pr.controllable = f.controllable();
  pr.q_proposed = vec(kv, "q_proposed", m, Eigen::VectorXd(), source);
  if (!kv.has("q_proposed")) throw ParseError(source + ": [problem] missing key 'q_proposed'");
  pr.p_now = vec(kv, "p", n, -f.p_load(), source);
  pr.q_background = vec(kv, "q_background", n, -f.q_load(), source);
  pr.v_lower = vec(kv, "v_lower", n, f.v_lower(), source);
  pr.v_upper = vec(kv, "v_upper", n, f.v_upper(), source);
  pr.q_lower = vec(kv, "q_lower", m, f.q_min(), source);
  pr.q_upper = vec(kv, "q_upper", m, f.q_max(), source);
  pf.tol = kv.number("tol", pf.tol);
  if (!(pf.tol > 0.0)) throw ParseError(source + ": [problem] tol must be positive");
  return pf;
}

ProblemFile load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  const auto dir = std::filesystem::path(path).parent_path();
  return parse_problem(in, path, dir.empty() ? "." : dir.string());
}

void write_projection_result(std::ostream& out, const ProjectionResult<double>& r, const ProblemFile& p) {
  const auto& pr = p.problem;
  const Injections<double> inj{
      pr.p_now, pr.q_background + scatter_controllable<double>(r.q_safe, pr.controllable, p.model->size())};
  const Eigen::VectorXd v = predict_voltage(*p.model, inj);
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  auto put = [&](const char* key, const Eigen::VectorXd& x) {
    out << key << " =";
    for (Eigen::Index i = 0; i < x.size(); ++i) out << ' ' << x(i);
    out << '\n';
  };
  out << "status = " << to_string(r.status) << '\n';
  put("q_safe", r.q_safe);
  out << "controllable =";
  for (int b : pr.controllable) out << ' ' << b;
  out << "\nactive_set =";
  for (const auto& a : r.active_set) out << ' ' << a.bus << (a.side == BoundSide::Upper ? ":upper" : ":lower");
  out << "\nkkt_residual = " << r.kkt_residual << '\n';
  out << "slack_used = " << r.slack_used << '\n';
  out << "iterations = " << r.iterations << '\n';
  out << "polished = " << (r.polished ? "true" : "false") << '\n';
  out << "solve_time_us = " << std::chrono::duration<double, std::micro>(r.solve_time).count() << '\n';
  put("v_linear", v);
  put("multipliers", r.multipliers);
  out.flags(flags);
  out.precision(prec);
}

}  // namespace saver
