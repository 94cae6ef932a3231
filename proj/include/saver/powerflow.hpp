#pragma once

// Nonlinear branch-flow (DistFlow) power flow for radial feeders.
//
// For every line (i, j) with i the parent of j:
//   -p_j = P_ij - r l_ij - sum_k P_jk
//   -q_j = Q_ij - x l_ij - sum_k Q_jk
//    v_j = v_i - 2 (r P_ij + x Q_ij) + (r^2 + x^2) l_ij
//   l_ij = (P_ij^2 + Q_ij^2) / v_i
// with v the squared voltage magnitude and l the squared current magnitude.

#include "saver/feeder.hpp"
#include "saver/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace saver {

template <class Scalar>
struct PowerFlowSolution {
  Vector<Scalar> v;       // all buses, v(0) = head
  Vector<Scalar> p_flow;  // per line, indexed like Feeder::lines()
  Vector<Scalar> q_flow;
  Vector<Scalar> l;
  int iterations = 0;
  Scalar residual = 0;

  /// Squared voltages of the non-root buses (length N).
  auto node_voltages() const { return v.tail(v.size() - 1); }
  Scalar total_loss(const Feeder& f) const {
    Scalar loss = 0;
    for (std::size_t e = 0; e < f.lines().size(); ++e) loss += Scalar(f.lines()[e].r) * l(e);
    return loss;
  }
};

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 200;
};

class PowerFlowError : public std::runtime_error {
 public:
  enum class Kind { NonConvergence, VoltageCollapse };

  PowerFlowError(Kind kind, int iterations, double last_residual, const std::string& what)
      : std::runtime_error(what), kind_(kind), iterations_(iterations), last_residual_(last_residual) {}

  Kind kind() const { return kind_; }
  int iterations() const { return iterations_; }
  double last_residual() const { return last_residual_; }

 private:
  Kind kind_;
  int iterations_;
  double last_residual_;
};

/// Mismatch of each DistFlow equation family, one entry per line.
template <class Scalar>
struct DistFlowResiduals {
  Vector<Scalar> active;
  Vector<Scalar> reactive;
  Vector<Scalar> voltage;
  Vector<Scalar> current;

  Scalar max_abs() const {
    Scalar m = 0;
    for (const auto* r : {&active, &reactive, &voltage, &current}) {
      if (r->size() > 0) m = std::max(m, r->cwiseAbs().maxCoeff());
    }
    return m;
  }
};

/// Evaluates every DistFlow equation directly from the line list. Does not
/// use the feeder's cached traversal or any solver state.
template <class Scalar>
DistFlowResiduals<Scalar> residuals(const Feeder& f, const Injections<Scalar>& inj,
                                    const PowerFlowSolution<Scalar>& sol) {
  const auto& lines = f.lines();
  const Eigen::Index n = f.num_nodes();
  const Eigen::Index m = static_cast<Eigen::Index>(lines.size());
  require_size(inj.p.size(), n, "residuals: p");
  require_size(inj.q.size(), n, "residuals: q");
  require_size(sol.v.size(), n + 1, "residuals: v");
  require_size(sol.p_flow.size(), m, "residuals: p_flow");
  require_size(sol.q_flow.size(), m, "residuals: q_flow");
  require_size(sol.l.size(), m, "residuals: l");

  // Outgoing flow sums per bus, accumulated from the line list.
  Vector<Scalar> out_p = Vector<Scalar>::Zero(n + 1);
  Vector<Scalar> out_q = Vector<Scalar>::Zero(n + 1);
  for (Eigen::Index e = 0; e < m; ++e) {
    out_p(lines[e].from_bus) += sol.p_flow(e);
    out_q(lines[e].from_bus) += sol.q_flow(e);
  }

  DistFlowResiduals<Scalar> res{Vector<Scalar>(m), Vector<Scalar>(m), Vector<Scalar>(m),
                                Vector<Scalar>(m)};
  for (Eigen::Index e = 0; e < m; ++e) {
    const int i = lines[e].from_bus;
    const int j = lines[e].to_bus;
    const Scalar r = lines[e].r;
    const Scalar x = lines[e].x;
    const Scalar P = sol.p_flow(e);
    const Scalar Q = sol.q_flow(e);
    const Scalar l = sol.l(e);
    res.active(e) = -inj.p(j - 1) - (P - r * l - out_p(j));
    res.reactive(e) = -inj.q(j - 1) - (Q - x * l - out_q(j));
    res.voltage(e) = sol.v(j) - (sol.v(i) - Scalar(2) * (r * P + x * Q) + (r * r + x * x) * l);
    res.current(e) = l - (P * P + Q * Q) / sol.v(i);
  }
  return res;
}

/// Backward/forward sweep from a flat start (v = v0, l = 0).
///
/// Each sweep aggregates line flows leaf-to-root including the r*l and x*l
/// loss terms, updates squared voltages root-to-leaf, then refreshes l.
/// Stops once the voltage update is below `tol` in max-norm and the
/// equation mismatch is below `tol`.
template <class Scalar>
PowerFlowSolution<Scalar> solve_distflow(const Feeder& f, const Injections<Scalar>& inj,
                                         const PowerFlowOptions& opts = {}) {
  const Eigen::Index n = f.num_nodes();
  require_size(inj.p.size(), n, "solve_distflow: p");
  require_size(inj.q.size(), n, "solve_distflow: q");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("solve_distflow: tol must be positive");
  if (opts.max_iter < 1) throw std::invalid_argument("solve_distflow: max_iter must be >= 1");
  if (!inj.p.allFinite() || !inj.q.allFinite()) {
    throw std::invalid_argument("solve_distflow: non-finite injections");
  }

  const auto& lines = f.lines();
  const auto& order = f.topological_order();
  const Eigen::Index m = static_cast<Eigen::Index>(lines.size());
  const Scalar tol = static_cast<Scalar>(opts.tol);

  PowerFlowSolution<Scalar> sol;
  sol.v = Vector<Scalar>::Constant(n + 1, Scalar(f.v0()));
  sol.p_flow = Vector<Scalar>::Zero(m);
  sol.q_flow = Vector<Scalar>::Zero(m);
  sol.l = Vector<Scalar>::Zero(m);

  Scalar last_residual = std::numeric_limits<Scalar>::infinity();
  for (int it = 1; it <= opts.max_iter; ++it) {
    for (auto k = order.size(); k-- > 1;) {
      const int j = order[k];
      const int e = f.parent_line(j);
      Scalar P = -inj.p(j - 1) + Scalar(lines[e].r) * sol.l(e);
      Scalar Q = -inj.q(j - 1) + Scalar(lines[e].x) * sol.l(e);
      for (int c : f.children(j)) {
        P += sol.p_flow(f.parent_line(c));
        Q += sol.q_flow(f.parent_line(c));
      }
      sol.p_flow(e) = P;
      sol.q_flow(e) = Q;
    }

    Scalar change = 0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const int j = order[k];
      const int e = f.parent_line(j);
      const Scalar r = lines[e].r;
      const Scalar x = lines[e].x;
      const Scalar vj = sol.v(f.parent(j)) - Scalar(2) * (r * sol.p_flow(e) + x * sol.q_flow(e)) +
                        (r * r + x * x) * sol.l(e);
      if (!(vj > Scalar(0))) {
        throw PowerFlowError(PowerFlowError::Kind::VoltageCollapse, it,
                             static_cast<double>(last_residual),
                             "solve_distflow: voltage collapse at bus " + std::to_string(j) +
                                 " (iteration " + std::to_string(it) + ")");
      }
      change = std::max(change, static_cast<Scalar>(std::abs(vj - sol.v(j))));
      sol.v(j) = vj;
    }
    for (Eigen::Index e = 0; e < m; ++e) {
      const Scalar P = sol.p_flow(e);
      const Scalar Q = sol.q_flow(e);
      sol.l(e) = (P * P + Q * Q) / sol.v(lines[e].from_bus);
    }

    sol.iterations = it;
    if (change < tol) {
      last_residual = residuals(f, inj, sol).max_abs();
      if (last_residual <= tol) {
        sol.residual = last_residual;
        return sol;
      }
    }
  }
  last_residual = residuals(f, inj, sol).max_abs();
  throw PowerFlowError(PowerFlowError::Kind::NonConvergence, opts.max_iter,
                       static_cast<double>(last_residual),
                       "solve_distflow: no convergence after " + std::to_string(opts.max_iter) +
                           " iterations (residual " + std::to_string(static_cast<double>(last_residual)) +
                           ")");
}

}  // namespace saver
