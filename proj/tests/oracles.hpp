#pragma once

// Reference computations used only by the tests. Each is written from the
// problem definition, without calling into the code under test.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "saver/feeder.hpp"

namespace oracle {

/// Single line (r, x) from a head at v0 to a bus injecting (p, q).
/// Returns {v1, P, Q, l} from the closed-form root of the current equation.
struct TwoBus {
  long double v1, P, Q, l;
};

inline TwoBus two_bus(long double r, long double x, long double v0, long double p, long double q) {
  // l v0 = (-p + r l)^2 + (-q + x l)^2
  const long double a = r * r + x * x;
  const long double b = -2 * r * p - 2 * x * q - v0;
  const long double c = p * p + q * q;
  const long double disc = b * b - 4 * a * c;
  // the physical root is the small one; use the stable form
  const long double l = (2 * c) / (-b + std::sqrt(disc));
  const long double P = -p + r * l;
  const long double Q = -q + x * l;
  return {v0 - 2 * (r * P + x * Q) + a * l, P, Q, l};
}

/// Dense QP by enumeration of every active-set pattern:
///   min 1/2 |q - qh|^2  s.t.  lo <= c + A q <= hi,  qlo <= q <= qhi.
/// Each row and each variable is free, at its lower or at its upper bound.
/// For every pattern the equality-constrained KKT system is solved; the
/// candidate is kept when primal feasible with correctly signed
/// multipliers. Returns the feasible candidate of least objective.
struct QpSolution {
  Eigen::VectorXd q;
  int active_rows = 0;
};

inline std::optional<QpSolution> enumerate_qp(const Eigen::MatrixXd& A, const Eigen::VectorXd& c,
                                              const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                              const Eigen::VectorXd& qlo, const Eigen::VectorXd& qhi,
                                              const Eigen::VectorXd& qh, double feas_tol = 1e-9) {
  const int n = static_cast<int>(A.rows());
  const int m = static_cast<int>(A.cols());
  long total = 1;
  for (int k = 0; k < n + m; ++k) total *= 3;

  std::optional<QpSolution> best;
  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<int> row_state(n), var_state(m);
  for (long code = 0; code < total; ++code) {
    long t = code;
    for (int i = 0; i < n; ++i, t /= 3) row_state[i] = static_cast<int>(t % 3);
    for (int j = 0; j < m; ++j, t /= 3) var_state[j] = static_cast<int>(t % 3);

    std::vector<int> rows, free_vars;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < m; ++j) {
      if (var_state[j] == 0) free_vars.push_back(j);
      else q(j) = var_state[j] == 1 ? qlo(j) : qhi(j);
    }
    for (int i = 0; i < n; ++i) {
      if (row_state[i] != 0) rows.push_back(i);
    }
    const int nf = static_cast<int>(free_vars.size());
    const int ne = static_cast<int>(rows.size());
    if (ne > nf) continue;

    // [ I  Ae^T ] [qF]   [qhF]
    // [ Ae  0   ] [lam] = [b - c - A_B qB]
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(nf + ne, nf + ne);
    Eigen::VectorXd rhs(nf + ne);
    K.topLeftCorner(nf, nf).setIdentity();
    for (int a = 0; a < nf; ++a) rhs(a) = qh(free_vars[a]);
    for (int e = 0; e < ne; ++e) {
      const int i = rows[e];
      double fixed = 0;
      for (int j = 0; j < m; ++j) {
        if (var_state[j] != 0) fixed += A(i, j) * q(j);
      }
      for (int a = 0; a < nf; ++a) {
        K(nf + e, a) = A(i, free_vars[a]);
        K(a, nf + e) = A(i, free_vars[a]);
      }
      rhs(nf + e) = (row_state[i] == 1 ? lo(i) : hi(i)) - c(i) - fixed;
    }
    Eigen::VectorXd lam = Eigen::VectorXd::Zero(n);
    if (nf + ne > 0) {
      Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
      if (lu.rank() < nf + ne) continue;
      const Eigen::VectorXd sol = lu.solve(rhs);
      for (int a = 0; a < nf; ++a) q(free_vars[a]) = sol(a);
      for (int e = 0; e < ne; ++e) lam(rows[e]) = sol(nf + e);
    }

    // primal feasibility
    const Eigen::VectorXd v = c + A * q;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) ok = v(i) >= lo(i) - feas_tol && v(i) <= hi(i) + feas_tol;
    for (int j = 0; j < m && ok; ++j) ok = q(j) >= qlo(j) - feas_tol && q(j) <= qhi(j) + feas_tol;
    if (!ok) continue;
    // multiplier signs: upper rows push down (lam >= 0), lower rows push up (lam <= 0)
    for (int i = 0; i < n && ok; ++i) {
      if (row_state[i] == 2) ok = lam(i) >= -feas_tol;
      if (row_state[i] == 1) ok = lam(i) <= feas_tol;
    }
    // stationarity residual on clamped variables gives the bound multiplier
    const Eigen::VectorXd g = q - qh + A.transpose() * lam;
    for (int j = 0; j < m && ok; ++j) {
      if (var_state[j] == 2) ok = g(j) <= feas_tol;
      if (var_state[j] == 1) ok = g(j) >= -feas_tol;
    }
    if (!ok) continue;
    const double obj = 0.5 * (q - qh).squaredNorm();
    if (obj < best_obj - 1e-15) {
      best_obj = obj;
      int active = 0;
      for (int i = 0; i < n; ++i) active += row_state[i] != 0 && lam(i) != 0.0;
      best = QpSolution{q, active};
    }
  }
  return best;
}

/// Worst DistFlow mismatch in long double, written per bus: power balance at
/// each non-root bus, voltage drop and current magnitude on its feeding
/// line. The current equation is checked in the multiplied form l v = P^2 + Q^2.
inline long double distflow_mismatch(const saver::Feeder& f, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                                     const Eigen::VectorXd& v, const Eigen::VectorXd& P, const Eigen::VectorXd& Q,
                                     const Eigen::VectorXd& l) {
  const auto& lines = f.lines();
  long double worst = 0;
  for (int j = 1; j < f.num_buses(); ++j) {
    int in = -1;
    long double out_p = 0, out_q = 0;
    for (std::size_t e = 0; e < lines.size(); ++e) {
      if (lines[e].to_bus == j) in = static_cast<int>(e);
      if (lines[e].from_bus == j) {
        out_p += P(e);
        out_q += Q(e);
      }
    }
    const auto& ln = lines[in];
    const long double r = ln.r, x = ln.x, Pe = P(in), Qe = Q(in), le = l(in);
    const long double vi = v(ln.from_bus);
    worst = std::max(worst, std::abs(Pe - r * le - out_p + p(j - 1)));
    worst = std::max(worst, std::abs(Qe - x * le - out_q + q(j - 1)));
    worst = std::max(worst, std::abs(v(j) - vi + 2 * (r * Pe + x * Qe) - (r * r + x * x) * le));
    worst = std::max(worst, std::abs(le * vi - Pe * Pe - Qe * Qe));
  }
  return worst;
}

/// LinDistFlow matrices by finite differences of the lossless recursion:
/// unit injection at bus k, aggregate flows leaf-to-root, voltages root-to-leaf.
inline void lossless_columns(const saver::Feeder& f, Eigen::MatrixXd& R, Eigen::MatrixXd& X) {
  const int n = f.num_nodes();
  R.resize(n, n);
  X.resize(n, n);
  for (int k = 1; k <= n; ++k) {
    for (int which = 0; which < 2; ++which) {
      // flows on every line: sum of injections downstream (loads negative)
      std::vector<double> flow(f.lines().size(), 0.0);
      for (std::size_t e = 0; e < f.lines().size(); ++e) {
        // line e feeds bus to_bus; the injection at k passes through it iff k is below to_bus
        int b = k;
        while (b != 0) {
          if (b == f.lines()[e].to_bus) {
            flow[e] = -1.0;  // injection of +1 reduces the flow drawn from the head
            break;
          }
          b = f.parent(b);
        }
      }
      std::vector<double> v(f.num_buses(), 0.0);
      for (int j : f.topological_order()) {
        if (j == 0) continue;
        const int e = f.parent_line(j);
        const double z = which == 0 ? f.lines()[e].r : f.lines()[e].x;
        v[j] = v[f.parent(j)] - 2.0 * z * flow[e];
      }
      for (int i = 1; i <= n; ++i) (which == 0 ? R : X)(i - 1, k - 1) = v[i];
    }
  }
}

}  // namespace oracle
