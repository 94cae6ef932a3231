#pragma once

// Voltage safety projection.
//
//   minimize    1/2 ||q - q_proposed||^2
//   subject to  v_lower <= c + A q <= v_upper,   q_lower <= q <= q_upper
//
// where A = X[:, C] and c = v0 + R p + X q_background. The box is kept in
// the primal; the two-sided voltage rows are dualized with a single signed
// multiplier nu per bus (nu > 0 pushes down from the upper bound, nu < 0
// pushes up from the lower bound), giving
//
//   q(nu) = clip(q_proposed - A^T nu)
//
// and a concave dual whose gradient is c + A q(nu) with Lipschitz constant
// lambda_max(A^T A). The dual is maximized by accelerated proximal gradient
// with gradient-based restarts. Bounding |nu| <= rho is exactly the dual of
// the L1 slack relaxation with penalty rho, so an infeasible problem comes
// back as the relaxed solution with the saturated rows reporting their
// slack. Every few iterations the sign pattern of nu is used to solve the
// equality-constrained KKT system directly; the candidate is accepted only
// if it passes the same KKT test as the iterates.

#include "saver/linearization.hpp"
#include "saver/types.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace saver {

enum class ProjectionStatus { Optimal, Relaxed, Failed };

inline const char* to_string(ProjectionStatus s) {
  switch (s) {
    case ProjectionStatus::Optimal: return "optimal";
    case ProjectionStatus::Relaxed: return "relaxed";
    case ProjectionStatus::Failed: return "failed";
  }
  return "?";
}

enum class BoundSide { Lower, Upper };

struct ActiveConstraint {
  int bus = 0;
  BoundSide side = BoundSide::Upper;
  bool operator==(const ActiveConstraint&) const = default;
};

struct ProjectionOptions {
  double tol = 1e-7;       // feasibility and complementarity
  int max_iter = 10000;
  double rho = 1e4;        // slack penalty, per-unit^2 scale
  int polish_every = 20;   // iterations between KKT polishing attempts
};

template <class Scalar>
struct ProjectionProblem {
  const SensitivityModel<Scalar>* model = nullptr;
  std::vector<int> controllable;  // bus ids, defines the order of q
  Vector<Scalar> q_proposed;      // |C|
  Vector<Scalar> p_now;           // N
  Vector<Scalar> q_background;    // N, empty means zero
  Vector<Scalar> v_lower, v_upper;  // N, squared per-unit
  Vector<Scalar> q_lower, q_upper;  // |C|
};

template <class Scalar>
struct ProjectionResult {
  Vector<Scalar> q_safe;
  ProjectionStatus status = ProjectionStatus::Failed;
  std::vector<ActiveConstraint> active_set;
  Scalar kkt_residual = 0;
  Scalar slack_used = 0;
  int iterations = 0;
  bool polished = false;
  std::chrono::nanoseconds solve_time{0};
  Vector<Scalar> multipliers;  // signed nu per bus
};

/// Multipliers carried between consecutive control steps.
template <class Scalar>
struct WarmStart {
  Vector<Scalar> nu;
};

template <class Scalar>
class SafetyLayer {
 public:
  SafetyLayer(const SensitivityModel<Scalar>& model, std::vector<int> controllable,
              ProjectionOptions opts = {})
      : model_(&model), controllable_(std::move(controllable)), opts_(opts) {
    const Eigen::Index n = model.size();
    A_.resize(n, static_cast<Eigen::Index>(controllable_.size()));
    for (std::size_t k = 0; k < controllable_.size(); ++k) {
      const int bus = controllable_[k];
      if (bus < 1 || bus > n) throw DimensionError("SafetyLayer: controllable bus out of range");
      A_.col(static_cast<Eigen::Index>(k)) = model.X.col(bus - 1);
    }
    if (A_.cols() > 0) {
      const Matrix<Scalar> gram = A_.transpose() * A_;
      Eigen::SelfAdjointEigenSolver<Matrix<Scalar>> eig(gram, Eigen::EigenvaluesOnly);
      lipschitz_ = eig.eigenvalues().maxCoeff();
    }
    if (!(opts_.tol > 0.0) || !(opts_.rho > 0.0) || opts_.max_iter < 1) {
      throw std::invalid_argument("SafetyLayer: tol, rho must be positive and max_iter >= 1");
    }
  }

  const Matrix<Scalar>& sensitivity() const { return A_; }
  Scalar lipschitz() const { return lipschitz_; }
  const ProjectionOptions& options() const { return opts_; }
  const std::vector<int>& controllable() const { return controllable_; }

  /// v0 + R p + X q_background.
  Vector<Scalar> offset(const Vector<Scalar>& p_now, const Vector<Scalar>& q_background) const {
    require_size(p_now.size(), model_->size(), "SafetyLayer: p_now");
    Vector<Scalar> c = model_->v0_vec + model_->R * p_now;
    if (q_background.size() > 0) {
      require_size(q_background.size(), model_->size(), "SafetyLayer: q_background");
      c.noalias() += model_->X * q_background;
    }
    return c;
  }

  ProjectionResult<Scalar> project(const Vector<Scalar>& q_proposed, const Vector<Scalar>& c,
                                   const Vector<Scalar>& v_lower, const Vector<Scalar>& v_upper,
                                   const Vector<Scalar>& q_lower, const Vector<Scalar>& q_upper,
                                   WarmStart<Scalar>* warm = nullptr) const {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::Index n = A_.rows();
    const Eigen::Index m = A_.cols();
    require_size(q_proposed.size(), m, "project: q_proposed");
    require_size(c.size(), n, "project: offset");
    require_size(v_lower.size(), n, "project: v_lower");
    require_size(v_upper.size(), n, "project: v_upper");
    require_size(q_lower.size(), m, "project: q_lower");
    require_size(q_upper.size(), m, "project: q_upper");
    if (!(v_lower.array() < v_upper.array()).all()) {
      throw std::invalid_argument("project: need v_lower < v_upper");
    }
    if (!(q_lower.array() <= q_upper.array()).all()) {
      throw std::invalid_argument("project: empty q box");
    }

    Solver s{*this, q_proposed, c, v_lower, v_upper, q_lower, q_upper};
    ProjectionResult<Scalar> res = s.run(warm);
    if (warm != nullptr) warm->nu = res.multipliers;
    res.solve_time = std::chrono::duration_cast<std::chrono::nanoseconds>(
        std::chrono::steady_clock::now() - start);
    return res;
  }

  ProjectionResult<Scalar> project(const ProjectionProblem<Scalar>& prob,
                                   WarmStart<Scalar>* warm = nullptr) const {
    if (prob.model != model_ || prob.controllable != controllable_) {
      throw std::invalid_argument("project: problem built for a different model");
    }
    return project(prob.q_proposed, offset(prob.p_now, prob.q_background), prob.v_lower,
                   prob.v_upper, prob.q_lower, prob.q_upper, warm);
  }

 private:
  struct Kkt {
    Scalar primal = 0;           // worst violation among rows with |nu| < rho
    Scalar complementarity = 0;  // min(|nu|, 1) * distance from the targeted bound
    Scalar slack = 0;            // worst violation among saturated rows
    bool saturated = false;
    Scalar residual() const { return std::max(primal, complementarity); }
  };

  struct Solver {
    const SafetyLayer& layer;
    const Vector<Scalar>& q_hat;
    const Vector<Scalar>& c;
    const Vector<Scalar>& lo;
    const Vector<Scalar>& hi;
    const Vector<Scalar>& q_lo;
    const Vector<Scalar>& q_hi;

    Scalar tol() const { return static_cast<Scalar>(layer.opts_.tol); }
    Scalar rho() const { return static_cast<Scalar>(layer.opts_.rho); }
    bool is_saturated(Scalar nu) const { return std::abs(nu) >= rho() * (Scalar(1) - Scalar(1e-12)); }

    Vector<Scalar> primal(const Vector<Scalar>& nu) const {
      Vector<Scalar> y = q_hat;
      y.noalias() -= layer.A_.transpose() * nu;
      return y.cwiseMax(q_lo).cwiseMin(q_hi);
    }

    Vector<Scalar> voltages(const Vector<Scalar>& q) const {
      Vector<Scalar> w = c;
      w.noalias() += layer.A_ * q;
      return w;
    }

    Kkt check(const Vector<Scalar>& nu, const Vector<Scalar>& w) const {
      Kkt k;
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const Scalar violation = std::max({Scalar(0), w(i) - hi(i), lo(i) - w(i)});
        if (nu(i) != Scalar(0)) {
          const Scalar gap = nu(i) > 0 ? std::max(Scalar(0), hi(i) - w(i))
                                       : std::max(Scalar(0), w(i) - lo(i));
          k.complementarity = std::max(k.complementarity, std::min(std::abs(nu(i)), Scalar(1)) * gap);
        }
        if (is_saturated(nu(i))) {
          k.saturated = true;
          k.slack = std::max(k.slack, violation);
        } else {
          k.primal = std::max(k.primal, violation);
        }
      }
      return k;
    }

    ProjectionResult<Scalar> finish(const Vector<Scalar>& nu, const Vector<Scalar>& q,
                                    const Vector<Scalar>& w, const Kkt& k, int iterations,
                                    bool polished, bool converged) const {
      ProjectionResult<Scalar> r;
      r.q_safe = q;
      r.multipliers = nu;
      r.iterations = iterations;
      r.polished = polished;
      r.kkt_residual = k.residual();
      r.slack_used = k.slack;
      if (!converged) {
        r.status = ProjectionStatus::Failed;
      } else if (k.slack > tol()) {
        r.status = ProjectionStatus::Relaxed;
      } else {
        r.status = ProjectionStatus::Optimal;
      }
      for (Eigen::Index i = 0; i < nu.size(); ++i) {
        if (nu(i) == Scalar(0)) continue;
        const bool upper = nu(i) > 0;
        const Scalar gap = upper ? hi(i) - w(i) : w(i) - lo(i);
        if (gap <= tol()) {
          r.active_set.push_back({static_cast<int>(i) + 1, upper ? BoundSide::Upper : BoundSide::Lower});
        }
      }
      return r;
    }

    /// Rows still violated while pushed on are guessed to need slack.
    Vector<Scalar> saturate_violated(const Vector<Scalar>& nu, const Vector<Scalar>& w) const {
      Vector<Scalar> out = nu;
      for (Eigen::Index i = 0; i < nu.size(); ++i) {
        if (nu(i) > 0 && w(i) > hi(i) + tol()) out(i) = rho();
        if (nu(i) < 0 && w(i) < lo(i) - tol()) out(i) = -rho();
      }
      return out;
    }

    /// Solve the equality-constrained system implied by the sign pattern of nu.
    std::optional<Vector<Scalar>> polish(const Vector<Scalar>& nu) const {
      const Matrix<Scalar>& A = layer.A_;
      const Eigen::Index n = A.rows();
      const Eigen::Index m = A.cols();

      std::vector<Eigen::Index> tight, free_cols;
      Vector<Scalar> fixed_nu = Vector<Scalar>::Zero(n);
      Vector<Scalar> target(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (nu(i) == Scalar(0)) continue;
        if (is_saturated(nu(i))) {
          fixed_nu(i) = nu(i) > 0 ? rho() : -rho();
        } else {
          tight.push_back(i);
          target(i) = nu(i) > 0 ? hi(i) : lo(i);
        }
      }
      Vector<Scalar> y = q_hat;
      y.noalias() -= A.transpose() * nu;
      Vector<Scalar> q_fixed = Vector<Scalar>::Zero(m);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (y(j) <= q_lo(j)) {
          q_fixed(j) = q_lo(j);
        } else if (y(j) >= q_hi(j)) {
          q_fixed(j) = q_hi(j);
        } else {
          free_cols.push_back(j);
        }
      }

      const auto nt = static_cast<Eigen::Index>(tight.size());
      const auto nf = static_cast<Eigen::Index>(free_cols.size());
      if (nt > nf) return std::nullopt;

      // q_F = q_hat_F - A_TF^T nu_T - A_SF^T nu_S ; A_T q + c_T = target_T
      Vector<Scalar> base_q = q_fixed;
      Vector<Scalar> shifted = q_hat;
      shifted.noalias() -= A.transpose() * fixed_nu;
      for (Eigen::Index f = 0; f < nf; ++f) base_q(free_cols[f]) = shifted(free_cols[f]);

      Vector<Scalar> cand = fixed_nu;
      if (nt > 0) {
        Matrix<Scalar> A_tf(nt, nf);
        Vector<Scalar> rhs(nt);
        for (Eigen::Index a = 0; a < nt; ++a) {
          const Eigen::Index i = tight[a];
          for (Eigen::Index f = 0; f < nf; ++f) A_tf(a, f) = A(i, free_cols[f]);
          rhs(a) = A.row(i).dot(base_q) + c(i) - target(i);
        }
        const Matrix<Scalar> M = A_tf * A_tf.transpose();
        Eigen::LDLT<Matrix<Scalar>> ldlt(M);
        if (ldlt.info() != Eigen::Success) return std::nullopt;
        const Vector<Scalar> nu_t = ldlt.solve(rhs);
        if (!nu_t.allFinite() || (M * nu_t - rhs).cwiseAbs().maxCoeff() > tol() * Scalar(1e-3)) {
          return std::nullopt;
        }
        for (Eigen::Index a = 0; a < nt; ++a) {
          const Eigen::Index i = tight[a];
          const Scalar v = nu_t(a);
          if ((nu(i) > 0 && v < 0) || (nu(i) < 0 && v > 0) || std::abs(v) > rho()) return std::nullopt;
          cand(i) = v;
        }
      }
      return cand;
    }

    ProjectionResult<Scalar> run(WarmStart<Scalar>* warm) const {
      const Eigen::Index n = layer.A_.rows();
      const int max_iter = layer.opts_.max_iter;

      // Clipped proposal already safe: it is the projection.
      Vector<Scalar> nu = Vector<Scalar>::Zero(n);
      Vector<Scalar> q = primal(nu);
      Vector<Scalar> w = voltages(q);
      Kkt k = check(nu, w);
      if (k.primal <= tol()) return finish(nu, q, w, k, 0, false, true);

      if (warm != nullptr && warm->nu.size() == n && warm->nu.allFinite()) {
        nu = warm->nu.cwiseMax(-rho()).cwiseMin(rho());
      }
      if (layer.A_.cols() == 0 || layer.lipschitz_ <= Scalar(0)) {
        // Nothing to steer; report the constant voltages as slack.
        nu = (w.array() > hi.array()).select(Vector<Scalar>::Constant(n, rho()),
             (w.array() < lo.array()).select(Vector<Scalar>::Constant(n, -rho()), Vector<Scalar>::Zero(n)));
        return finish(nu, q, w, check(nu, w), 0, false, true);
      }

      auto accept = [&](const Vector<Scalar>& cand, int it) -> std::optional<ProjectionResult<Scalar>> {
        const Vector<Scalar> qc = primal(cand);
        const Vector<Scalar> wc = voltages(qc);
        const Kkt kc = check(cand, wc);
        if (kc.residual() <= tol()) return finish(cand, qc, wc, kc, it, true, true);
        return std::nullopt;
      };

      if (nu.cwiseAbs().maxCoeff() > Scalar(0)) {
        if (auto cand = polish(nu)) {
          if (auto r = accept(*cand, 0)) return *r;
        }
      }

      const Scalar step = Scalar(1) / layer.lipschitz_;
      Vector<Scalar> y = nu;
      Vector<Scalar> nu_next(n);
      Scalar theta = 1;
      for (int it = 1; it <= max_iter; ++it) {
        const Vector<Scalar> wy = voltages(primal(y));
        for (Eigen::Index i = 0; i < n; ++i) {
          // prox of the support function of [lo, hi], then clamp to [-rho, rho]
          const Scalar z = y(i) + step * wy(i);
          Scalar v = 0;
          if (z > step * hi(i)) {
            v = z - step * hi(i);
          } else if (z < step * lo(i)) {
            v = z - step * lo(i);
          }
          nu_next(i) = std::clamp(v, -rho(), rho());
        }
        const bool restart = (y - nu_next).dot(nu_next - nu) > Scalar(0);
        const Scalar theta_next = (Scalar(1) + std::sqrt(Scalar(1) + Scalar(4) * theta * theta)) / Scalar(2);
        if (restart) {
          y = nu_next;
          theta = 1;
        } else {
          y = nu_next + ((theta - Scalar(1)) / theta_next) * (nu_next - nu);
          theta = theta_next;
        }
        nu = nu_next;

        q = primal(nu);
        w = voltages(q);
        k = check(nu, w);
        const bool converged = k.residual() <= tol();
        if (converged || it % layer.opts_.polish_every == 0) {
          if (auto cand = polish(nu)) {
            if (auto r = accept(*cand, it)) return *r;
          }
          if (!converged && k.primal > tol()) {
            if (auto cand = polish(saturate_violated(nu, w))) {
              if (auto r = accept(*cand, it)) return *r;
            }
          }
        }
        if (converged) return finish(nu, q, w, k, it, false, true);
      }
      if (auto cand = polish(nu)) {
        if (auto r = accept(*cand, max_iter)) return *r;
      }
      return finish(nu, q, w, k, max_iter, false, false);
    }
  };

  const SensitivityModel<Scalar>* model_;
  std::vector<int> controllable_;
  ProjectionOptions opts_;
  Matrix<Scalar> A_;
  Scalar lipschitz_ = 0;
};

/// One-shot projection with default options at the given tolerance.
template <class Scalar>
ProjectionResult<Scalar> project(const ProjectionProblem<Scalar>& prob, double tol) {
  if (prob.model == nullptr) throw std::invalid_argument("project: problem has no model");
  ProjectionOptions opts;
  opts.tol = tol;
  const SafetyLayer<Scalar> layer(*prob.model, prob.controllable, opts);
  return layer.project(prob);
}

/// Per-bus bound violation max(0, v_lower - v, v - v_upper) under the
/// linear model.
template <class Scalar>
Vector<Scalar> check_safety(const SensitivityModel<Scalar>& model, const Injections<Scalar>& inj,
                            const Vector<Scalar>& v_lower, const Vector<Scalar>& v_upper) {
  require_size(v_lower.size(), model.size(), "check_safety: v_lower");
  require_size(v_upper.size(), model.size(), "check_safety: v_upper");
  const Vector<Scalar> v = predict_voltage(model, inj);
  return (v_lower - v).cwiseMax(v - v_upper).cwiseMax(Scalar(0));
}

}  // namespace saver
