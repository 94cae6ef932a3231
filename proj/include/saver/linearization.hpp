#pragma once

// Lossless linearized branch flow: v = v0 + R p + X q.
//
// Entry (i, j) of R is twice the total resistance shared by the root paths
// of buses i and j (X likewise with reactance). Positive injections raise
// voltages. Matrices are dense; N is at most a few hundred.

#include "saver/feeder.hpp"
#include "saver/types.hpp"

#include <iosfwd>
#include <string>

namespace saver {

template <class Scalar>
struct SensitivityModel {
  Matrix<Scalar> R;
  Matrix<Scalar> X;
  Vector<Scalar> v0_vec;

  Eigen::Index size() const { return v0_vec.size(); }
};

template <class Scalar = double>
SensitivityModel<Scalar> build_sensitivity(const Feeder& f) {
  const int n = f.num_nodes();
  // Cumulative path impedance from the root to every bus.
  std::vector<Scalar> cum_r(f.num_buses(), Scalar(0)), cum_x(f.num_buses(), Scalar(0));
  std::vector<int> depth(f.num_buses(), 0);
  for (std::size_t k = 1; k < f.topological_order().size(); ++k) {
    const int j = f.topological_order()[k];
    const Line& line = f.lines()[f.parent_line(j)];
    cum_r[j] = cum_r[f.parent(j)] + Scalar(line.r);
    cum_x[j] = cum_x[f.parent(j)] + Scalar(line.x);
    depth[j] = depth[f.parent(j)] + 1;
  }
  auto common_ancestor = [&](int a, int b) {
    while (depth[a] > depth[b]) a = f.parent(a);
    while (depth[b] > depth[a]) b = f.parent(b);
    while (a != b) {
      a = f.parent(a);
      b = f.parent(b);
    }
    return a;
  };

  SensitivityModel<Scalar> m{Matrix<Scalar>(n, n), Matrix<Scalar>(n, n),
                             Vector<Scalar>::Constant(n, Scalar(f.v0()))};
  for (int i = 1; i <= n; ++i) {
    for (int j = i; j <= n; ++j) {
      const int a = common_ancestor(i, j);
      m.R(i - 1, j - 1) = m.R(j - 1, i - 1) = Scalar(2) * cum_r[a];
      m.X(i - 1, j - 1) = m.X(j - 1, i - 1) = Scalar(2) * cum_x[a];
    }
  }
  return m;
}

template <class Scalar>
Vector<Scalar> predict_voltage(const SensitivityModel<Scalar>& m, const Injections<Scalar>& inj) {
  require_size(inj.p.size(), m.size(), "predict_voltage: p");
  require_size(inj.q.size(), m.size(), "predict_voltage: q");
  return m.v0_vec + m.R * inj.p + m.X * inj.q;
}

/// Comma-separated dump of a matrix at full precision.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);
void export_sensitivity_csv(const SensitivityModel<double>& m, const std::string& r_path,
                            const std::string& x_path);

}  // namespace saver
