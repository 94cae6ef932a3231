#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace saver {

template <class Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <class Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_size(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) +
                         ", got " + std::to_string(got));
  }
}

/// Nodal injections indexed by non-root bus (position j-1 for bus j).
/// Positive values are generation into the bus; loads are negative.
template <class Scalar>
struct Injections {
  Vector<Scalar> p;
  Vector<Scalar> q;

  static Injections zero(Eigen::Index n) {
    return {Vector<Scalar>::Zero(n), Vector<Scalar>::Zero(n)};
  }
};

/// Scatter per-controllable values into an N-vector (zeros elsewhere).
template <class Scalar, class Derived>
Vector<Scalar> scatter_controllable(const Eigen::MatrixBase<Derived>& values,
                                    const std::vector<int>& controllable, Eigen::Index n) {
  require_size(values.size(), static_cast<Eigen::Index>(controllable.size()), "scatter_controllable");
  Vector<Scalar> out = Vector<Scalar>::Zero(n);
  for (std::size_t k = 0; k < controllable.size(); ++k) {
    if (controllable[k] < 1 || controllable[k] > n) throw DimensionError("scatter_controllable: bus out of range");
    out(controllable[k] - 1) = values(k);
  }
  return out;
}

/// Gather the controllable entries of an N-vector.
template <class Derived>
Vector<typename Derived::Scalar> gather_controllable(const Eigen::MatrixBase<Derived>& full,
                                                     const std::vector<int>& controllable) {
  Vector<typename Derived::Scalar> out(static_cast<Eigen::Index>(controllable.size()));
  for (std::size_t k = 0; k < controllable.size(); ++k) {
    if (controllable[k] < 1 || controllable[k] > full.size()) throw DimensionError("gather_controllable: bus out of range");
    out(k) = full(controllable[k] - 1);
  }
  return out;
}

}  // namespace saver
