#pragma once

// Small dense networks with hand-written backpropagation. Batches are
// stored column-wise: an input of shape (features, batch).

#include "saver/types.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace saver {

enum class Activation { Identity, Relu, Tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

template <class Scalar>
struct Dense {
  Matrix<Scalar> W;  // (out, in)
  Vector<Scalar> b;
  Activation act = Activation::Identity;

  // Filled by forward() and backward().
  Matrix<Scalar> input, pre, output;
  Matrix<Scalar> dW;
  Vector<Scalar> db;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, Activation a)
      : W(Matrix<Scalar>::Zero(out, in)), b(Vector<Scalar>::Zero(out)), act(a) {}

  Eigen::Index in_size() const { return W.cols(); }
  Eigen::Index out_size() const { return W.rows(); }

  static Matrix<Scalar> activate(const Matrix<Scalar>& z, Activation a) {
    switch (a) {
      case Activation::Relu: return z.cwiseMax(Scalar(0));
      case Activation::Tanh: return z.array().tanh().matrix();
      case Activation::Identity: break;
    }
    return z;
  }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    Matrix<Scalar> z = W * x;
    z.colwise() += b;
    return activate(z, act);
  }

  const Matrix<Scalar>& forward(const Matrix<Scalar>& x) {
    input = x;
    pre.noalias() = W * x;
    pre.colwise() += b;
    output = activate(pre, act);
    return output;
  }

  /// Sets dW, db from dL/d(output) and returns dL/d(input).
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) {
    Matrix<Scalar> g;
    switch (act) {
      case Activation::Relu:
        g = (pre.array() > Scalar(0)).select(grad_out, Matrix<Scalar>::Zero(grad_out.rows(), grad_out.cols()));
        break;
      case Activation::Tanh:
        g = (grad_out.array() * (Scalar(1) - output.array().square())).matrix();
        break;
      case Activation::Identity:
        g = grad_out;
        break;
    }
    dW.noalias() = g * input.transpose();
    db = g.rowwise().sum();
    return W.transpose() * g;
  }
};

template <class Scalar>
class Mlp {
 public:
  Mlp() = default;

  /// sizes = {in, h1, ..., out}. Hidden layers use `hidden`, the last layer
  /// `output`. Weights are uniform in +-1/sqrt(fan_in), the last layer in
  /// +-final_scale.
  template <class Rng>
  static Mlp make(const std::vector<int>& sizes, Activation hidden, Activation output, Rng& rng,
                  Scalar final_scale = Scalar(3e-3)) {
    if (sizes.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    Mlp net;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
      if (sizes[k] < 1 || sizes[k + 1] < 1) throw std::invalid_argument("Mlp: layer sizes must be positive");
      const bool last = k + 2 == sizes.size();
      Dense<Scalar> layer(sizes[k], sizes[k + 1], last ? output : hidden);
      const Scalar bound = last ? final_scale : Scalar(1) / std::sqrt(Scalar(sizes[k]));
      std::uniform_real_distribution<double> u(-static_cast<double>(bound), static_cast<double>(bound));
      for (Eigen::Index i = 0; i < layer.W.size(); ++i) layer.W.data()[i] = Scalar(u(rng));
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b(i) = Scalar(u(rng));
      net.layers_.push_back(std::move(layer));
    }
    return net;
  }

  std::vector<Dense<Scalar>>& layers() { return layers_; }
  const std::vector<Dense<Scalar>>& layers() const { return layers_; }
  Eigen::Index in_size() const { return layers_.front().in_size(); }
  Eigen::Index out_size() const { return layers_.back().out_size(); }

  std::vector<int> sizes() const {
    std::vector<int> s{static_cast<int>(in_size())};
    for (const auto& l : layers_) s.push_back(static_cast<int>(l.out_size()));
    return s;
  }

  Matrix<Scalar> apply(const Matrix<Scalar>& x) const {
    require_size(x.rows(), in_size(), "Mlp::apply");
    Matrix<Scalar> h = x;
    for (const auto& l : layers_) h = l.apply(h);
    return h;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) {
    require_size(x.rows(), in_size(), "Mlp::forward");
    const Matrix<Scalar>* h = &x;
    for (auto& l : layers_) h = &l.forward(*h);
    return *h;
  }

  /// Backpropagates through the last forward() call; returns dL/d(input).
  Matrix<Scalar> backward(const Matrix<Scalar>& grad_out) {
    Matrix<Scalar> g = grad_out;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
    return g;
  }

  Eigen::Index num_params() const {
    Eigen::Index n = 0;
    for (const auto& l : layers_) n += l.W.size() + l.b.size();
    return n;
  }

  /// Parameters flattened layer by layer, W (column-major) then b.
  Vector<Scalar> params() const { return flatten([](const Dense<Scalar>& l) { return std::pair{&l.W, &l.b}; }); }
  Vector<Scalar> grads() const { return flatten([](const Dense<Scalar>& l) { return std::pair{&l.dW, &l.db}; }); }

  void set_params(const Vector<Scalar>& theta) {
    require_size(theta.size(), num_params(), "Mlp::set_params");
    Eigen::Index k = 0;
    for (auto& l : layers_) {
      l.W = Eigen::Map<const Matrix<Scalar>>(theta.data() + k, l.W.rows(), l.W.cols());
      k += l.W.size();
      l.b = theta.segment(k, l.b.size());
      k += l.b.size();
    }
  }

  /// this <- tau * src + (1 - tau) * this
  void soft_update(const Mlp& src, Scalar tau) {
    if (layers_.size() != src.layers_.size()) throw std::invalid_argument("soft_update: shape mismatch");
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      auto& d = layers_[k];
      const auto& s = src.layers_[k];
      if (d.W.rows() != s.W.rows() || d.W.cols() != s.W.cols()) {
        throw std::invalid_argument("soft_update: shape mismatch");
      }
      if (tau == Scalar(1)) {
        d.W = s.W;
        d.b = s.b;
      } else {
        d.W = tau * s.W + (Scalar(1) - tau) * d.W;
        d.b = tau * s.b + (Scalar(1) - tau) * d.b;
      }
    }
  }

  bool same_shape(const Mlp& o) const { return sizes() == o.sizes(); }

 private:
  template <class Pick>
  Vector<Scalar> flatten(Pick pick) const {
    Vector<Scalar> out(num_params());
    Eigen::Index k = 0;
    for (const auto& l : layers_) {
      auto [W, b] = pick(l);
      if (W->size() != l.W.size() || b->size() != l.b.size()) {
        throw std::logic_error("Mlp: gradients not computed");
      }
      out.segment(k, W->size()) = Eigen::Map<const Vector<Scalar>>(W->data(), W->size());
      k += W->size();
      out.segment(k, b->size()) = *b;
      k += b->size();
    }
    return out;
  }

  std::vector<Dense<Scalar>> layers_;
};

template <class Scalar>
class Adam {
 public:
  struct Moments {
    Matrix<Scalar> mW, vW;
    Vector<Scalar> mb, vb;
  };

  Adam() = default;
  explicit Adam(const Mlp<Scalar>& net, Scalar lr = Scalar(1e-3), Scalar beta1 = Scalar(0.9),
                Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : lr(lr), beta1(beta1), beta2(beta2), eps(eps) {
    for (const auto& l : net.layers()) {
      moments.push_back({Matrix<Scalar>::Zero(l.W.rows(), l.W.cols()), Matrix<Scalar>::Zero(l.W.rows(), l.W.cols()),
                         Vector<Scalar>::Zero(l.b.size()), Vector<Scalar>::Zero(l.b.size())});
    }
  }

  /// Descent step using the gradients stored in the layers.
  void step(Mlp<Scalar>& net) {
    if (moments.size() != net.layers().size()) throw std::invalid_argument("Adam: network shape changed");
    ++t;
    const Scalar c1 = Scalar(1) - std::pow(beta1, Scalar(t));
    const Scalar c2 = Scalar(1) - std::pow(beta2, Scalar(t));
    for (std::size_t k = 0; k < moments.size(); ++k) {
      auto& l = net.layers()[k];
      auto& m = moments[k];
      update(l.W, l.dW, m.mW, m.vW, c1, c2);
      update(l.b, l.db, m.mb, m.vb, c1, c2);
    }
  }

  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  long t = 0;
  std::vector<Moments> moments;

 private:
  template <class P, class G, class M>
  void update(P& p, const G& g, M& m, M& v, Scalar c1, Scalar c2) const {
    m = beta1 * m + (Scalar(1) - beta1) * g;
    v = beta2 * v + (Scalar(1) - beta2) * g.cwiseAbs2();
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace saver
