/*
 * Copyright 2026 The safemarl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Small dense feedforward networks with exact reverse-mode gradients.
//
// Batches are stored column-wise: an input batch is (input_size x B).

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace safemarl::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Identity, Tanh };

inline std::string_view to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "identity";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation: " + std::string(s));
}

class NonFiniteParameter : public std::runtime_error {
 public:
  explicit NonFiniteParameter(const std::string& where)
      : std::runtime_error("non-finite parameter after update: " + where) {}
};

/// Parameter-shaped container; also used for optimizer moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Matrix input;  // d(upstream . output)/d(input), one column per sample

  void scale(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    input *= s;
  }

  void add(const Gradients& other) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += other.weights[l];
      biases[l] += other.biases[l];
    }
  }
};

struct ForwardCache {
  std::vector<Matrix> activations;  // activations[0] is the input
};

class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> layer_sizes, Activation output_activation,
      Activation hidden_activation = Activation::Tanh)
      : sizes_(std::move(layer_sizes)), hidden_(hidden_activation), output_(output_activation) {
    if (sizes_.size() < 2) throw std::invalid_argument("network needs at least two layer sizes");
    for (std::size_t s : sizes_) {
      if (s == 0) throw std::invalid_argument("layer size must be positive");
    }
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weights_.push_back(Matrix::Zero(static_cast<Eigen::Index>(sizes_[l + 1]),
                                      static_cast<Eigen::Index>(sizes_[l])));
      biases_.push_back(Vector::Zero(static_cast<Eigen::Index>(sizes_[l + 1])));
    }
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
  static Mlp random(std::vector<std::size_t> layer_sizes, Activation output_activation,
                    std::mt19937_64& rng, Activation hidden_activation = Activation::Tanh) {
    Mlp net(std::move(layer_sizes), output_activation, hidden_activation);
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index k = 0; k < net.weights_[l].size(); ++k) net.weights_[l].data()[k] = u(rng);
      for (Eigen::Index k = 0; k < net.biases_[l].size(); ++k) net.biases_[l].data()[k] = u(rng);
    }
    return net;
  }

  [[nodiscard]] const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  [[nodiscard]] std::size_t input_size() const { return sizes_.front(); }
  [[nodiscard]] std::size_t output_size() const { return sizes_.back(); }
  [[nodiscard]] std::size_t layers() const { return weights_.size(); }
  [[nodiscard]] Activation hidden_activation() const { return hidden_; }
  [[nodiscard]] Activation output_activation() const { return output_; }

  [[nodiscard]] Matrix& weight(std::size_t l) { return weights_[l]; }
  [[nodiscard]] const Matrix& weight(std::size_t l) const { return weights_[l]; }
  [[nodiscard]] Vector& bias(std::size_t l) { return biases_[l]; }
  [[nodiscard]] const Vector& bias(std::size_t l) const { return biases_[l]; }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return n;
  }

  [[nodiscard]] bool same_architecture(const Mlp& other) const {
    return sizes_ == other.sizes_ && hidden_ == other.hidden_ && output_ == other.output_;
  }

  [[nodiscard]] bool all_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    }
    return true;
  }

  /// Visits every parameter in blob order: per layer, weights row-major then biases.
  template <typename F>
  void for_each_parameter(F&& f) {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix& w = weights_[l];
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) f(w(r, c));
      for (Eigen::Index k = 0; k < biases_[l].size(); ++k) f(biases_[l](k));
    }
  }
  template <typename F>
  void for_each_parameter(F&& f) const {
    const_cast<Mlp*>(this)->for_each_parameter([&](double& p) { f(static_cast<const double&>(p)); });
  }

  [[nodiscard]] Vector forward(const Vector& input) const {
    check_input_rows(input.size());
    Vector a = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Vector z = weights_[l] * a + biases_[l];
      a = activate(std::move(z), activation_of(l));
    }
    return a;
  }

  [[nodiscard]] Matrix forward_batch(const Matrix& inputs) const {
    check_input_rows(inputs.rows());
    Matrix a = inputs;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * a;
      z.colwise() += biases_[l];
      a = activate(std::move(z), activation_of(l));
    }
    return a;
  }

  [[nodiscard]] ForwardCache forward_cached(const Matrix& inputs) const {
    check_input_rows(inputs.rows());
    ForwardCache cache;
    cache.activations.reserve(weights_.size() + 1);
    cache.activations.push_back(inputs);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      Matrix z = weights_[l] * cache.activations.back();
      z.colwise() += biases_[l];
      cache.activations.push_back(activate(std::move(z), activation_of(l)));
    }
    return cache;
  }

  [[nodiscard]] const Matrix& output_of(const ForwardCache& cache) const {
    return cache.activations.back();
  }

  /// Reverse pass for sum over the batch of (upstream column . output column).
  [[nodiscard]] Gradients backward(const ForwardCache& cache, const Matrix& upstream) const {
    if (upstream.rows() != static_cast<Eigen::Index>(output_size()) ||
        upstream.cols() != cache.activations.front().cols()) {
      throw std::invalid_argument("upstream gradient shape does not match network output");
    }
    Gradients g;
    g.weights.resize(weights_.size());
    g.biases.resize(weights_.size());
    Matrix delta = upstream;
    for (std::size_t l = weights_.size(); l-- > 0;) {
      if (activation_of(l) == Activation::Tanh) {
        const Matrix& out = cache.activations[l + 1];
        delta.array() *= (1.0 - out.array().square());
      }
      g.weights[l] = delta * cache.activations[l].transpose();
      g.biases[l] = delta.rowwise().sum();
      delta = weights_[l].transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
  }

  [[nodiscard]] Gradients zero_gradients() const {
    Gradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      g.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
      g.biases.push_back(Vector::Zero(biases_[l].size()));
    }
    return g;
  }

 private:
  [[nodiscard]] Activation activation_of(std::size_t layer) const {
    return layer + 1 == weights_.size() ? output_ : hidden_;
  }

  template <typename M>
  static M activate(M z, Activation a) {
    if (a == Activation::Tanh) z = z.array().tanh().matrix();
    return z;
  }

  void check_input_rows(Eigen::Index rows) const {
    if (sizes_.empty() || rows != static_cast<Eigen::Index>(sizes_.front())) {
      throw std::invalid_argument("network input has " + std::to_string(rows) + " rows, expected " +
                                  std::to_string(sizes_.empty() ? 0 : sizes_.front()));
    }
  }

  std::vector<std::size_t> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
  Activation hidden_ = Activation::Tanh;
  Activation output_ = Activation::Identity;
};

/// Gradient of (upstream . net(input)) for a single sample.
inline Gradients gradients(const Mlp& net, const Vector& input, const Vector& upstream) {
  const ForwardCache cache = net.forward_cached(input);
  return net.backward(cache, upstream);
}

enum class Direction { Ascent, Descent };

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  Gradients first_moment;
  Gradients second_moment;

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::Sgd;
    s.learning_rate = lr;
    return s;
  }
  static OptimizerState adam(double lr) {
    OptimizerState s;
    s.kind = OptimizerKind::Adam;
    s.learning_rate = lr;
    return s;
  }
};

/// One first-order step. Throws NonFiniteParameter if any parameter leaves
/// the finite range.
inline void apply_update(Mlp& net, OptimizerState& state, const Gradients& grads, Direction dir) {
  if (!(state.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (grads.weights.size() != net.layers()) throw std::invalid_argument("gradient layer count");
  const double sign = dir == Direction::Ascent ? 1.0 : -1.0;
  ++state.step;

  if (state.kind == OptimizerKind::Sgd) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      net.weight(l) += sign * state.learning_rate * grads.weights[l];
      net.bias(l) += sign * state.learning_rate * grads.biases[l];
    }
  } else {
    if (state.first_moment.weights.empty()) {
      state.first_moment = net.zero_gradients();
      state.second_moment = net.zero_gradients();
    }
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto step = [&](auto& param, const auto& g, auto& m, auto& v) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = (state.beta2 * v.array() + (1.0 - state.beta2) * g.array().square()).matrix();
      param.array() += sign * state.learning_rate * (m.array() / c1) /
                       ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t l = 0; l < net.layers(); ++l) {
      step(net.weight(l), grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
      step(net.bias(l), grads.biases[l], state.first_moment.biases[l], state.second_moment.biases[l]);
    }
  }
  if (!net.all_finite()) throw NonFiniteParameter("network with " + std::to_string(net.parameter_count()) + " parameters");
}

/// Elementwise rho * target + (1 - rho) * online.
inline Mlp soft_blend(const Mlp& target, const Mlp& online, double rho) {
  if (!target.same_architecture(online)) throw std::invalid_argument("soft_blend architecture mismatch");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
  Mlp out = target;
  for (std::size_t l = 0; l < out.layers(); ++l) {
    out.weight(l) = rho * target.weight(l) + (1.0 - rho) * online.weight(l);
    out.bias(l) = rho * target.bias(l) + (1.0 - rho) * online.bias(l);
  }
  return out;
}

inline void soft_blend_into(Mlp& target, const Mlp& online, double rho) {
  if (!target.same_architecture(online)) throw std::invalid_argument("soft_blend architecture mismatch");
  for (std::size_t l = 0; l < target.layers(); ++l) {
    target.weight(l) = rho * target.weight(l) + (1.0 - rho) * online.weight(l);
    target.bias(l) = rho * target.bias(l) + (1.0 - rho) * online.bias(l);
  }
}

}  // namespace safemarl::nn
