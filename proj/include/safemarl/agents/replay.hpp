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


#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace safemarl::agents {

using Vector = Eigen::VectorXd;

/// One environment step. `Action` is std::size_t for discrete agents and a
/// real vector for continuous ones. Terminal transitions still carry next_*
/// fields; targets mask them with (1 - done).
template <typename Action>
struct Transition {
  Vector state;
  Vector obs1;
  Vector obs2;
  Action a1{};
  Action a2{};
  double r1 = 0.0;
  double r2 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  bool done = false;
  Vector next_state;
  Vector next_obs1;
  Vector next_obs2;
};

using DiscreteTransition = Transition<std::size_t>;
using ContinuousTransition = Transition<Vector>;

template <typename T>
using Batch = std::vector<const T*>;

/// Fixed-capacity ring; the oldest entry is overwritten once full.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    items_.reserve(capacity);
  }

  void push(T item) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(item));
    } else {
      items_[next_] = std::move(item);
    }
    next_ = (next_ + 1) % capacity_;
  }

  [[nodiscard]] std::size_t size() const { return items_.size(); }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] const T& operator[](std::size_t i) const { return items_.at(i); }

  /// Uniform sampling with replacement. Requires size() >= batch.
  [[nodiscard]] Batch<T> sample(std::size_t batch, std::mt19937_64& rng) const {
    if (batch == 0 || items_.size() < batch) {
      throw std::logic_error("replay buffer holds fewer transitions than the batch size");
    }
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    Batch<T> out;
    out.reserve(batch);
    for (std::size_t k = 0; k < batch; ++k) out.push_back(&items_[pick(rng)]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<T> items_;
};

}  // namespace safemarl::agents
