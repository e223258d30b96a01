// Copyright 2026 The TPareto Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode tape. Every op returns a new
// immutable Tensor; when any input requires a gradient the result records
// its inputs and a local backward rule.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tpareto {

using Shape = std::vector<std::size_t>;

/// Raised when an op produces NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when backward() reaches an op that has no derivative.
class NonDifferentiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor();

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(double value);

  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t rank() const { return shape().size(); }
  // 2-D view used by the matrix ops: rank 1 is a single row, rank 0 is 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool defined() const { return node_ != nullptr; }

  // Identity used to look up gradients; stable across copies of one tensor.
  const void* id() const { return node_.get(); }

  explicit Tensor(std::shared_ptr<const detail::Node> node);
  const std::shared_ptr<const detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<const detail::Node> node_;
};

// Disables taping on the current thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// a (m x n) + bias (1 x n) broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor tanh(const Tensor& a);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor sum(const Tensor& a);
Tensor mean_rows(const Tensor& a);
// Mean over consecutive blocks of `segment` rows: (B*segment x n) -> (B x n).
Tensor segment_mean(const Tensor& a, std::size_t segment);
// Per-row sum: (m x n) -> (m x 1).
Tensor row_sum(const Tensor& a);
// Multiplies block b of `segment` rows of a by s[b]; s is (B x 1).
Tensor scale_segments(const Tensor& a, const Tensor& s, std::size_t segment);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

// Block-diagonal attention helpers over `batch` samples stacked by rows.
// q is (B*Lq x h), k is (B*Lk x h); result is (B*Lq x Lk) of q_i . k_j.
Tensor batched_scores(const Tensor& q, const Tensor& k, std::size_t batch);
// p is (B*Lq x Lk), v is (B*Lk x h); result is (B*Lq x h).
Tensor batched_mix(const Tensor& p, const Tensor& v, std::size_t batch);

// Mean cross-entropy of row-wise logits against integer labels, computed
// with log-sum-exp.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// Unit step. Has no derivative: backward through it throws.
Tensor heaviside(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double f) { return scale(a, f); }

// ---- parameters and gradients ---------------------------------------------

enum class GroupId { Theta1, Theta2, Theta3, ThetaCls };

std::string to_string(GroupId id);
GroupId group_from_string(const std::string& name);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Flattening order is declaration order of the tensors, each row-major.
class ParameterGroup {
 public:
  ParameterGroup() = default;
  explicit ParameterGroup(GroupId id) : id_(id) {}

  GroupId id() const { return id_; }
  void add(std::string name, Tensor tensor);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  std::size_t dim() const;
  std::vector<double> flatten() const;
  // Same names/shapes, new leaf tensors holding `values`.
  ParameterGroup with_values(std::span<const double> values) const;

 private:
  GroupId id_ = GroupId::Theta1;
  std::vector<NamedTensor> tensors_;
};

struct GradientVector {
  GroupId group = GroupId::Theta1;
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// Exact reverse-mode gradients of a scalar loss for each group. Groups the
// loss does not depend on map to zero vectors.
std::map<GroupId, GradientVector> backward(const Tensor& loss,
                                           std::span<const ParameterGroup> groups);

// Gradients with respect to arbitrary tensors, same order as `wrt`.
std::vector<std::vector<double>> gradients(const Tensor& loss, std::span<const Tensor> wrt);

using GroupLossFn = std::function<double(const ParameterGroup&)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
GradientVector finite_diff(const GroupLossFn& loss_fn, const ParameterGroup& group, double step);

}  // namespace tpareto
