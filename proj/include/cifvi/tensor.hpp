#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cifvi {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A computation produced NaN/Inf where a finite value was required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Global switch for NaN/Inf and domain checks at primitive boundaries.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

class Tape;

/// Dense rank-2 f64 array. Rows index the batch, columns the features; a
/// single vector is a 1 x n tensor. A tensor is either a constant value or a
/// handle to a node recorded on a Tape.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Matrix value);

  static Tensor scalar(double v);
  static Tensor row(std::initializer_list<double> values);
  static Tensor zeros(Index rows, Index cols);
  static Tensor constant(Index rows, Index cols, double v);
  static Tensor wrap(std::shared_ptr<const Matrix> value) { return Tensor(std::move(value)); }

  const Matrix& value() const { return *value_; }
  Index rows() const { return value_->rows(); }
  Index cols() const { return value_->cols(); }
  Index size() const { return value_->size(); }
  std::array<Index, 2> shape() const { return {rows(), cols()}; }
  double item() const;
  double operator()(Index r, Index c) const { return (*value_)(r, c); }

  bool tracked() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  Tensor detach() const { return Tensor(value_); }
  const std::shared_ptr<const Matrix>& shared_value() const { return value_; }

 private:
  friend class Tape;
  explicit Tensor(std::shared_ptr<const Matrix> value) : value_(std::move(value)) {}
  Tensor(std::shared_ptr<const Matrix> value, Tape* tape, int node)
      : value_(std::move(value)), tape_(tape), node_(node) {}

  std::shared_ptr<const Matrix> value_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Named model weight. Names are unique within a model.
class Parameter {
 public:
  Parameter(std::string name, Matrix value, bool trainable = true)
      : name_(std::move(name)), value_(std::move(value)), trainable_(trainable) {}

  const std::string& name() const { return name_; }
  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  bool trainable() const { return trainable_; }
  void set_trainable(bool t) { trainable_ = t; }

 private:
  std::string name_;
  Matrix value_;
  bool trainable_;
};

using ParameterList = std::vector<Parameter*>;

/// Gradient of one scalar output with respect to the nodes of a tape.
class Gradients {
 public:
  /// Zero matrix of the right shape when the node received no gradient.
  Matrix wrt(const Tensor& t) const;
  Matrix wrt(const Parameter& p) const;

 private:
  friend class Tape;
  std::vector<Matrix> grads_;
  std::vector<std::array<Index, 2>> shapes_;
  std::unordered_map<std::string, int> params_;
  const Tape* tape_ = nullptr;
};

/// Define-by-run reverse-mode tape. Single owner; rebuilt every step.
class Tape {
 public:
  /// Receives d(output)/d(result) and writes d(output)/d(input k) into
  /// grads[k]. A null pointer marks an input that needs no gradient.
  using BackwardFn = std::function<void(const Matrix& grad, std::span<Matrix*> grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor variable(Matrix value);
  /// Leaf for a named parameter; repeated calls return the same node.
  Tensor param(const Parameter& p);

  /// Records a node when any input is tracked; otherwise returns a constant.
  Tensor record(std::shared_ptr<const Matrix> value, std::initializer_list<const Tensor*> inputs,
                BackwardFn backward);

  Gradients backward(const Tensor& output) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::vector<int> inputs;  // -1 for untracked inputs
    BackwardFn backward;
    std::array<Index, 2> shape;
  };
  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> params_;
  std::unordered_map<std::string, const Parameter*> param_owner_;
};

/// Tracked view of a trainable parameter when a tape is given, else a constant.
Tensor bind(const Parameter& p, Tape* tape);

// Elementwise binary ops broadcast a 1 x n row, an r x 1 column or a 1 x 1
// scalar against an r x n operand. Nothing else broadcasts implicitly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
/// Sum of every entry, 1 x 1.
Tensor sum(const Tensor& a);
/// Mean of every entry, 1 x 1.
Tensor mean(const Tensor& a);
/// Per-row sum, r x 1.
Tensor row_sum(const Tensor& a);
/// Per-column sum, 1 x n.
Tensor col_sum(const Tensor& a);
/// Per-column mean, 1 x n.
Tensor col_mean(const Tensor& a);
Tensor broadcast(const Tensor& a, Index rows, Index cols);
/// Column-wise concatenation; row counts must match.
Tensor concat(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, Index start, Index count);
/// Identity gradient inside [lo, hi], zero outside.
Tensor clamp(const Tensor& a, double lo, double hi);
/// log(1 + exp(a)) evaluated without overflow.
Tensor softplus(const Tensor& a);
/// Per-row log-sum-exp, r x 1. Terms are summed in ascending order, so the
/// result does not depend on column order.
Tensor logsumexp_rows(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
inline Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }

}  // namespace cifvi
