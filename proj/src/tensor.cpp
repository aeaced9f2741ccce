#include "cifvi/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>

namespace cifvi {

namespace {

std::atomic<bool> g_finite_checks{false};

using Shape = std::array<Index, 2>;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << s[0] << "x" << s[1];
  return os.str();
}

Shape shape_of(const Matrix& m) { return {m.rows(), m.cols()}; }

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (a[0] == 1 && a[1] == 1) return b;
  if (b[0] == 1 && b[1] == 1) return a;
  if (a[0] == 1 && a[1] == b[1]) return b;
  if (b[0] == 1 && b[1] == a[1]) return a;
  if (a[1] == 1 && a[0] == b[0]) return b;
  if (b[1] == 1 && b[0] == a[0]) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.size() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  if (m.rows() == 1) return m.replicate(rows, 1);
  return m.replicate(1, cols);
}

Matrix reduce_to(const Matrix& g, const Shape& target) {
  if (shape_of(g) == target) return g;
  if (target[0] == 1 && target[1] == 1) return Matrix::Constant(1, 1, g.sum());
  if (target[0] == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

void check_finite(const Matrix& m, const char* op) {
  if (!g_finite_checks.load(std::memory_order_relaxed)) return;
  if (!m.allFinite()) throw DomainError(std::string(op) + ": non-finite value produced");
}

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (!t->tracked()) continue;
    if (tape != nullptr && tape != t->tape()) throw std::logic_error("operands recorded on different tapes");
    tape = t->tape();
  }
  return tape;
}

Tensor make_op(const char* op, std::shared_ptr<const Matrix> out, std::initializer_list<const Tensor*> inputs,
               Tape::BackwardFn backward) {
  check_finite(*out, op);
  Tape* tape = common_tape(inputs);
  if (tape == nullptr) return Tensor::wrap(std::move(out));
  return tape->record(std::move(out), inputs, std::move(backward));
}

Tensor make_op(const char* op, Matrix value, std::initializer_list<const Tensor*> inputs,
               Tape::BackwardFn backward) {
  return make_op(op, std::make_shared<const Matrix>(std::move(value)), inputs, std::move(backward));
}

using Sp = std::shared_ptr<const Matrix>;

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

Tensor::Tensor() : value_(std::make_shared<const Matrix>()) {}
Tensor::Tensor(Matrix value) : value_(std::make_shared<const Matrix>(std::move(value))) {}

Tensor Tensor::scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

Tensor Tensor::row(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) m(0, i++) = v;
  return Tensor(std::move(m));
}

Tensor Tensor::zeros(Index rows, Index cols) { return Tensor(Matrix::Zero(rows, cols)); }
Tensor Tensor::constant(Index rows, Index cols, double v) { return Tensor(Matrix::Constant(rows, cols, v)); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item: tensor is " + shape_str(shape()) + ", not 1x1");
  return (*value_)(0, 0);
}

Matrix Gradients::wrt(const Tensor& t) const {
  if (!t.tracked() || t.tape() != tape_ || t.node() >= static_cast<int>(grads_.size()))
    return Matrix::Zero(t.rows(), t.cols());
  const Matrix& g = grads_[static_cast<std::size_t>(t.node())];
  if (g.size() == 0) return Matrix::Zero(t.rows(), t.cols());
  return g;
}

Matrix Gradients::wrt(const Parameter& p) const {
  auto it = params_.find(p.name());
  if (it == params_.end() || it->second >= static_cast<int>(grads_.size()))
    return Matrix::Zero(p.value().rows(), p.value().cols());
  const Matrix& g = grads_[static_cast<std::size_t>(it->second)];
  if (g.size() == 0) return Matrix::Zero(p.value().rows(), p.value().cols());
  return g;
}

Tensor Tape::variable(Matrix value) {
  auto v = std::make_shared<const Matrix>(std::move(value));
  nodes_.push_back(Node{{}, nullptr, shape_of(*v)});
  return Tensor(std::move(v), this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Tape::param(const Parameter& p) {
  auto it = params_.find(p.name());
  if (it != params_.end()) {
    if (param_owner_.at(p.name()) != &p) throw std::logic_error("duplicate parameter name: " + p.name());
    // Same node, fresh handle onto the stored value.
    return Tensor(std::make_shared<const Matrix>(p.value()), this, it->second);
  }
  Tensor t = variable(p.value());
  params_.emplace(p.name(), t.node());
  param_owner_.emplace(p.name(), &p);
  return t;
}

Tensor Tape::record(std::shared_ptr<const Matrix> value, std::initializer_list<const Tensor*> inputs,
                    BackwardFn backward) {
  Node node;
  node.shape = shape_of(*value);
  bool any = false;
  for (const Tensor* t : inputs) {
    if (t->tracked()) {
      if (t->tape() != this) throw std::logic_error("operand recorded on a different tape");
      node.inputs.push_back(t->node());
      any = true;
    } else {
      node.inputs.push_back(-1);
    }
  }
  if (!any) return Tensor(std::move(value));
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor(std::move(value), this, static_cast<int>(nodes_.size()) - 1);
}

Gradients Tape::backward(const Tensor& output) const {
  if (output.size() != 1) throw ShapeError("backward: output must be a scalar, got " + shape_str(output.shape()));
  if (!output.tracked() || output.tape() != this) throw std::logic_error("backward: output is not on this tape");

  Gradients result;
  result.tape_ = this;
  result.params_ = params_;
  result.grads_.resize(nodes_.size());
  auto& grads = result.grads_;
  const auto out = static_cast<std::size_t>(output.node());
  grads[out] = Matrix::Ones(1, 1);

  std::vector<Matrix> tmp;
  std::vector<Matrix*> ptrs;
  for (std::size_t i = out + 1; i-- > 0;) {
    if (grads[i].size() == 0) continue;
    const Node& node = nodes_[i];
    if (!node.backward) continue;
    tmp.assign(node.inputs.size(), Matrix());
    ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k)
      if (node.inputs[k] >= 0) ptrs[k] = &tmp[k];
    node.backward(grads[i], std::span<Matrix*>(ptrs));
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (ptrs[k] == nullptr || tmp[k].size() == 0) continue;
      Matrix& acc = grads[static_cast<std::size_t>(node.inputs[k])];
      if (acc.size() == 0)
        acc = std::move(tmp[k]);
      else
        acc += tmp[k];
    }
  }
  return result;
}

Tensor bind(const Parameter& p, Tape* tape) {
  if (tape != nullptr && p.trainable()) return tape->param(p);
  return Tensor(p.value());
}

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "add");
  Matrix v = expand(a.value(), s[0], s[1]) + expand(b.value(), s[0], s[1]);
  const Shape sa = a.shape(), sb = b.shape();
  return make_op("add", std::move(v), {&a, &b}, [sa, sb](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = reduce_to(g, sa);
    if (gs[1]) *gs[1] = reduce_to(g, sb);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "sub");
  Matrix v = expand(a.value(), s[0], s[1]) - expand(b.value(), s[0], s[1]);
  const Shape sa = a.shape(), sb = b.shape();
  return make_op("sub", std::move(v), {&a, &b}, [sa, sb](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = reduce_to(g, sa);
    if (gs[1]) *gs[1] = -reduce_to(g, sb);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "mul");
  Matrix v = expand(a.value(), s[0], s[1]).cwiseProduct(expand(b.value(), s[0], s[1]));
  Sp av = a.shared_value(), bv = b.shared_value();
  return make_op("mul", std::move(v), {&a, &b}, [av, bv, s](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = reduce_to(g.cwiseProduct(expand(*bv, s[0], s[1])), shape_of(*av));
    if (gs[1]) *gs[1] = reduce_to(g.cwiseProduct(expand(*av, s[0], s[1])), shape_of(*bv));
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const Shape s = broadcast_shape(a.shape(), b.shape(), "div");
  if (finite_checks_enabled() && (b.value().array() == 0.0).any()) throw DomainError("div: division by zero");
  Matrix be = expand(b.value(), s[0], s[1]);
  Matrix v = expand(a.value(), s[0], s[1]).cwiseQuotient(be);
  Sp av = a.shared_value(), bv = b.shared_value();
  return make_op("div", std::move(v), {&a, &b}, [av, bv, s](const Matrix& g, std::span<Matrix*> gs) {
    Matrix bb = expand(*bv, s[0], s[1]);
    if (gs[0]) *gs[0] = reduce_to(g.cwiseQuotient(bb), shape_of(*av));
    if (gs[1]) {
      Matrix aa = expand(*av, s[0], s[1]);
      *gs[1] = reduce_to(-(g.array() * aa.array() / bb.array().square()).matrix(), shape_of(*bv));
    }
  });
}

Tensor neg(const Tensor& a) {
  return make_op("neg", -a.value(), {&a}, [](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = -g;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + shape_str(a.shape()) + " times " + shape_str(b.shape()));
  Matrix v = a.value() * b.value();
  Sp av = a.shared_value(), bv = b.shared_value();
  return make_op("matmul", std::move(v), {&a, &b}, [av, bv](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g * bv->transpose();
    if (gs[1]) *gs[1] = av->transpose() * g;
  });
}

Tensor exp(const Tensor& a) {
  auto o = std::make_shared<const Matrix>(a.value().array().exp().matrix());
  return make_op("exp", o, {&a}, [o](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.cwiseProduct(*o);
  });
}

Tensor log(const Tensor& a) {
  if (finite_checks_enabled() && (a.value().array() <= 0.0).any())
    throw DomainError("log: non-positive operand");
  Sp av = a.shared_value();
  return make_op("log", a.value().array().log().matrix(), {&a}, [av](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.cwiseQuotient(*av);
  });
}

Tensor tanh(const Tensor& a) {
  auto o = std::make_shared<const Matrix>(a.value().array().tanh().matrix());
  return make_op("tanh", o, {&a}, [o](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = (g.array() * (1.0 - o->array().square())).matrix();
  });
}

Tensor sigmoid(const Tensor& a) {
  auto o = std::make_shared<const Matrix>(
      a.value().unaryExpr([](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      }));
  return make_op("sigmoid", o, {&a}, [o](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = (g.array() * o->array() * (1.0 - o->array())).matrix();
  });
}

Tensor square(const Tensor& a) {
  Sp av = a.shared_value();
  return make_op("square", a.value().array().square().matrix(), {&a}, [av](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = 2.0 * g.cwiseProduct(*av);
  });
}

Tensor sum(const Tensor& a) {
  const Shape s = a.shape();
  return make_op("sum", Matrix::Constant(1, 1, a.value().sum()), {&a}, [s](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = Matrix::Constant(s[0], s[1], g(0, 0));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  const Shape s = a.shape();
  const double n = static_cast<double>(a.size());
  return make_op("mean", Matrix::Constant(1, 1, a.value().sum() / n), {&a},
                 [s, n](const Matrix& g, std::span<Matrix*> gs) {
                   if (gs[0]) *gs[0] = Matrix::Constant(s[0], s[1], g(0, 0) / n);
                 });
}

Tensor row_sum(const Tensor& a) {
  const Index c = a.cols();
  return make_op("row_sum", a.value().rowwise().sum(), {&a}, [c](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.replicate(1, c);
  });
}

Tensor col_sum(const Tensor& a) {
  const Index r = a.rows();
  return make_op("col_sum", a.value().colwise().sum(), {&a}, [r](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.replicate(r, 1);
  });
}

Tensor col_mean(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("col_mean: no rows");
  const Index r = a.rows();
  const double n = static_cast<double>(r);
  return make_op("col_mean", a.value().colwise().mean(), {&a}, [r, n](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.replicate(r, 1) / n;
  });
}

Tensor broadcast(const Tensor& a, Index rows, Index cols) {
  const Shape target{rows, cols};
  if (broadcast_shape(a.shape(), target, "broadcast") != target)
    throw ShapeError("broadcast: " + shape_str(a.shape()) + " does not expand to " + shape_str(target));
  const Shape s = a.shape();
  return make_op("broadcast", expand(a.value(), rows, cols), {&a}, [s](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = reduce_to(g, s);
  });
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ShapeError("concat: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols(), cb = b.cols();
  return make_op("concat", std::move(v), {&a, &b}, [ca, cb](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = g.leftCols(ca);
    if (gs[1]) *gs[1] = g.rightCols(cb);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + std::to_string(a.cols()) + " columns");
  const Shape s = a.shape();
  return make_op("slice_cols", a.value().middleCols(start, count), {&a},
                 [s, start, count](const Matrix& g, std::span<Matrix*> gs) {
                   if (!gs[0]) return;
                   *gs[0] = Matrix::Zero(s[0], s[1]);
                   gs[0]->middleCols(start, count) = g;
                 });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  Sp av = a.shared_value();
  return make_op("clamp", a.value().cwiseMax(lo).cwiseMin(hi), {&a},
                 [av, lo, hi](const Matrix& g, std::span<Matrix*> gs) {
                   if (gs[0]) *gs[0] = (av->array() >= lo && av->array() <= hi).select(g, 0.0);
                 });
}

Tensor softplus(const Tensor& a) {
  Sp av = a.shared_value();
  Matrix v = a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return make_op("softplus", std::move(v), {&a}, [av](const Matrix& g, std::span<Matrix*> gs) {
    if (!gs[0]) return;
    Matrix sig = av->unaryExpr([](double x) {
      if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
      const double e = std::exp(x);
      return e / (1.0 + e);
    });
    *gs[0] = g.cwiseProduct(sig);
  });
}

Tensor logsumexp_rows(const Tensor& a) {
  if (a.cols() == 0) throw ShapeError("logsumexp_rows: no columns");
  const Matrix& x = a.value();
  Matrix v(x.rows(), 1);
  auto weights = std::make_shared<Matrix>(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    if (m == -std::numeric_limits<double>::infinity()) {
      v(i, 0) = m;
      weights->row(i).setZero();
      continue;
    }
    weights->row(i) = (x.row(i).array() - m).exp().matrix();
    // Ascending-order sum: the result does not depend on column order.
    std::vector<double> terms(weights->row(i).data(), weights->row(i).data() + x.cols());
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    v(i, 0) = m + std::log(s);
    weights->row(i) /= s;
  }
  Sp w = weights;
  return make_op("logsumexp_rows", std::move(v), {&a}, [w](const Matrix& g, std::span<Matrix*> gs) {
    if (gs[0]) *gs[0] = (w->array().colwise() * g.col(0).array()).matrix();
  });
}

}  // namespace cifvi
