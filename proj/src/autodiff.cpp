#include "vfield/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "vfield/errors.hpp"

namespace vfield::nn {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, Backprop backprop) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw InvalidInput("operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backprop = std::move(backprop);
  return push(std::move(n));
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& output) {
  if (output.rows() != 1 || output.cols() != 1) {
    throw InvalidInput("backward() needs a 1x1 output");
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  nodes_[output.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backprop) n.backprop(*this, n.grad, n.value);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) {
        n.param->grad = n.grad;
      } else {
        n.param->grad += n.grad;
      }
    }
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add_row(const Var& x, const Var& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) throw InvalidInput("add_row: bad row shape");
  const std::size_t ix = x.id(), ir = row.id();
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape().record(std::move(out), {x, row}, [ix, ir](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var operator+(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), {a, b},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           t.accumulate(ia, g);
                           t.accumulate(ib, g);
                         });
}

Var operator-(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), {a, b},
                         [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
                           t.accumulate(ia, g);
                           if (t.requires_grad(ib)) t.accumulate(ib, -g);
                         });
}

Var operator*(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
    if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var operator*(double c, const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(c * a.value(), {a}, [ia, c](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ia, c * g);
  });
}

Var operator+(const Var& a, double c) {
  const std::size_t ia = a.id();
  Matrix out = a.value().array() + c;
  return a.tape().record(std::move(out), {a},
                         [ia](Tape& t, const Matrix& g, const Matrix&) { t.accumulate(ia, g); });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var relu(const Var& x) {
  const std::size_t ix = x.id();
  Matrix out = x.value().cwiseMax(0.0);
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(ix, (y.array() > 0.0).select(g, 0.0));
  });
}

Var tanh(const Var& x) {
  const std::size_t ix = x.id();
  Matrix out = x.value().array().tanh();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(ix, (g.array() * (1.0 - y.array().square())).matrix());
  });
}

Var exp(const Var& x) {
  const std::size_t ix = x.id();
  Matrix out = x.value().array().exp();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix& y) {
    t.accumulate(ix, g.cwiseProduct(y));
  });
}

Var log(const Var& x) {
  const std::size_t ix = x.id();
  Matrix out = x.value().array().log();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, g.cwiseQuotient(t.value(ix)));
  });
}

Var square(const Var& x) {
  const std::size_t ix = x.id();
  Matrix out = x.value().array().square();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, 2.0 * g.cwiseProduct(t.value(ix)));
  });
}

Var log1m_tanh_sq(const Var& x) {
  const std::size_t ix = x.id();
  // log(1 - tanh^2 u) = 2 (log 2 - u - softplus(-2u))
  Matrix out = x.value().unaryExpr([](double u) {
    const double z = -2.0 * u;
    const double softplus = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return 2.0 * (std::numbers::ln2 - u - softplus);
  });
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, (-2.0 * g.array() * t.value(ix).array().tanh()).matrix());
  });
}

Var minimum(const Var& a, const Var& b) {
  same_shape(a, b, "minimum");
  const std::size_t ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseMin(b.value());
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g, const Matrix&) {
    const auto take_a = (t.value(ia).array() <= t.value(ib).array());
    if (t.requires_grad(ia)) t.accumulate(ia, take_a.select(g, 0.0));
    if (t.requires_grad(ib)) t.accumulate(ib, take_a.select(0.0, g));
  });
}

Var sum_cols(const Var& x) {
  const std::size_t ix = x.id();
  const Eigen::Index n = x.cols();
  Matrix out = x.value().rowwise().sum();
  return x.tape().record(std::move(out), {x}, [ix, n](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, g.replicate(1, n));
  });
}

Var mean(const Var& x) {
  const std::size_t ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  Matrix out = Matrix::Constant(1, 1, x.value().mean());
  return x.tape().record(std::move(out), {x}, [ix, r, c](Tape& t, const Matrix& g, const Matrix&) {
    t.accumulate(ix, Matrix::Constant(r, c, g(0, 0) / static_cast<double>(r * c)));
  });
}

Var concat_cols(const Var& a, const Var& b) {
  if (a.rows() != b.rows()) throw InvalidInput("concat_cols: row counts differ");
  const std::size_t ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Matrix out(a.rows(), ca + cb);
  out << a.value(), b.value();
  return a.tape().record(std::move(out), {a, b},
                         [ia, ib, ca, cb](Tape& t, const Matrix& g, const Matrix&) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g.leftCols(ca));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.rightCols(cb));
                         });
}

Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw InvalidInput("slice_cols: range out of bounds");
  }
  const std::size_t ix = x.id();
  const Eigen::Index r = x.rows(), c = x.cols();
  Matrix out = x.value().middleCols(start, count);
  return x.tape().record(std::move(out), {x},
                         [ix, r, c, start, count](Tape& t, const Matrix& g, const Matrix&) {
                           Matrix full = Matrix::Zero(r, c);
                           full.middleCols(start, count) = g;
                           t.accumulate(ix, full);
                         });
}

}  // namespace vfield::nn
