#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <string>

#include <Eigen/Dense>

namespace vfield::nn {

using Matrix = Eigen::MatrixXd;

/// Trainable tensor. Rows are batch entries for activations; weights are
/// stored input-major (in x out).
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode recorder. Operations append nodes in evaluation order;
/// backward() walks them in reverse. Nodes are only differentiated when
/// some ancestor is a parameter or a variable leaf.
class Tape {
 public:
  using Backprop =
      std::function<void(Tape&, const Matrix& out_grad, const Matrix& out_value)>;

  Var constant(Matrix value);
  /// Leaf whose gradient is kept on the tape (read it with grad()).
  Var variable(Matrix value);
  /// Leaf bound to a parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  /// Seeds d(output)/d(output) = 1 and propagates. Output must be 1x1.
  void backward(const Var& output);

  /// Gradient of the last backward() output with respect to v.
  Matrix grad(const Var& v) const;

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::size_t id, const Matrix& g);

  Var record(Matrix value, std::initializer_list<Var> parents, Backprop backprop);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
};

// Elementwise and linear-algebra ops. Shapes must agree exactly unless
// noted; violations throw InvalidInput.
Var matmul(const Var& a, const Var& b);
/// x (B x n) plus a 1 x n row broadcast over rows.
Var add_row(const Var& x, const Var& row);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
/// Elementwise product.
Var operator*(const Var& a, const Var& b);
Var operator*(double c, const Var& a);
Var operator+(const Var& a, double c);
Var operator-(const Var& a);
Var relu(const Var& x);
Var tanh(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
/// log(1 - tanh(x)^2), stable for large |x|.
Var log1m_tanh_sq(const Var& x);
Var minimum(const Var& a, const Var& b);
/// Row sums, B x n -> B x 1.
Var sum_cols(const Var& x);
/// Mean of all entries, -> 1 x 1.
Var mean(const Var& x);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, Eigen::Index start, Eigen::Index count);

}  // namespace vfield::nn
