#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rtd::expr {

enum class Op {
  Const,
  Var,
  Norm,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Neg,
  Abs,
  Exp,
  Log,
  Sqrt,
  Sign,
  Min,
  Max,
  // le(a, b, c, d) = a <= b ? c : d; produced by differentiating min/max.
  Le,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op = Op::Const;
  double value = 0.0;
  int index = 0;
  std::vector<NodePtr> args;
};

// Closed-form scalar field over R^d. Immutable; evaluation is thread safe.
//
// Grammar: numbers, x1..xd, + - * / ^, abs exp log sqrt min max, norm(x).
// Unary minus binds weaker than ^, so -x1^2 is -(x1^2).
class Expression {
 public:
  Expression();

  static Expression parse(std::string_view text, int dimension);
  static Expression constant(double c, int dimension);

  double operator()(std::span<const double> x) const;
  double operator()(std::initializer_list<double> x) const;

  // Classical derivative in x_{k+1}; kinks resolve to one-sided branches.
  Expression derivative(int k) const;

  std::string str() const;
  int dimension() const { return dimension_; }
  bool is_constant() const;
  double constant_value() const;
  // True when the field is literally norm(x).
  bool is_norm() const;

 private:
  Expression(NodePtr root, int dimension);
  void compile();

  struct Instr {
    Op op;
    double value;
    int index;
  };

  NodePtr root_;
  int dimension_ = 1;
  std::vector<Instr> program_;
  int max_stack_ = 0;
};

}  // namespace rtd::expr
