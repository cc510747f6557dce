#include "rtd/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "rtd/errors.hpp"

namespace rtd::expr {

namespace {

[[noreturn]] void parse_error(const std::string& msg) {
  throw Error("model", "ExpressionSyntax", msg);
}

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_var(int i) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->index = i;
  return n;
}

NodePtr make_norm() {
  auto n = std::make_shared<Node>();
  n->op = Op::Norm;
  return n;
}

bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }
bool is_const(const NodePtr& n) { return n->op == Op::Const; }

double apply(Op op, const double* a) {
  switch (op) {
    case Op::Add: return a[0] + a[1];
    case Op::Sub: return a[0] - a[1];
    case Op::Mul: return a[0] * a[1];
    case Op::Div: return a[0] / a[1];
    case Op::Pow: return std::pow(a[0], a[1]);
    case Op::Neg: return -a[0];
    case Op::Abs: return std::fabs(a[0]);
    case Op::Exp: return std::exp(a[0]);
    case Op::Log: return std::log(a[0]);
    case Op::Sqrt: return std::sqrt(a[0]);
    case Op::Sign: return a[0] > 0 ? 1.0 : (a[0] < 0 ? -1.0 : 0.0);
    case Op::Min: return std::fmin(a[0], a[1]);
    case Op::Max: return std::fmax(a[0], a[1]);
    case Op::Le: return a[0] <= a[1] ? a[2] : a[3];
    default: throw std::logic_error("apply: not a function op");
  }
}

int arity(Op op) {
  switch (op) {
    case Op::Const:
    case Op::Var:
    case Op::Norm: return 0;
    case Op::Neg:
    case Op::Abs:
    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
    case Op::Sign: return 1;
    case Op::Le: return 4;
    default: return 2;
  }
}

NodePtr make(Op op, std::vector<NodePtr> args) {
  bool all_const = true;
  for (const auto& a : args) all_const = all_const && is_const(a);
  if (all_const) {
    double vals[4];
    for (std::size_t i = 0; i < args.size(); ++i) vals[i] = args[i]->value;
    return make_const(apply(op, vals));
  }
  switch (op) {
    case Op::Add:
      if (is_const(args[0], 0.0)) return args[1];
      if (is_const(args[1], 0.0)) return args[0];
      break;
    case Op::Sub:
      if (is_const(args[1], 0.0)) return args[0];
      if (is_const(args[0], 0.0)) return make(Op::Neg, {args[1]});
      break;
    case Op::Mul:
      if (is_const(args[0], 0.0) || is_const(args[1], 0.0)) return make_const(0.0);
      if (is_const(args[0], 1.0)) return args[1];
      if (is_const(args[1], 1.0)) return args[0];
      break;
    case Op::Div:
      if (is_const(args[0], 0.0)) return make_const(0.0);
      if (is_const(args[1], 1.0)) return args[0];
      break;
    case Op::Pow:
      if (is_const(args[1], 1.0)) return args[0];
      if (is_const(args[1], 0.0)) return make_const(1.0);
      break;
    case Op::Neg:
      if (args[0]->op == Op::Neg) return args[0]->args[0];
      break;
    case Op::Le:
      if (args[2] == args[3]) return args[2];
      if (is_const(args[2]) && is_const(args[3]) && args[2]->value == args[3]->value) return args[2];
      break;
    default: break;
  }
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

NodePtr add(NodePtr a, NodePtr b) { return make(Op::Add, {std::move(a), std::move(b)}); }
NodePtr sub(NodePtr a, NodePtr b) { return make(Op::Sub, {std::move(a), std::move(b)}); }
NodePtr mul(NodePtr a, NodePtr b) { return make(Op::Mul, {std::move(a), std::move(b)}); }
NodePtr div(NodePtr a, NodePtr b) { return make(Op::Div, {std::move(a), std::move(b)}); }

NodePtr diff(const NodePtr& n, int k) {
  const auto& a = n->args;
  switch (n->op) {
    case Op::Const: return make_const(0.0);
    case Op::Var: return make_const(n->index == k ? 1.0 : 0.0);
    case Op::Norm:
      return div(make_var(k), make(Op::Max, {make_norm(), make_const(1e-300)}));
    case Op::Add: return add(diff(a[0], k), diff(a[1], k));
    case Op::Sub: return sub(diff(a[0], k), diff(a[1], k));
    case Op::Mul: return add(mul(diff(a[0], k), a[1]), mul(a[0], diff(a[1], k)));
    case Op::Div: {
      auto num = sub(mul(diff(a[0], k), a[1]), mul(a[0], diff(a[1], k)));
      return div(num, make(Op::Pow, {a[1], make_const(2.0)}));
    }
    case Op::Pow: {
      auto du = diff(a[0], k);
      if (is_const(a[1])) {
        double c = a[1]->value;
        return mul(mul(make_const(c), make(Op::Pow, {a[0], make_const(c - 1.0)})), du);
      }
      auto dv = diff(a[1], k);
      auto term = add(mul(dv, make(Op::Log, {a[0]})), div(mul(a[1], du), a[0]));
      return mul(n, term);
    }
    case Op::Neg: return make(Op::Neg, {diff(a[0], k)});
    case Op::Abs: return mul(make(Op::Sign, {a[0]}), diff(a[0], k));
    case Op::Exp: return mul(n, diff(a[0], k));
    case Op::Log: return div(diff(a[0], k), a[0]);
    case Op::Sqrt: return div(diff(a[0], k), mul(make_const(2.0), n));
    case Op::Sign: return make_const(0.0);
    case Op::Min: return make(Op::Le, {a[0], a[1], diff(a[0], k), diff(a[1], k)});
    case Op::Max: return make(Op::Le, {a[0], a[1], diff(a[1], k), diff(a[0], k)});
    case Op::Le: return make(Op::Le, {a[0], a[1], diff(a[2], k), diff(a[3], k)});
  }
  throw std::logic_error("diff: unhandled op");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* fname(Op op) {
  switch (op) {
    case Op::Abs: return "abs";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Sign: return "sign";
    case Op::Min: return "min";
    case Op::Max: return "max";
    case Op::Le: return "le";
    default: return nullptr;
  }
}

void print(const NodePtr& n, std::string& out) {
  switch (n->op) {
    case Op::Const:
      if (n->value < 0 || std::signbit(n->value)) {
        out += "(" + fmt_double(n->value) + ")";
      } else {
        out += fmt_double(n->value);
      }
      return;
    case Op::Var: out += "x" + std::to_string(n->index + 1); return;
    case Op::Norm: out += "norm(x)"; return;
    case Op::Neg:
      out += "(-";
      print(n->args[0], out);
      out += ")";
      return;
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div:
    case Op::Pow: {
      static const char* sym[] = {"+", "-", "*", "/", "^"};
      int s = static_cast<int>(n->op) - static_cast<int>(Op::Add);
      out += "(";
      print(n->args[0], out);
      out += " ";
      out += sym[s];
      out += " ";
      print(n->args[1], out);
      out += ")";
      return;
    }
    default: {
      out += fname(n->op);
      out += "(";
      for (std::size_t i = 0; i < n->args.size(); ++i) {
        if (i) out += ", ";
        print(n->args[i], out);
      }
      out += ")";
    }
  }
}

class Parser {
 public:
  Parser(std::string_view s, int d) : s_(s), d_(d) {}

  NodePtr parse() {
    auto n = expr();
    skip();
    if (pos_ != s_.size()) parse_error("unexpected '" + std::string(1, s_[pos_]) + "' at " + std::to_string(pos_));
    return n;
  }

 private:
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) parse_error(std::string("expected '") + c + "' at " + std::to_string(pos_));
  }

  NodePtr expr() {
    auto n = term();
    for (;;) {
      if (accept('+')) n = make(Op::Add, {n, term()});
      else if (accept('-')) n = make(Op::Sub, {n, term()});
      else return n;
    }
  }
  NodePtr term() {
    auto n = unary();
    for (;;) {
      if (accept('*')) n = make(Op::Mul, {n, unary()});
      else if (accept('/')) n = make(Op::Div, {n, unary()});
      else return n;
    }
  }
  NodePtr unary() {
    if (accept('-')) return make(Op::Neg, {unary()});
    if (accept('+')) return unary();
    return power();
  }
  NodePtr power() {
    auto base = primary();
    if (accept('^')) return make(Op::Pow, {base, unary()});
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) parse_error("unexpected end of expression");
    char c = s_[pos_];
    if (accept('(')) {
      auto n = expr();
      expect(')');
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::string tok(s_.substr(pos_));
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str()) parse_error("bad number at " + std::to_string(pos_));
      pos_ += static_cast<std::size_t>(end - tok.c_str());
      return make_const(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      std::string id(s_.substr(start, pos_ - start));
      if (id.size() > 1 && id[0] == 'x' && id.find_first_not_of("0123456789", 1) == std::string::npos) {
        int i = std::stoi(id.substr(1));
        if (i < 1 || i > d_) parse_error("variable " + id + " outside dimension " + std::to_string(d_));
        return make_var(i - 1);
      }
      if (id == "pi") return make_const(M_PI);
      if (id == "norm") {
        expect('(');
        skip();
        if (pos_ >= s_.size() || s_[pos_] != 'x') parse_error("norm takes the literal argument x");
        ++pos_;
        expect(')');
        return make_norm();
      }
      struct F {
        const char* name;
        Op op;
      };
      static const F funcs[] = {{"abs", Op::Abs},   {"exp", Op::Exp},   {"log", Op::Log},
                                {"sqrt", Op::Sqrt}, {"sign", Op::Sign}, {"min", Op::Min},
                                {"max", Op::Max},   {"le", Op::Le}};
      for (const auto& f : funcs) {
        if (id == f.name) {
          expect('(');
          std::vector<NodePtr> args{expr()};
          while (accept(',')) args.push_back(expr());
          expect(')');
          if (static_cast<int>(args.size()) != arity(f.op)) parse_error(id + ": wrong number of arguments");
          return make(f.op, std::move(args));
        }
      }
      parse_error("unknown identifier '" + id + "'");
    }
    parse_error("unexpected '" + std::string(1, c) + "' at " + std::to_string(pos_));
  }

  std::string_view s_;
  int d_;
  std::size_t pos_ = 0;
};

void emit(const NodePtr& n, std::vector<Node>& out_ops, int depth, int& max_depth) {
  // Postfix order; depth tracks the stack height reached.
  for (std::size_t i = 0; i < n->args.size(); ++i) emit(n->args[i], out_ops, depth + static_cast<int>(i), max_depth);
  Node flat;
  flat.op = n->op;
  flat.value = n->value;
  flat.index = n->index;
  out_ops.push_back(flat);
  max_depth = std::max(max_depth, depth + 1);
}

}  // namespace

Expression::Expression() : Expression(make_const(0.0), 1) {}

Expression::Expression(NodePtr root, int dimension) : root_(std::move(root)), dimension_(dimension) { compile(); }

Expression Expression::parse(std::string_view text, int dimension) {
  if (dimension < 1) throw Error("model", "InvalidDimension", "dimension must be positive");
  return Expression(Parser(text, dimension).parse(), dimension);
}

Expression Expression::constant(double c, int dimension) { return Expression(make_const(c), dimension); }

void Expression::compile() {
  std::vector<Node> flat;
  int depth = 0;
  emit(root_, flat, 0, depth);
  program_.clear();
  program_.reserve(flat.size());
  for (const auto& f : flat) program_.push_back({f.op, f.value, f.index});
  max_stack_ = depth;
}

double Expression::operator()(std::span<const double> x) const {
  constexpr int kInline = 64;
  double inline_stack[kInline];
  std::vector<double> heap;
  inline_stack[0] = 0.0;
  double* st = inline_stack;
  if (max_stack_ > kInline) {
    heap.resize(static_cast<std::size_t>(max_stack_));
    st = heap.data();
  }
  int sp = 0;
  for (const auto& in : program_) {
    switch (in.op) {
      case Op::Const: st[sp++] = in.value; break;
      case Op::Var: st[sp++] = x[static_cast<std::size_t>(in.index)]; break;
      case Op::Norm: {
        double s = 0;
        for (int i = 0; i < dimension_; ++i) s += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
        st[sp++] = std::sqrt(s);
        break;
      }
      default: {
        int k = arity(in.op);
        sp -= k;
        st[sp] = apply(in.op, st + sp);
        ++sp;
      }
    }
  }
  return st[0];
}

double Expression::operator()(std::initializer_list<double> x) const {
  return (*this)(std::span<const double>(x.begin(), x.size()));
}

Expression Expression::derivative(int k) const {
  if (k < 0 || k >= dimension_) throw Error("model", "InvalidDimension", "derivative index out of range");
  return Expression(diff(root_, k), dimension_);
}

std::string Expression::str() const {
  std::string out;
  print(root_, out);
  return out;
}

bool Expression::is_constant() const { return root_->op == Op::Const; }

double Expression::constant_value() const {
  if (!is_constant()) throw Error("model", "NotConstant", str());
  return root_->value;
}

bool Expression::is_norm() const { return root_->op == Op::Norm; }

}  // namespace rtd::expr
