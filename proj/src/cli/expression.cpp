#include "mfrbsde/cli.hpp"

#include <fmt/format.h>

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace mfrbsde::cli {

namespace {

constexpr const char* kVariables = "txyzm";

}  // namespace

class ExpressionParser {
 public:
  ExpressionParser(const std::string& text, const std::string& field, Expression& out)
      : s_(text), field_(field), out_(out) {}

  void parse() {
    out_.root_ = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
  }

 private:
  using Op = Expression::Node::Op;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(field_, fmt::format("{} at position {} in \"{}\"", what, pos_, s_));
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  int add(Expression::Node n) {
    out_.nodes_.push_back(n);
    return static_cast<int>(out_.nodes_.size()) - 1;
  }
  int binary(Op op, int a, int b) { return add({op, 0.0, 0, a, b}); }

  int expr() {
    int lhs = term();
    for (;;) {
      if (eat('+'))
        lhs = binary(Op::add, lhs, term());
      else if (eat('-'))
        lhs = binary(Op::sub, lhs, term());
      else
        return lhs;
    }
  }
  int term() {
    int lhs = unary();
    for (;;) {
      if (eat('*'))
        lhs = binary(Op::mul, lhs, unary());
      else if (eat('/'))
        lhs = binary(Op::div, lhs, unary());
      else
        return lhs;
    }
  }
  int unary() {
    if (eat('-')) return binary(Op::negate, unary(), -1);
    if (eat('+')) return unary();
    return power();
  }
  int power() {
    const int base = primary();
    if (eat('^')) return binary(Op::pow, base, unary());
    return base;
  }
  int primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      return add({Op::constant, v, 0, -1, -1});
    }
    if (eat('(')) {
      const int inner = expr();
      if (!eat(')')) fail("expected ')'");
      return inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t end = pos_;
      while (end < s_.size() && std::isalnum(static_cast<unsigned char>(s_[end]))) ++end;
      const std::string name = s_.substr(pos_, end - pos_);
      pos_ = end;
      if (name.size() == 1) {
        const char* p = std::char_traits<char>::find(kVariables, 5, name[0]);
        if (p != nullptr) {
          const int v = static_cast<int>(p - kVariables);
          out_.used_ |= 1u << v;
          return add({Op::var, 0.0, v, -1, -1});
        }
      }
      Op op;
      int arity = 1;
      if (name == "max") {
        op = Op::max;
        arity = 2;
      } else if (name == "min") {
        op = Op::min;
        arity = 2;
      } else if (name == "pos") {
        op = Op::pos;
      } else if (name == "neg") {
        op = Op::neg;
      } else if (name == "abs") {
        op = Op::abs;
      } else {
        fail(fmt::format("unknown name '{}'", name));
      }
      if (!eat('(')) fail(fmt::format("expected '(' after {}", name));
      const int a = expr();
      int b = -1;
      if (arity == 2) {
        if (!eat(',')) fail(fmt::format("{} takes two arguments", name));
        b = expr();
      }
      if (!eat(')')) fail("expected ')'");
      return binary(op, a, b);
    }
    fail(fmt::format("unexpected character '{}'", c));
  }

  const std::string& s_;
  const std::string& field_;
  Expression& out_;
  std::size_t pos_ = 0;
};

Expression::Expression() = default;

Expression Expression::parse(const std::string& text, const std::string& field) {
  Expression e;
  e.text_ = text;
  ExpressionParser(text, field, e).parse();
  return e;
}

bool Expression::uses(char variable) const {
  const char* p = std::char_traits<char>::find(kVariables, 5, variable);
  return p != nullptr && (used_ >> (p - kVariables) & 1u) != 0;
}

double Expression::operator()(double t, double x, double y, double z, double m) const {
  if (root_ < 0) return 0.0;
  const double vars[5] = {t, x, y, z, m};
  // Nodes are stored children-first, so one forward sweep evaluates the tree.
  double stack_buf[64] = {};
  std::vector<double> heap;
  double* val = stack_buf;
  if (nodes_.size() > 64) {
    heap.resize(nodes_.size());
    val = heap.data();
  }
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const Node& n = nodes_[k];
    const double a = n.a >= 0 ? val[n.a] : 0.0;
    const double b = n.b >= 0 ? val[n.b] : 0.0;
    double r = 0.0;
    switch (n.op) {
      case Node::Op::constant: r = n.value; break;
      case Node::Op::var: r = vars[n.var]; break;
      case Node::Op::add: r = a + b; break;
      case Node::Op::sub: r = a - b; break;
      case Node::Op::mul: r = a * b; break;
      case Node::Op::div: r = a / b; break;
      case Node::Op::pow: r = std::pow(a, b); break;
      case Node::Op::negate: r = -a; break;
      case Node::Op::max: r = std::max(a, b); break;
      case Node::Op::min: r = std::min(a, b); break;
      case Node::Op::pos: r = std::max(a, 0.0); break;
      case Node::Op::neg: r = std::max(-a, 0.0); break;
      case Node::Op::abs: r = std::abs(a); break;
    }
    val[k] = r;
  }
  return val[root_];
}

}  // namespace mfrbsde::cli
