#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <string>

#include "fbac/errors.hpp"
#include "fbac/linalg.hpp"

namespace fbac::expr {

/// Expression over base coordinates: constants, x (= x1), x2, pi, + - *,
/// cos, sin, unary minus, parentheses. Covers seed graphs like
/// 0.03*cos(pi*x).
class Node;
using Expr = std::shared_ptr<const Node>;

class Node {
public:
  enum class Kind { Const, Var, Add, Sub, Mul, Neg, Cos, Sin };

  Kind kind;
  double value = 0.0; // Const
  int axis = 0;       // Var
  Expr a, b;

  static Expr constant(double v) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Const;
    n->value = v;
    return n;
  }
  static Expr var(int axis) {
    auto n = std::make_shared<Node>();
    n->kind = Kind::Var;
    n->axis = axis;
    return n;
  }
  static Expr make(Kind k, Expr a, Expr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }
};

inline double eval(const Expr& e, const Vec& p) {
  switch (e->kind) {
    case Node::Kind::Const: return e->value;
    case Node::Kind::Var:
      if (e->axis >= p.n) throw BadConfig("expression uses x2 on a 1-d base");
      return p[e->axis];
    case Node::Kind::Add: return eval(e->a, p) + eval(e->b, p);
    case Node::Kind::Sub: return eval(e->a, p) - eval(e->b, p);
    case Node::Kind::Mul: return eval(e->a, p) * eval(e->b, p);
    case Node::Kind::Neg: return -eval(e->a, p);
    case Node::Kind::Cos: return std::cos(eval(e->a, p));
    case Node::Kind::Sin: return std::sin(eval(e->a, p));
  }
  return 0.0;
}

/// Symbolic partial derivative with respect to base axis.
inline Expr derivative(const Expr& e, int axis) {
  using K = Node::Kind;
  switch (e->kind) {
    case K::Const: return Node::constant(0.0);
    case K::Var: return Node::constant(e->axis == axis ? 1.0 : 0.0);
    case K::Add: return Node::make(K::Add, derivative(e->a, axis), derivative(e->b, axis));
    case K::Sub: return Node::make(K::Sub, derivative(e->a, axis), derivative(e->b, axis));
    case K::Mul:
      return Node::make(K::Add, Node::make(K::Mul, derivative(e->a, axis), e->b),
                        Node::make(K::Mul, e->a, derivative(e->b, axis)));
    case K::Neg: return Node::make(K::Neg, derivative(e->a, axis));
    case K::Cos:
      return Node::make(K::Neg,
                        Node::make(K::Mul, Node::make(K::Sin, e->a), derivative(e->a, axis)));
    case K::Sin: return Node::make(K::Mul, Node::make(K::Cos, e->a), derivative(e->a, axis));
  }
  return Node::constant(0.0);
}

namespace detail {

class Parser {
public:
  explicit Parser(const std::string& src) : s_(normalize(src)) {}

  Expr parse() {
    Expr e = expr();
    skip_ws();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

private:
  // Replace the UTF-8 middle dot and minus sign so config files may use the
  // typeset operators.
  static std::string normalize(const std::string& src) {
    std::string out;
    for (size_t i = 0; i < src.size();) {
      unsigned char c0 = static_cast<unsigned char>(src[i]);
      if (c0 == 0xC2 && i + 1 < src.size() && static_cast<unsigned char>(src[i + 1]) == 0xB7) {
        out += '*';
        i += 2;
      } else if (c0 == 0xE2 && i + 2 < src.size() &&
                 static_cast<unsigned char>(src[i + 1]) == 0x88 &&
                 static_cast<unsigned char>(src[i + 2]) == 0x92) {
        out += '-';
        i += 3;
      } else {
        out += src[i];
        ++i;
      }
    }
    return out;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw BadConfig("gamma0 expression: " + msg + " at position " + std::to_string(pos_) +
                    " in '" + s_ + "'");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (eat('+'))
        e = Node::make(Node::Kind::Add, e, term());
      else if (eat('-'))
        e = Node::make(Node::Kind::Sub, e, term());
      else
        return e;
    }
  }

  Expr term() {
    Expr e = unary();
    while (eat('*')) e = Node::make(Node::Kind::Mul, e, unary());
    return e;
  }

  Expr unary() {
    if (eat('-')) return Node::make(Node::Kind::Neg, unary());
    return atom();
  }

  Expr atom() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      if (!eat(')')) fail("missing ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t len = 0;
      double v = std::stod(s_.substr(pos_), &len);
      pos_ += len;
      return Node::constant(v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      std::string word = s_.substr(start, pos_ - start);
      if (word == "pi") return Node::constant(M_PI);
      if (word == "x" || word == "x1") return Node::var(0);
      if (word == "x2") return Node::var(1);
      if (word == "cos" || word == "sin") {
        if (!eat('(')) fail("expected '(' after " + word);
        Expr arg = expr();
        if (!eat(')')) fail("missing ')' after " + word);
        return Node::make(word == "cos" ? Node::Kind::Cos : Node::Kind::Sin, arg);
      }
      fail("unknown identifier '" + word + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  std::string s_;
  size_t pos_ = 0;
};

} // namespace detail

inline Expr parse(const std::string& src) { return detail::Parser(src).parse(); }

} // namespace fbac::expr
