#pragma once

#include <cctype>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "core.hpp"

namespace eigencrit {

// Tiny arithmetic expressions over the vertex coordinates, used for densities
// and probe directions. Grammar (EBNF, see docs/formats.md):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = factor { ("*" | "/") factor } ;
//   factor  = ("+" | "-") factor | power ;
//   power   = primary [ "^" factor ] ;
//   primary = number | variable | name "(" expr ")" | "(" expr ")" ;
//   variable = "x" | "y" | "z" | "r" ;
//   name     = "exp" | "sin" | "cos" | "sqrt" | "abs" ;
//
// r is the distance from the origin. "^" binds tighter than unary minus and
// associates to the right.
class Expression {
 public:
  static Expression parse(const std::string& source) {
    Parser p{source, 0};
    Expression e;
    e.source_ = source;
    e.fn_ = p.expr();
    p.skip_ws();
    require(p.pos == source.size(), errc::argument,
            "expression: unexpected trailing input at position " + std::to_string(p.pos) +
                " in '" + source + "'");
    return e;
  }

  double eval(double x, double y, double z) const {
    const double r = std::sqrt(x * x + y * y + z * z);
    const double v = fn_(x, y, z, r);
    require(std::isfinite(v), errc::validation,
            "expression: non-finite value from '" + source_ + "'");
    return v;
  }

  const std::string& source() const { return source_; }

 private:
  using Fn = std::function<double(double, double, double, double)>;

  struct Parser {
    const std::string& s;
    std::size_t pos;

    void skip_ws() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }

    bool eat(char c) {
      skip_ws();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }

    [[noreturn]] void err(const std::string& what) {
      fail(errc::argument,
           "expression: " + what + " at position " + std::to_string(pos) + " in '" + s + "'");
    }

    Fn expr() {
      Fn acc = term();
      for (;;) {
        if (eat('+')) {
          Fn rhs = term();
          acc = [acc, rhs](double x, double y, double z, double r) {
            return acc(x, y, z, r) + rhs(x, y, z, r);
          };
        } else if (eat('-')) {
          Fn rhs = term();
          acc = [acc, rhs](double x, double y, double z, double r) {
            return acc(x, y, z, r) - rhs(x, y, z, r);
          };
        } else {
          return acc;
        }
      }
    }

    Fn term() {
      Fn acc = factor();
      for (;;) {
        if (eat('*')) {
          Fn rhs = factor();
          acc = [acc, rhs](double x, double y, double z, double r) {
            return acc(x, y, z, r) * rhs(x, y, z, r);
          };
        } else if (eat('/')) {
          Fn rhs = factor();
          acc = [acc, rhs](double x, double y, double z, double r) {
            return acc(x, y, z, r) / rhs(x, y, z, r);
          };
        } else {
          return acc;
        }
      }
    }

    Fn factor() {
      if (eat('-')) {
        Fn inner = factor();
        return [inner](double x, double y, double z, double r) { return -inner(x, y, z, r); };
      }
      if (eat('+')) return factor();
      return power();
    }

    Fn power() {
      Fn base = primary();
      if (eat('^')) {
        Fn exponent = factor();
        return [base, exponent](double x, double y, double z, double r) {
          return std::pow(base(x, y, z, r), exponent(x, y, z, r));
        };
      }
      return base;
    }

    Fn primary() {
      skip_ws();
      if (pos >= s.size()) err("unexpected end of input");
      const char c = s[pos];
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
      if (std::isalpha(static_cast<unsigned char>(c))) return name();
      if (c == '(') {
        ++pos;
        Fn inner = expr();
        if (!eat(')')) err("expected ')'");
        return inner;
      }
      err(std::string("unexpected character '") + c + "'");
    }

    Fn number() {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(s.substr(pos), &used);
      } catch (const std::exception&) {
        err("malformed number");
      }
      pos += used;
      return [v](double, double, double, double) { return v; };
    }

    Fn name() {
      std::size_t start = pos;
      while (pos < s.size() && std::isalpha(static_cast<unsigned char>(s[pos]))) ++pos;
      const std::string id = s.substr(start, pos - start);
      if (id == "x") return [](double x, double, double, double) { return x; };
      if (id == "y") return [](double, double y, double, double) { return y; };
      if (id == "z") return [](double, double, double z, double) { return z; };
      if (id == "r") return [](double, double, double, double r) { return r; };

      double (*f)(double) = nullptr;
      if (id == "exp") f = std::exp;
      else if (id == "sin") f = std::sin;
      else if (id == "cos") f = std::cos;
      else if (id == "sqrt") f = std::sqrt;
      else if (id == "abs") f = std::fabs;
      else err("unknown identifier '" + id + "'");

      if (!eat('(')) err("expected '(' after '" + id + "'");
      Fn arg = expr();
      if (!eat(')')) err("expected ')'");
      return [f, arg](double x, double y, double z, double r) { return f(arg(x, y, z, r)); };
    }
  };

  std::string source_;
  Fn fn_;
};

}  // namespace eigencrit
