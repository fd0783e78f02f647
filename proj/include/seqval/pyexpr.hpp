#pragma once

// Validity of arithmetic expressions as decided by Python 3.10 `eval`: the text
// must parse as an expression and evaluate without raising. Integer arithmetic
// is exact; float and complex results follow CPython's double-precision rules,
// including the cases where CPython raises (overflow on conversion, division by
// zero, negative shift counts, ordering of complex numbers, calling an int).

#include <cerrno>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "seqval/verdict.hpp"

namespace seqval {

/// Limits on evaluation; exceeding any of them yields an invalid verdict with
/// reason "budget".
struct EvalBudget {
  unsigned max_decimal_digits = 4096;  // |every intermediate integer| <= 10^max_decimal_digits
  std::size_t max_steps = 100000;
  std::size_t max_depth = 2000;
};

namespace pyexpr {

using BigInt = boost::multiprecision::cpp_int;

struct EmptyTuple {
  bool operator==(const EmptyTuple&) const = default;
};

using Value = std::variant<BigInt, double, std::complex<double>, EmptyTuple>;

struct Raised {
  std::string what;
};

struct OverBudget {};

enum class Op : std::uint8_t { Add, Sub, Mul, Pow, TrueDiv, FloorDiv, Mod, LShift, RShift, Lt, Gt, Le, Ge, Eq, Ne };

inline bool is_comparison(Op op) { return op >= Op::Lt; }

enum class TokKind : std::uint8_t { Number, Op, LParen, RParen, Star, DoubleStar, End };

struct Token {
  TokKind kind;
  Op op = Op::Add;
  std::size_t pos = 0;
  std::size_t len = 0;
};

struct SyntaxFailure {
  std::size_t pos;
  const char* what;
};

constexpr int kMaxParenLevel = 200;

/// Splits `text` into Python tokens. Returns false and fills `err` on the first
/// token Python would reject in an expression.
inline bool lex(std::string_view s, std::vector<Token>& out, SyntaxFailure& err) {
  out.clear();
  int level = 0;
  std::size_t i = 0;
  const std::size_t n = s.size();
  auto at = [&](std::size_t k) { return k < n ? s[k] : '\0'; };
  auto isdig = [](char c) { return c >= '0' && c <= '9'; };
  auto fail = [&](std::size_t p, const char* w) {
    err = {p, w};
    return false;
  };
  while (i < n) {
    char c = s[i];
    if (isdig(c)) {
      std::size_t j = i;
      if (c == '0') {
        while (at(j) == '0') ++j;
        if (isdig(at(j))) return fail(i, "leading zeros in decimal integer literal");
      } else {
        while (isdig(at(j))) ++j;
      }
      out.push_back({TokKind::Number, Op::Add, i, j - i});
      i = j;
      continue;
    }
    if (c == '(') {
      if (level >= kMaxParenLevel) return fail(i, "too many nested parentheses");
      ++level;
      out.push_back({TokKind::LParen, Op::Add, i, 1});
      ++i;
      continue;
    }
    if (c == ')') {
      if (level == 0) return fail(i, "unmatched ')'");
      --level;
      out.push_back({TokKind::RParen, Op::Add, i, 1});
      ++i;
      continue;
    }
    std::string_view three = s.substr(i, 3);
    if (three == "**=" || three == "//=" || three == ">>=" || three == "<<=")
      return fail(i, "augmented assignment");
    std::string_view two = s.substr(i, 2);
    struct Two {
      std::string_view text;
      TokKind kind;
      Op op;
    };
    static constexpr Two kTwo[] = {
        {"!=", TokKind::Op, Op::Ne},          {"**", TokKind::DoubleStar, Op::Pow}, {"//", TokKind::Op, Op::FloorDiv},
        {"<<", TokKind::Op, Op::LShift},      {">>", TokKind::Op, Op::RShift},      {"<=", TokKind::Op, Op::Le},
        {">=", TokKind::Op, Op::Ge},          {"==", TokKind::Op, Op::Eq},
    };
    if (two.size() == 2) {
      if (two == "%=" || two == "*=" || two == "+=" || two == "-=" || two == "/=") return fail(i, "augmented assignment");
      if (two == "->" || two == "<>") return fail(i, "invalid operator");
      bool matched = false;
      for (const Two& t : kTwo) {
        if (two == t.text) {
          out.push_back({t.kind, t.op, i, 2});
          matched = true;
          break;
        }
      }
      if (matched) {
        i += 2;
        continue;
      }
    }
    switch (c) {
      case '+': out.push_back({TokKind::Op, Op::Add, i, 1}); break;
      case '-': out.push_back({TokKind::Op, Op::Sub, i, 1}); break;
      case '*': out.push_back({TokKind::Star, Op::Mul, i, 1}); break;
      case '/': out.push_back({TokKind::Op, Op::TrueDiv, i, 1}); break;
      case '%': out.push_back({TokKind::Op, Op::Mod, i, 1}); break;
      case '<': out.push_back({TokKind::Op, Op::Lt, i, 1}); break;
      case '>': out.push_back({TokKind::Op, Op::Gt, i, 1}); break;
      case '=': return fail(i, "assignment in expression");
      default: return fail(i, "invalid character");
    }
    ++i;
  }
  if (level != 0) return fail(n, "unclosed '('");
  out.push_back({TokKind::End, Op::Add, n, 0});
  return true;
}

struct Node {
  enum Kind : std::uint8_t { Number, Tuple, Neg, Pos, Binary, Compare, Call };

  explicit Node(Kind k, Op o = Op::Add, int l = -1, int r = -1) : kind(k), op(o), lhs(l), rhs(r) {}

  Kind kind;
  Op op;
  int lhs;
  int rhs;
  std::size_t pos = 0;
  std::size_t len = 0;
  std::vector<std::pair<Op, int>> chain;
};

/// Recursive-descent parser for Python's expression grammar restricted to the
/// tokens `lex` produces.
class Parser {
 public:
  Parser(const std::vector<Token>& toks, std::vector<Node>& nodes, std::size_t max_depth)
      : toks_(toks), nodes_(nodes), max_depth_(max_depth) {}

  // Root node index, or -1 with `error()` set.
  int parse() {
    int root = expression();
    if (root < 0) return -1;
    if (peek().kind != TokKind::End) return fail("unexpected token");
    return root;
  }

  const SyntaxFailure& error() const { return err_; }
  bool too_deep() const { return too_deep_; }

 private:
  const std::vector<Token>& toks_;
  std::vector<Node>& nodes_;
  std::size_t max_depth_;
  std::size_t i_ = 0;
  std::size_t depth_ = 0;
  bool too_deep_ = false;
  SyntaxFailure err_{0, ""};

  const Token& peek() const { return toks_[i_]; }
  bool peek_op(Op op) const { return peek().kind == TokKind::Op && peek().op == op; }

  int fail(const char* what) {
    err_ = {peek().pos, what};
    return -1;
  }

  int add(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  struct DepthGuard {
    Parser& p;
    explicit DepthGuard(Parser& p) : p(p) { ++p.depth_; }
    ~DepthGuard() { --p.depth_; }
  };

  int expression() {
    DepthGuard g(*this);
    if (depth_ > max_depth_) {
      too_deep_ = true;
      return fail("nesting too deep");
    }
    return comparison();
  }

  int comparison() {
    int first = shift();
    if (first < 0) return -1;
    if (!(peek().kind == TokKind::Op && is_comparison(peek().op))) return first;
    Node n{Node::Compare};
    n.lhs = first;
    while (peek().kind == TokKind::Op && is_comparison(peek().op)) {
      Op op = peek().op;
      ++i_;
      int rhs = shift();
      if (rhs < 0) return -1;
      n.chain.emplace_back(op, rhs);
    }
    return add(std::move(n));
  }

  int binary_loop(int (Parser::*next)(), std::initializer_list<Op> ops) {
    int lhs = (this->*next)();
    if (lhs < 0) return -1;
    for (;;) {
      const Token& t = peek();
      bool match = false;
      if (t.kind == TokKind::Op || t.kind == TokKind::Star)
        for (Op op : ops) match = match || t.op == op;
      if (!match) return lhs;
      Op op = t.op;
      ++i_;
      int rhs = (this->*next)();
      if (rhs < 0) return -1;
      Node n{Node::Binary, op, lhs, rhs};
      n.pos = t.pos;
      lhs = add(std::move(n));
    }
  }

  int shift() { return binary_loop(&Parser::sum, {Op::LShift, Op::RShift}); }
  int sum() { return binary_loop(&Parser::term, {Op::Add, Op::Sub}); }
  int term() { return binary_loop(&Parser::factor, {Op::Mul, Op::TrueDiv, Op::FloorDiv, Op::Mod}); }

  int factor() {
    if (peek_op(Op::Add) || peek_op(Op::Sub)) {
      bool neg = peek().op == Op::Sub;
      std::size_t pos = peek().pos;
      ++i_;
      DepthGuard g(*this);
      if (depth_ > max_depth_) {
        too_deep_ = true;
        return fail("nesting too deep");
      }
      int operand = factor();
      if (operand < 0) return -1;
      Node n{neg ? Node::Neg : Node::Pos};
      n.lhs = operand;
      n.pos = pos;
      return add(std::move(n));
    }
    return power();
  }

  int power() {
    int base = primary();
    if (base < 0) return -1;
    if (peek().kind != TokKind::DoubleStar) return base;
    std::size_t pos = peek().pos;
    ++i_;
    DepthGuard g(*this);
    if (depth_ > max_depth_) {
      too_deep_ = true;
      return fail("nesting too deep");
    }
    int exponent = factor();
    if (exponent < 0) return -1;
    Node n{Node::Binary, Op::Pow, base, exponent};
    n.pos = pos;
    return add(std::move(n));
  }

  int primary() {
    int a = atom();
    if (a < 0) return -1;
    while (peek().kind == TokKind::LParen) {
      std::size_t pos = peek().pos;
      ++i_;
      Node call{Node::Call};
      call.lhs = a;
      call.pos = pos;
      if (peek().kind != TokKind::RParen) {
        if (peek().kind == TokKind::Star || peek().kind == TokKind::DoubleStar) ++i_;
        int arg = expression();
        if (arg < 0) return -1;
        call.rhs = arg;
        if (peek().kind != TokKind::RParen) return fail("expected ')'");
      }
      ++i_;
      a = add(std::move(call));
    }
    return a;
  }

  int atom() {
    const Token& t = peek();
    if (t.kind == TokKind::Number) {
      ++i_;
      Node n{Node::Number};
      n.pos = t.pos;
      n.len = t.len;
      return add(std::move(n));
    }
    if (t.kind == TokKind::LParen) {
      ++i_;
      if (peek().kind == TokKind::RParen) {
        ++i_;
        return add(Node{Node::Tuple});
      }
      int inner = expression();
      if (inner < 0) return -1;
      if (peek().kind != TokKind::RParen) return fail("expected ')'");
      ++i_;
      return inner;
    }
    return fail("invalid syntax");
  }
};

// ---- numeric helpers -------------------------------------------------------

inline std::size_t bit_length(const BigInt& a) { return a == 0 ? 0 : boost::multiprecision::msb(abs(a)) + 1; }

[[noreturn]] inline void raise(const char* what) { throw Raised{what}; }

/// Correctly rounded int -> float; OverflowError past the double range.
inline double int_to_double(const BigInt& v) {
  if (v == 0) return 0.0;
  BigInt m = abs(v);
  std::size_t nb = bit_length(m);
  double r;
  if (nb <= 53) {
    r = static_cast<double>(m.convert_to<std::uint64_t>());
  } else {
    std::size_t drop = nb - 53;
    BigInt q = m >> drop;
    BigInt low = m - (q << drop);
    BigInt half = BigInt(1) << (drop - 1);
    if (low > half || (low == half && (q & 1) != 0)) q += 1;
    if (drop > 1100) raise("OverflowError: int too large to convert to float");
    r = std::ldexp(static_cast<double>(q.convert_to<std::uint64_t>()), static_cast<int>(drop));
  }
  if (std::isinf(r)) raise("OverflowError: int too large to convert to float");
  return v < 0 ? -r : r;
}

/// Exact value of a finite double as an integer; `f` must be integral.
inline BigInt integral_double_to_int(double f) {
  int e = 0;
  double m = std::frexp(std::fabs(f), &e);
  auto mant = static_cast<std::uint64_t>(std::ldexp(m, 53));
  BigInt r = mant;
  int shift = e - 53;
  if (shift >= 0)
    r <<= shift;
  else
    r >>= -shift;
  return f < 0 ? BigInt(-r) : r;
}

/// Correctly rounded a / b for integers, as CPython's int true division.
inline double int_true_divide(const BigInt& a, const BigInt& b) {
  if (b == 0) raise("ZeroDivisionError: division by zero");
  bool negative = (a < 0) != (b < 0);
  if (a == 0) return negative ? -0.0 : 0.0;
  BigInt x = abs(a), y = abs(b);
  long diff = static_cast<long>(bit_length(x)) - static_cast<long>(bit_length(y));
  long shift = 55 - diff;
  BigInt num = shift >= 0 ? BigInt(x << shift) : x;
  BigInt den = shift >= 0 ? y : BigInt(y << -shift);
  BigInt q = num / den;
  bool sticky = q * den != num;
  long qbits = static_cast<long>(bit_length(q));
  long exp = qbits - 1 - shift;  // value in [2^exp, 2^(exp+1))
  if (exp >= 1024) raise("OverflowError: integer division result too large for a float");
  long keep = exp >= -1022 ? 53 : 53 - (-1022 - exp);
  long drop = qbits - keep;
  BigInt kept = drop >= qbits ? BigInt(0) : BigInt(q >> drop);
  BigInt low = q - (kept << drop);
  BigInt half = BigInt(1) << (drop - 1);
  if (low > half || (low == half && (sticky || (kept & 1) != 0))) kept += 1;
  double r = kept == 0 ? 0.0 : std::ldexp(static_cast<double>(kept.convert_to<std::uint64_t>()),
                                          static_cast<int>(drop - shift));
  if (std::isinf(r)) raise("OverflowError: integer division result too large for a float");
  return negative ? -r : r;
}

/// Three-way exact comparison of an integer with a double; NaN yields nullopt.
inline std::optional<int> compare_int_double(const BigInt& i, double f) {
  if (std::isnan(f)) return std::nullopt;
  if (std::isinf(f)) return f > 0 ? -1 : 1;
  double fl = std::floor(f);
  BigInt fi = integral_double_to_int(fl);
  if (i < fi) return -1;
  if (i > fi) return 1;
  return f - fl > 0 ? -1 : 0;
}

inline bool is_odd_integer(double x) { return std::fmod(std::fabs(x), 2.0) == 1.0; }

// CPython complex helpers, mirroring Objects/complexobject.c.
struct CResult {
  std::complex<double> v;
  int err = 0;  // 0, EDOM or ERANGE
};

inline CResult c_quot(std::complex<double> a, std::complex<double> b) {
  double ar = a.real(), ai = a.imag(), br = b.real(), bi = b.imag();
  double abs_br = std::fabs(br), abs_bi = std::fabs(bi);
  if (abs_br >= abs_bi) {
    if (abs_br == 0.0) return {{0.0, 0.0}, EDOM};
    double ratio = bi / br;
    double denom = br + bi * ratio;
    return {{(ar + ai * ratio) / denom, (ai - ar * ratio) / denom}};
  }
  if (abs_bi >= abs_br) {
    double ratio = br / bi;
    double denom = br * ratio + bi;
    return {{(ar * ratio + ai) / denom, (ai * ratio - ar) / denom}};
  }
  double nan = std::numeric_limits<double>::quiet_NaN();
  return {{nan, nan}};
}

inline std::complex<double> c_prod(std::complex<double> a, std::complex<double> b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline CResult c_pow(std::complex<double> a, std::complex<double> b) {
  if (b.real() == 0.0 && b.imag() == 0.0) return {{1.0, 0.0}};
  if (a.real() == 0.0 && a.imag() == 0.0) {
    int err = (b.imag() != 0.0 || b.real() < 0.0) ? EDOM : 0;
    return {{0.0, 0.0}, err};
  }
  int err = 0;
  double vabs = std::hypot(a.real(), a.imag());
  double len = std::pow(vabs, b.real());
  if (std::isinf(len) && !std::isinf(vabs)) err = ERANGE;
  double at = std::atan2(a.imag(), a.real());
  double phase = at * b.real();
  if (b.imag() != 0.0) {
    len /= std::exp(at * b.imag());
    phase += b.imag() * std::log(vabs);
  }
  if (std::isinf(phase)) err = EDOM;
  return {{len * std::cos(phase), len * std::sin(phase)}, err};
}

inline std::complex<double> c_powu(std::complex<double> x, long n) {
  std::complex<double> r{1.0, 0.0}, p = x;
  long mask = 1;
  while (mask > 0 && n >= mask) {
    if (n & mask) r = c_prod(r, p);
    mask <<= 1;
    p = c_prod(p, p);
  }
  return r;
}

inline CResult c_powi(std::complex<double> x, long n) {
  if (n > 100 || n < -100) return c_pow(x, {static_cast<double>(n), 0.0});
  if (n > 0) return {c_powu(x, n)};
  return c_quot({1.0, 0.0}, c_powu(x, -n));
}

inline std::complex<double> complex_pow(std::complex<double> a, std::complex<double> b) {
  double re = b.real();
  long int_exponent = (re > -0x1p63 && re < 0x1p63) ? static_cast<long>(re) : std::numeric_limits<long>::min();
  CResult p = (b.imag() == 0.0 && re == static_cast<double>(int_exponent)) ? c_powi(a, int_exponent) : c_pow(a, b);
  int err = p.err;
  double x = p.v.real(), y = p.v.imag();
  if (std::isinf(x) || std::isinf(y)) {
    if (err == 0) err = ERANGE;
  } else if (err == ERANGE) {
    err = 0;
  }
  if (err == EDOM) raise("ZeroDivisionError: 0.0 to a negative or complex power");
  if (err == ERANGE) raise("OverflowError: complex exponentiation");
  return p.v;
}

/// CPython float ** float. Negative base with fractional exponent goes complex.
inline Value float_pow(double iv, double iw) {
  if (iw == 0.0) return 1.0;
  if (std::isnan(iv)) return iv;
  if (std::isnan(iw)) return iv == 1.0 ? 1.0 : iw;
  if (std::isinf(iw)) {
    iv = std::fabs(iv);
    if (iv == 1.0) return 1.0;
    if ((iw > 0.0) == (iv > 1.0)) return std::fabs(iw);
    return 0.0;
  }
  if (std::isinf(iv)) {
    bool odd = is_odd_integer(iw);
    if (iw > 0.0) return odd ? iv : std::fabs(iv);
    return odd ? std::copysign(0.0, iv) : 0.0;
  }
  if (iv == 0.0) {
    bool odd = is_odd_integer(iw);
    if (iw < 0.0) raise("ZeroDivisionError: 0.0 cannot be raised to a negative power");
    return odd ? iv : 0.0;
  }
  bool negate = false;
  if (iv < 0.0) {
    if (iw != std::floor(iw)) return complex_pow({iv, 0.0}, {iw, 0.0});
    iv = -iv;
    negate = is_odd_integer(iw);
  }
  if (iv == 1.0) return negate ? -1.0 : 1.0;
  double ix = std::pow(iv, iw);
  if (std::isinf(ix)) raise("OverflowError: (34, 'Numerical result out of range')");
  return negate ? -ix : ix;
}

inline double float_mod(double vx, double wx) {
  if (wx == 0.0) raise("ZeroDivisionError: float modulo");
  double mod = std::fmod(vx, wx);
  if (mod != 0.0) {
    if ((wx < 0) != (mod < 0)) mod += wx;
  } else {
    mod = std::copysign(0.0, wx);
  }
  return mod;
}

inline double float_floordiv(double vx, double wx) {
  if (wx == 0.0) raise("ZeroDivisionError: float divmod()");
  double mod = std::fmod(vx, wx);
  double div = (vx - mod) / wx;
  if (mod != 0.0) {
    if ((wx < 0) != (mod < 0)) div -= 1.0;
  }
  double floordiv;
  if (div != 0.0) {
    floordiv = std::floor(div);
    if (div - floordiv > 0.5) floordiv += 1.0;
  } else {
    floordiv = std::copysign(0.0, vx / wx);
  }
  return floordiv;
}

// ---- evaluator -------------------------------------------------------------

class Evaluator {
 public:
  Evaluator(std::string_view text, const std::vector<Node>& nodes, const EvalBudget& budget)
      : text_(text), nodes_(nodes), budget_(budget) {
    limit_bits_ = static_cast<std::size_t>(std::floor(budget.max_decimal_digits * 3.321928094887362)) + 1;
  }

  Value eval(int id, std::size_t depth = 0) {
    if (++steps_ > budget_.max_steps || depth > budget_.max_depth) throw OverBudget{};
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    switch (n.kind) {
      case Node::Number: {
        if (n.len > budget_.max_decimal_digits + 1) throw OverBudget{};
        BigInt v(std::string(text_.substr(n.pos, n.len)));
        check(v);
        return v;
      }
      case Node::Tuple:
        return EmptyTuple{};
      case Node::Neg:
      case Node::Pos: {
        Value v = eval(n.lhs, depth + 1);
        bool neg = n.kind == Node::Neg;
        if (auto* i = std::get_if<BigInt>(&v)) return neg ? BigInt(-*i) : *i;
        if (auto* f = std::get_if<double>(&v)) return neg ? -*f : *f;
        if (auto* c = std::get_if<std::complex<double>>(&v)) return neg ? std::complex<double>(-c->real(), -c->imag()) : *c;
        raise("TypeError: bad operand type for unary operator: 'tuple'");
      }
      case Node::Binary: {
        Value l = eval(n.lhs, depth + 1);
        Value r = eval(n.rhs, depth + 1);
        return binary(n.op, l, r);
      }
      case Node::Compare: {
        Value l = eval(n.lhs, depth + 1);
        for (const auto& [op, rhs] : n.chain) {
          Value r = eval(rhs, depth + 1);
          if (!compare(op, l, r)) return BigInt(0);
          l = std::move(r);
        }
        return BigInt(1);
      }
      case Node::Call:
        eval(n.lhs, depth + 1);
        raise("TypeError: object is not callable");
    }
    raise("internal: unknown node");
  }

 private:
  std::string_view text_;
  const std::vector<Node>& nodes_;
  EvalBudget budget_;
  std::size_t steps_ = 0;
  std::optional<BigInt> limit_;
  std::size_t limit_bits_ = 0;

  void check(const BigInt& v) {
    std::size_t nb = bit_length(v);
    if (nb < limit_bits_) return;
    if (nb > limit_bits_) throw OverBudget{};
    if (!limit_) limit_ = boost::multiprecision::pow(BigInt(10), budget_.max_decimal_digits);
    if (abs(v) > *limit_) throw OverBudget{};
  }

  static int rank(const Value& v) { return static_cast<int>(v.index()); }

  static double as_double(const Value& v) {
    if (auto* i = std::get_if<BigInt>(&v)) return int_to_double(*i);
    return std::get<double>(v);
  }

  static std::complex<double> as_complex(const Value& v) {
    if (auto* c = std::get_if<std::complex<double>>(&v)) return *c;
    return {as_double(v), 0.0};
  }

  Value binary(Op op, const Value& l, const Value& r) {
    bool lt = std::holds_alternative<EmptyTuple>(l), rt = std::holds_alternative<EmptyTuple>(r);
    if (lt || rt) {
      if (op == Op::Add && lt && rt) return EmptyTuple{};
      if (op == Op::Mul) {
        if (lt && std::holds_alternative<BigInt>(r)) return repeat(std::get<BigInt>(r));
        if (rt && std::holds_alternative<BigInt>(l)) return repeat(std::get<BigInt>(l));
      }
      raise("TypeError: unsupported operand type(s)");
    }
    if (op == Op::LShift || op == Op::RShift) {
      if (rank(l) != 0 || rank(r) != 0) raise("TypeError: unsupported operand type(s) for shift");
      return shift(op, std::get<BigInt>(l), std::get<BigInt>(r));
    }
    int k = std::max(rank(l), rank(r));
    if (k == 0) return int_binary(op, std::get<BigInt>(l), std::get<BigInt>(r));
    if (k == 1) return float_binary(op, as_double(l), as_double(r));
    return complex_binary(op, as_complex(l), as_complex(r));
  }

  static Value repeat(const BigInt& count) {
    static const BigInt lo = -(BigInt(1) << 63), hi = (BigInt(1) << 63) - 1;
    if (count < lo || count > hi) raise("OverflowError: cannot fit 'int' into an index-sized integer");
    return EmptyTuple{};
  }

  Value shift(Op op, const BigInt& a, const BigInt& b) {
    if (b < 0) raise("ValueError: negative shift count");
    if (a == 0) return BigInt(0);
    if (op == Op::LShift) {
      if (b > limit_bits_) throw OverBudget{};
      BigInt r = a << static_cast<unsigned>(b);
      check(r);
      return r;
    }
    std::size_t nb = bit_length(a);
    if (b >= nb) return BigInt(a < 0 ? -1 : 0);
    auto s = static_cast<unsigned>(b);
    if (a > 0) return BigInt(a >> s);
    return BigInt(-((BigInt(-a) - 1) >> s) - 1);
  }

  Value int_binary(Op op, const BigInt& a, const BigInt& b) {
    switch (op) {
      case Op::Add: {
        BigInt r = a + b;
        check(r);
        return r;
      }
      case Op::Sub: {
        BigInt r = a - b;
        check(r);
        return r;
      }
      case Op::Mul: {
        if (a != 0 && b != 0 && bit_length(a) + bit_length(b) > limit_bits_ + 2) throw OverBudget{};
        BigInt r = a * b;
        check(r);
        return r;
      }
      case Op::TrueDiv:
        return int_true_divide(a, b);
      case Op::FloorDiv:
      case Op::Mod: {
        if (b == 0) raise("ZeroDivisionError: integer division or modulo by zero");
        BigInt q = a / b, m = a % b;
        if (m != 0 && ((m < 0) != (b < 0))) {
          q -= 1;
          m += b;
        }
        return op == Op::FloorDiv ? q : m;
      }
      case Op::Pow: {
        if (b < 0) return float_pow(int_to_double(a), int_to_double(b));
        BigInt m = abs(a);
        if (m <= 1) {
          if (a == 0) return BigInt(b == 0 ? 1 : 0);
          if (a == 1) return BigInt(1);
          return BigInt((b & 1) != 0 ? -1 : 1);
        }
        if (b > limit_bits_ || (bit_length(m) - 1) * b.convert_to<std::size_t>() > limit_bits_) throw OverBudget{};
        BigInt r = boost::multiprecision::pow(a, b.convert_to<unsigned>());
        check(r);
        return r;
      }
      default:
        break;
    }
    raise("internal: bad int operator");
  }

  static Value float_binary(Op op, double a, double b) {
    switch (op) {
      case Op::Add: return a + b;
      case Op::Sub: return a - b;
      case Op::Mul: return a * b;
      case Op::TrueDiv:
        if (b == 0.0) raise("ZeroDivisionError: float division by zero");
        return a / b;
      case Op::FloorDiv: return float_floordiv(a, b);
      case Op::Mod: return float_mod(a, b);
      case Op::Pow: return float_pow(a, b);
      default: break;
    }
    raise("internal: bad float operator");
  }

  static Value complex_binary(Op op, std::complex<double> a, std::complex<double> b) {
    switch (op) {
      case Op::Add: return std::complex<double>(a.real() + b.real(), a.imag() + b.imag());
      case Op::Sub: return std::complex<double>(a.real() - b.real(), a.imag() - b.imag());
      case Op::Mul: return c_prod(a, b);
      case Op::TrueDiv: {
        CResult q = c_quot(a, b);
        if (q.err == EDOM) raise("ZeroDivisionError: complex division by zero");
        return q.v;
      }
      case Op::FloorDiv: raise("TypeError: can't take floor of complex number.");
      case Op::Mod: raise("TypeError: can't mod complex numbers.");
      case Op::Pow: return complex_pow(a, b);
      default: break;
    }
    raise("internal: bad complex operator");
  }

  // Result of a single comparison; raises where Python does.
  static bool compare(Op op, const Value& l, const Value& r) {
    bool eq_op = op == Op::Eq || op == Op::Ne;
    bool lt = std::holds_alternative<EmptyTuple>(l), rt = std::holds_alternative<EmptyTuple>(r);
    if (lt || rt) {
      if (lt && rt) return op == Op::Eq || op == Op::Le || op == Op::Ge;
      if (eq_op) return op == Op::Ne;
      raise("TypeError: '<' not supported between instances");
    }
    int k = std::max(rank(l), rank(r));
    if (k == 2) {
      if (!eq_op) raise("TypeError: '<' not supported between instances of 'complex'");
      bool equal = complex_equal(l, r);
      return op == Op::Eq ? equal : !equal;
    }
    std::optional<int> c;
    if (k == 0) {
      const auto& a = std::get<BigInt>(l);
      const auto& b = std::get<BigInt>(r);
      c = a < b ? -1 : (a > b ? 1 : 0);
    } else if (rank(l) == 0) {
      c = compare_int_double(std::get<BigInt>(l), std::get<double>(r));
    } else if (rank(r) == 0) {
      auto rev = compare_int_double(std::get<BigInt>(r), std::get<double>(l));
      if (rev) c = -*rev;
    } else {
      double a = std::get<double>(l), b = std::get<double>(r);
      if (!std::isnan(a) && !std::isnan(b)) c = a < b ? -1 : (a > b ? 1 : 0);
    }
    if (!c) return op == Op::Ne;
    switch (op) {
      case Op::Lt: return *c < 0;
      case Op::Gt: return *c > 0;
      case Op::Le: return *c <= 0;
      case Op::Ge: return *c >= 0;
      case Op::Eq: return *c == 0;
      default: return *c != 0;
    }
  }

  static bool complex_equal(const Value& l, const Value& r) {
    const Value& c = std::holds_alternative<std::complex<double>>(l) ? l : r;
    const Value& o = &c == &l ? r : l;
    auto z = std::get<std::complex<double>>(c);
    if (auto* w = std::get_if<std::complex<double>>(&o)) return z.real() == w->real() && z.imag() == w->imag();
    if (auto* f = std::get_if<double>(&o)) return z.real() == *f && z.imag() == 0.0;
    if (z.imag() != 0.0) return false;
    auto cmp = compare_int_double(std::get<BigInt>(o), z.real());
    return cmp && *cmp == 0;
  }
};

}  // namespace pyexpr

/// Valid iff Python 3.10 `eval(text)` returns without raising. Exceeding
/// `budget` counts as invalid with reason "budget".
inline Verdict eval_expression(std::string_view text, const EvalBudget& budget = {}) {
  using namespace pyexpr;
  std::vector<Token> toks;
  SyntaxFailure err{0, ""};
  if (!lex(text, toks, err)) return Verdict::fail("syntax error at " + std::to_string(err.pos) + ": " + err.what);
  std::vector<Node> nodes;
  nodes.reserve(toks.size());
  Parser parser(toks, nodes, budget.max_depth);
  int root = parser.parse();
  if (root < 0) {
    if (parser.too_deep()) return Verdict::fail("budget");
    return Verdict::fail("syntax error at " + std::to_string(parser.error().pos) + ": " + parser.error().what);
  }
  try {
    Evaluator ev(text, nodes, budget);
    ev.eval(root);
  } catch (const Raised& r) {
    return Verdict::fail(r.what);
  } catch (const OverBudget&) {
    return Verdict::fail("budget");
  }
  return Verdict::pass();
}

/// True when a verdict was decided by the evaluation budget rather than by the
/// expression itself.
inline bool is_budget_verdict(const Verdict& v) { return !v.valid && v.reason == "budget"; }

class ExpressionValidator : public SequenceValidator {
 public:
  explicit ExpressionValidator(Alphabet alphabet = expression_alphabet(), EvalBudget budget = {})
      : alphabet_(std::move(alphabet)), budget_(budget) {}

  const Alphabet& alphabet() const override { return alphabet_; }
  Verdict check_text(std::string_view text) const override { return eval_expression(text, budget_); }
  const EvalBudget& budget() const { return budget_; }

 private:
  Alphabet alphabet_;
  EvalBudget budget_;
};

}  // namespace seqval
