#include "hmfg/expression.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "hmfg/errors.hpp"

namespace hmfg {

struct ThetaExpression::Node {
  enum class Kind { kNumber, kTheta, kNeg, kAdd, kSub, kMul, kDiv, kPow, kCall };
  Kind kind = Kind::kNumber;
  double value = 0.0;
  std::string name;
  std::vector<std::shared_ptr<const Node>> args;

  double eval(double theta) const {
    switch (kind) {
      case Kind::kNumber: return value;
      case Kind::kTheta: return theta;
      case Kind::kNeg: return -args[0]->eval(theta);
      case Kind::kAdd: return args[0]->eval(theta) + args[1]->eval(theta);
      case Kind::kSub: return args[0]->eval(theta) - args[1]->eval(theta);
      case Kind::kMul: return args[0]->eval(theta) * args[1]->eval(theta);
      case Kind::kDiv: return args[0]->eval(theta) / args[1]->eval(theta);
      case Kind::kPow: return std::pow(args[0]->eval(theta), args[1]->eval(theta));
      case Kind::kCall: return call(theta);
    }
    return 0.0;
  }

  double call(double theta) const {
    const double a = args[0]->eval(theta);
    if (name == "sin") return std::sin(a);
    if (name == "cos") return std::cos(a);
    if (name == "tan") return std::tan(a);
    if (name == "exp") return std::exp(a);
    if (name == "log") return std::log(a);
    if (name == "sqrt") return std::sqrt(a);
    if (name == "abs") return std::abs(a);
    if (name == "tanh") return std::tanh(a);
    const double b = args[1]->eval(theta);
    if (name == "min") return std::min(a, b);
    if (name == "max") return std::max(a, b);
    return std::pow(a, b);
  }
};

namespace {

using Node = ThetaExpression::Node;
using NodePtr = std::shared_ptr<const Node>;

int arity(const std::string& fn) {
  static const char* unary[] = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh"};
  static const char* binary[] = {"min", "max", "pow"};
  for (const char* u : unary) {
    if (fn == u) return 1;
  }
  for (const char* b : binary) {
    if (fn == b) return 2;
  }
  return 0;
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream os;
    os << "expression '" << s_ << "': " << what << " at column " << pos_ + 1;
    throw ConfigError(os.str());
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_])) != 0) ++pos_;
  }

  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  static NodePtr make(Node::Kind k, std::vector<NodePtr> args) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (eat('+')) {
        lhs = make(Node::Kind::kAdd, {lhs, term()});
      } else if (eat('-')) {
        lhs = make(Node::Kind::kSub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (eat('*')) {
        lhs = make(Node::Kind::kMul, {lhs, unary()});
      } else if (eat('/')) {
        lhs = make(Node::Kind::kDiv, {lhs, unary()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (eat('-')) return make(Node::Kind::kNeg, {unary()});
    if (eat('+')) return unary();
    NodePtr base = primary();
    if (eat('^')) return make(Node::Kind::kPow, {base, unary()});
    return base;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) != 0 || c == '.') {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
      if (ec != std::errc()) fail("malformed number");
      pos_ = static_cast<std::size_t>(ptr - s_.data());
      auto n = std::make_shared<Node>();
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) != 0 || s_[pos_] == '_')) ++pos_;
      const std::string id(s_.substr(start, pos_ - start));
      if (id == "theta") {
        auto n = std::make_shared<Node>();
        n->kind = Node::Kind::kTheta;
        return n;
      }
      if (id == "pi") {
        auto n = std::make_shared<Node>();
        n->value = std::numbers::pi;
        return n;
      }
      const int k = arity(id);
      if (k == 0) {
        pos_ = start;
        fail("unknown identifier '" + id + "'");
      }
      if (!eat('(')) fail("expected '(' after " + id);
      std::vector<NodePtr> args{expr()};
      for (int i = 1; i < k; ++i) {
        if (!eat(',')) fail(id + " takes " + std::to_string(k) + " arguments");
        args.push_back(expr());
      }
      if (!eat(')')) fail("expected ')'");
      auto n = std::make_shared<Node>();
      n->kind = Node::Kind::kCall;
      n->name = id;
      n->args = std::move(args);
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

ThetaExpression ThetaExpression::parse(std::string_view text) {
  Parser p(text);
  return ThetaExpression(std::string(text), p.parse());
}

ThetaExpression ThetaExpression::constant(double value) {
  auto n = std::make_shared<Node>();
  n->value = value;
  std::ostringstream os;
  os.precision(17);
  os << value;
  return ThetaExpression(os.str(), n);
}

double ThetaExpression::operator()(double theta) const { return root_->eval(theta); }

}  // namespace hmfg
