#pragma once

#include <memory>
#include <string>
#include <string_view>

namespace hmfg {

/// Arithmetic expression in the type variable `theta`.
/// Supports + - * / ^, parentheses, `pi`, and sin cos tan exp log sqrt abs tanh min max pow.
class ThetaExpression {
 public:
  /// Throws ConfigError with the offending column on malformed input.
  static ThetaExpression parse(std::string_view text);
  static ThetaExpression constant(double value);

  double operator()(double theta) const;
  const std::string& text() const { return text_; }

  struct Node;

 private:
  ThetaExpression(std::string text, std::shared_ptr<const Node> root) : text_(std::move(text)), root_(std::move(root)) {}
  std::string text_;
  std::shared_ptr<const Node> root_;
};

}  // namespace hmfg
