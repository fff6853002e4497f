#include "contactq/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace cq {

namespace {

enum class Tok { number, ident, plus, minus, star, slash, caret, lparen, rparen, end };

struct Token {
  Tok kind{};
  double value = 0.0;
  std::string text;
  std::size_t pos = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& current() const { return current_; }

  void advance() {
    while (i_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[i_]))) ++i_;
    current_.pos = i_;
    if (i_ >= text_.size()) {
      current_.kind = Tok::end;
      return;
    }
    char c = text_[i_];
    switch (c) {
      case '+': current_.kind = Tok::plus; ++i_; return;
      case '-': current_.kind = Tok::minus; ++i_; return;
      case '*': current_.kind = Tok::star; ++i_; return;
      case '/': current_.kind = Tok::slash; ++i_; return;
      case '^': current_.kind = Tok::caret; ++i_; return;
      case '(': current_.kind = Tok::lparen; ++i_; return;
      case ')': current_.kind = Tok::rparen; ++i_; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* start = text_.c_str() + i_;
      char* endp = nullptr;
      double v = std::strtod(start, &endp);
      if (endp == start) throw ParseError("malformed number", i_);
      current_.kind = Tok::number;
      current_.value = v;
      i_ += static_cast<std::size_t>(endp - start);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i_;
      while (j < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[j])) || text_[j] == '_'))
        ++j;
      current_.kind = Tok::ident;
      current_.text = text_.substr(i_, j - i_);
      i_ = j;
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", i_);
  }

 private:
  const std::string& text_;
  std::size_t i_ = 0;
  Token current_;
};

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make_node(ExprNode n) { return std::make_shared<const ExprNode>(std::move(n)); }

NodePtr make_binary(ExprNode::Kind kind, NodePtr a, NodePtr b) {
  ExprNode n;
  n.kind = kind;
  n.a = std::move(a);
  n.b = std::move(b);
  if (kind == ExprNode::Kind::pow && n.b->kind == ExprNode::Kind::constant) {
    double e = n.b->value;
    if (e == std::floor(e) && std::abs(e) <= 64.0) {
      n.has_int_exponent = true;
      n.int_exponent = static_cast<long>(e);
    }
  }
  return make_node(std::move(n));
}

bool builtin_from_name(const std::string& s, Builtin& out) {
  if (s == "exp") out = Builtin::exp;
  else if (s == "log") out = Builtin::log;
  else if (s == "sin") out = Builtin::sin;
  else if (s == "cos") out = Builtin::cos;
  else if (s == "sqrt") out = Builtin::sqrt;
  else return false;
  return true;
}

class Parser {
 public:
  Parser(const std::string& text, const std::vector<std::string>& variables)
      : lex_(text), variables_(variables) {}

  NodePtr parse() {
    NodePtr e = expr();
    if (lex_.current().kind != Tok::end)
      throw ParseError("unexpected trailing input", lex_.current().pos);
    return e;
  }

 private:
  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      Tok k = lex_.current().kind;
      if (k == Tok::plus) {
        lex_.advance();
        lhs = make_binary(ExprNode::Kind::add, lhs, term());
      } else if (k == Tok::minus) {
        lex_.advance();
        lhs = make_binary(ExprNode::Kind::sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      Tok k = lex_.current().kind;
      if (k == Tok::star) {
        lex_.advance();
        lhs = make_binary(ExprNode::Kind::mul, lhs, unary());
      } else if (k == Tok::slash) {
        lex_.advance();
        lhs = make_binary(ExprNode::Kind::div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  NodePtr unary() {
    if (lex_.current().kind == Tok::minus) {
      lex_.advance();
      ExprNode n;
      n.kind = ExprNode::Kind::neg;
      n.a = unary();
      return make_node(std::move(n));
    }
    if (lex_.current().kind == Tok::plus) {
      lex_.advance();
      return unary();
    }
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (lex_.current().kind == Tok::caret) {
      lex_.advance();
      // right-associative; exponent may carry a sign
      return make_binary(ExprNode::Kind::pow, base, unary());
    }
    return base;
  }

  NodePtr primary() {
    const Token tok = lex_.current();
    switch (tok.kind) {
      case Tok::number: {
        lex_.advance();
        ExprNode n;
        n.kind = ExprNode::Kind::constant;
        n.value = tok.value;
        return make_node(std::move(n));
      }
      case Tok::ident: {
        lex_.advance();
        if (lex_.current().kind == Tok::lparen) {
          Builtin fn;
          if (!builtin_from_name(tok.text, fn))
            throw ParseError("unknown function '" + tok.text + "'", tok.pos);
          lex_.advance();
          NodePtr arg = expr();
          if (lex_.current().kind != Tok::rparen)
            throw ParseError("expected ')'", lex_.current().pos);
          lex_.advance();
          ExprNode n;
          n.kind = ExprNode::Kind::call;
          n.fn = fn;
          n.name = tok.text;
          n.a = std::move(arg);
          return make_node(std::move(n));
        }
        for (std::size_t i = 0; i < variables_.size(); ++i) {
          if (variables_[i] == tok.text) {
            ExprNode n;
            n.kind = ExprNode::Kind::variable;
            n.var_index = static_cast<int>(i);
            n.name = tok.text;
            return make_node(std::move(n));
          }
        }
        throw ParseError("unknown identifier '" + tok.text + "'", tok.pos);
      }
      case Tok::lparen: {
        lex_.advance();
        NodePtr e = expr();
        if (lex_.current().kind != Tok::rparen)
          throw ParseError("expected ')'", lex_.current().pos);
        lex_.advance();
        return e;
      }
      default:
        throw ParseError("expected a number, identifier or '('", tok.pos);
    }
  }

  Lexer lex_;
  const std::vector<std::string>& variables_;
};

void render(const ExprNode& n, std::ostringstream& os) {
  using Kind = ExprNode::Kind;
  switch (n.kind) {
    case Kind::constant: {
      std::ostringstream num;
      num.precision(17);
      num << n.value;
      std::string s = num.str();
      if (n.value < 0.0) {
        os << "(" << s << ")";  // keeps the rendering reparseable as one primary
      } else {
        os << s;
      }
      return;
    }
    case Kind::variable:
      os << n.name;
      return;
    case Kind::add:
      os << "(";
      render(*n.a, os);
      os << " + ";
      render(*n.b, os);
      os << ")";
      return;
    case Kind::sub:
      os << "(";
      render(*n.a, os);
      os << " - ";
      render(*n.b, os);
      os << ")";
      return;
    case Kind::mul:
      os << "(";
      render(*n.a, os);
      os << " * ";
      render(*n.b, os);
      os << ")";
      return;
    case Kind::div:
      os << "(";
      render(*n.a, os);
      os << " / ";
      render(*n.b, os);
      os << ")";
      return;
    case Kind::neg:
      os << "(-";
      render(*n.a, os);
      os << ")";
      return;
    case Kind::pow:
      os << "(";
      render(*n.a, os);
      os << " ^ ";
      render(*n.b, os);
      os << ")";
      return;
    case Kind::call:
      os << n.name << "(";
      render(*n.a, os);
      os << ")";
      return;
  }
}

bool nodes_equal(const ExprNode& a, const ExprNode& b) {
  if (a.kind != b.kind) return false;
  using Kind = ExprNode::Kind;
  switch (a.kind) {
    case Kind::constant:
      return a.value == b.value;
    case Kind::variable:
      return a.var_index == b.var_index;
    case Kind::call:
      if (a.fn != b.fn) return false;
      return nodes_equal(*a.a, *b.a);
    case Kind::neg:
      return nodes_equal(*a.a, *b.a);
    default:
      return nodes_equal(*a.a, *b.a) && nodes_equal(*a.b, *b.b);
  }
}

}  // namespace

Expr parse_expression(const std::string& text, const std::vector<std::string>& variables) {
  Parser parser(text, variables);
  return Expr(parser.parse());
}

std::string Expr::to_string() const {
  if (!root_) return "";
  std::ostringstream os;
  render(*root_, os);
  return os.str();
}

bool structurally_equal(const Expr& a, const Expr& b) {
  if (a.empty() || b.empty()) return a.empty() == b.empty();
  return nodes_equal(a.root(), b.root());
}

Expr constant_expr(double value) {
  ExprNode n;
  n.kind = ExprNode::Kind::constant;
  n.value = value;
  return Expr(std::make_shared<const ExprNode>(std::move(n)));
}

}  // namespace cq
