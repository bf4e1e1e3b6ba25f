#pragma once

#include <cctype>
#include <cstdlib>
#include <string>

#include "superflow/scalar.hpp"

namespace superflow::detail {

// Token stream shared by the scalar-expression and superfunction parsers.
struct Token {
  enum class Type {
    Number,
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
  };
  Type type = Type::End;
  double number = 0.0;
  std::string text;       // identifier spelling
  std::size_t pos = 0;    // byte offset of the token start
};

class Lexer {
public:
  explicit Lexer(const std::string& src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(what, tok_.pos);
  }

private:
  void advance() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_])))
      ++i_;
    tok_ = Token{};
    tok_.pos = i_;
    if (i_ >= src_.size()) {
      tok_.type = Token::Type::End;
      return;
    }
    char c = src_[i_];
    switch (c) {
      case '+': tok_.type = Token::Type::Plus; ++i_; return;
      case '-': tok_.type = Token::Type::Minus; ++i_; return;
      case '*': tok_.type = Token::Type::Star; ++i_; return;
      case '/': tok_.type = Token::Type::Slash; ++i_; return;
      case '^': tok_.type = Token::Type::Caret; ++i_; return;
      case '(': tok_.type = Token::Type::LParen; ++i_; return;
      case ')': tok_.type = Token::Type::RParen; ++i_; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t start = i_;
      while (i_ < src_.size() &&
             std::isdigit(static_cast<unsigned char>(src_[i_])))
        ++i_;
      if (i_ < src_.size() && src_[i_] == '.') {
        ++i_;
        while (i_ < src_.size() &&
               std::isdigit(static_cast<unsigned char>(src_[i_])))
          ++i_;
      }
      if (i_ < src_.size() && (src_[i_] == 'e' || src_[i_] == 'E')) {
        std::size_t mark = i_;
        ++i_;
        if (i_ < src_.size() && (src_[i_] == '+' || src_[i_] == '-')) ++i_;
        if (i_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i_]))) {
          while (i_ < src_.size() &&
                 std::isdigit(static_cast<unsigned char>(src_[i_])))
            ++i_;
        } else {
          i_ = mark;  // the 'e' belongs to a following identifier, not here
        }
      }
      std::string text = src_.substr(start, i_ - start);
      if (text == ".") throw ParseError("malformed number", start);
      tok_.type = Token::Type::Number;
      tok_.number = std::strtod(text.c_str(), nullptr);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = i_;
      while (i_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[i_])) ||
              src_[i_] == '_'))
        ++i_;
      tok_.type = Token::Type::Ident;
      tok_.text = src_.substr(start, i_ - start);
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", i_);
  }

  const std::string& src_;
  std::size_t i_ = 0;
  Token tok_;
};

}  // namespace superflow::detail
