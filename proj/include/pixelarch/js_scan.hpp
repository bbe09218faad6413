#pragma once

// Lexical helpers for minified JavaScript: string/comment/regex aware
// skipping, balanced argument extraction, JS string decoding, and a relaxed
// object-literal to strict JSON normalizer.

#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pixelarch::js {

inline bool is_ident_char(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || c == '$' || u >= 0x80;
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Returns the index one past the closing quote of the string literal that
// starts at `pos`, or text.size() when unterminated.
inline std::size_t skip_string(std::string_view text, std::size_t pos) {
  const char quote = text[pos];
  std::size_t i = pos + 1;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\\') {
      i += 2;
      continue;
    }
    if (c == quote) return i + 1;
    // Plain quotes cannot span lines; treat a bare newline as the end of a
    // broken literal so one bad quote does not swallow the rest of a file.
    if (quote != '`' && c == '\n') return i;
    if (quote == '`' && c == '$' && i + 1 < text.size() && text[i + 1] == '{') {
      int depth = 1;
      i += 2;
      while (i < text.size() && depth > 0) {
        if (text[i] == '"' || text[i] == '\'' || text[i] == '`') {
          i = skip_string(text, i);
          continue;
        }
        if (text[i] == '{') ++depth;
        if (text[i] == '}') --depth;
        ++i;
      }
      continue;
    }
    ++i;
  }
  return text.size();
}

// If a comment starts at `pos`, returns the index one past it.
inline std::optional<std::size_t> skip_comment(std::string_view text, std::size_t pos) {
  if (pos + 1 >= text.size() || text[pos] != '/') return std::nullopt;
  if (text[pos + 1] == '/') {
    const auto nl = text.find('\n', pos + 2);
    return nl == std::string_view::npos ? text.size() : nl;
  }
  if (text[pos + 1] == '*') {
    const auto end = text.find("*/", pos + 2);
    return end == std::string_view::npos ? text.size() : end + 2;
  }
  return std::nullopt;
}

// A '/' begins a regex literal when the previous significant character
// cannot end an expression.
inline bool slash_starts_regex(char prev_significant) {
  if (prev_significant == '\0') return true;
  switch (prev_significant) {
    case '(': case ',': case '=': case ':': case '[': case '!': case '&':
    case '|': case '?': case '{': case '}': case ';': case '+': case '-':
    case '*': case '%': case '<': case '>': case '~': case '^':
      return true;
    default:
      return false;
  }
}

inline std::size_t skip_regex(std::string_view text, std::size_t pos) {
  std::size_t i = pos + 1;
  bool in_class = false;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\\') {
      i += 2;
      continue;
    }
    if (c == '\n') return i;
    if (in_class) {
      if (c == ']') in_class = false;
    } else if (c == '[') {
      in_class = true;
    } else if (c == '/') {
      ++i;
      while (i < text.size() && is_ident_char(text[i])) ++i;
      return i;
    }
    ++i;
  }
  return text.size();
}

// Walks `text` and invokes `on_code(pos)` for every byte that is live code,
// i.e. not inside a string, template, comment, or regex literal.
template <typename OnCode>
void for_each_code_position(std::string_view text, OnCode&& on_code) {
  char prev = '\0';
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '"' || c == '\'' || c == '`') {
      i = skip_string(text, i);
      prev = c;
      continue;
    }
    if (c == '/') {
      if (auto end = skip_comment(text, i)) {
        i = *end;
        continue;
      }
      if (slash_starts_regex(prev)) {
        i = skip_regex(text, i);
        prev = '/';
        continue;
      }
    }
    on_code(i);
    if (!is_space(c)) prev = c;
    ++i;
  }
}

struct ArgumentList {
  std::vector<std::string_view> args;  // trimmed raw argument text
  std::size_t end = 0;                 // index one past the closing ')'
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// `open` must index a '('. Splits the call's arguments at top-level commas.
// Returns nullopt when the parentheses never balance.
inline std::optional<ArgumentList> extract_arguments(std::string_view text, std::size_t open) {
  if (open >= text.size() || text[open] != '(') return std::nullopt;
  ArgumentList out;
  std::vector<char> stack{')'};
  std::size_t arg_start = open + 1;
  char prev = '(';
  std::size_t i = open + 1;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '"' || c == '\'' || c == '`') {
      i = skip_string(text, i);
      prev = c;
      continue;
    }
    if (c == '/') {
      if (auto end = skip_comment(text, i)) {
        i = *end;
        continue;
      }
      if (slash_starts_regex(prev)) {
        i = skip_regex(text, i);
        prev = '/';
        continue;
      }
    }
    if (c == '(' || c == '[' || c == '{') {
      stack.push_back(c == '(' ? ')' : c == '[' ? ']' : '}');
    } else if (c == ')' || c == ']' || c == '}') {
      if (stack.back() != c) return std::nullopt;
      stack.pop_back();
      if (stack.empty()) {
        auto last = trim(text.substr(arg_start, i - arg_start));
        if (!last.empty() || !out.args.empty()) out.args.push_back(last);
        out.end = i + 1;
        return out;
      }
    } else if (c == ',' && stack.size() == 1) {
      out.args.push_back(trim(text.substr(arg_start, i - arg_start)));
      arg_start = i + 1;
    }
    if (!is_space(c)) prev = c;
    ++i;
  }
  return std::nullopt;
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | cp >> 6));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | cp >> 12));
    out.push_back(static_cast<char>(0x80 | (cp >> 6 & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | cp >> 18));
    out.push_back(static_cast<char>(0x80 | (cp >> 12 & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp >> 6 & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Decodes a complete quoted JS string literal (including its quotes).
inline std::optional<std::string> decode_string_literal(std::string_view lit) {
  if (lit.size() < 2) return std::nullopt;
  const char q = lit.front();
  if ((q != '"' && q != '\'' && q != '`') || lit.back() != q) return std::nullopt;
  std::string out;
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  auto read_hex = [&](std::size_t pos, std::size_t n) -> std::optional<std::uint32_t> {
    if (pos + n > lit.size() - 1) return std::nullopt;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const int h = hex(lit[pos + k]);
      if (h < 0) return std::nullopt;
      v = v * 16 + static_cast<std::uint32_t>(h);
    }
    return v;
  };
  for (std::size_t i = 1; i + 1 < lit.size(); ++i) {
    const char c = lit[i];
    if (c != '\\') {
      out.push_back(c);
      continue;
    }
    if (i + 2 >= lit.size()) return std::nullopt;
    const char e = lit[++i];
    switch (e) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case 'b': out.push_back('\b'); break;
      case 'f': out.push_back('\f'); break;
      case 'v': out.push_back('\v'); break;
      case '0': out.push_back('\0'); break;
      case '\n': break;  // line continuation
      case 'x': {
        auto v = read_hex(i + 1, 2);
        if (!v) return std::nullopt;
        append_utf8(out, *v);
        i += 2;
        break;
      }
      case 'u': {
        std::uint32_t cp = 0;
        if (i + 1 < lit.size() && lit[i + 1] == '{') {
          const auto close = lit.find('}', i + 2);
          if (close == std::string_view::npos || close - (i + 2) > 6) return std::nullopt;
          auto v = read_hex(i + 2, close - (i + 2));
          if (!v) return std::nullopt;
          cp = *v;
          i = close;
        } else {
          auto v = read_hex(i + 1, 4);
          if (!v) return std::nullopt;
          cp = *v;
          i += 4;
          if (cp >= 0xD800 && cp <= 0xDBFF && i + 6 < lit.size() && lit[i + 1] == '\\' &&
              lit[i + 2] == 'u') {
            if (auto lo = read_hex(i + 3, 4); lo && *lo >= 0xDC00 && *lo <= 0xDFFF) {
              cp = 0x10000 + ((cp - 0xD800) << 10) + (*lo - 0xDC00);
              i += 6;
            }
          }
        }
        append_utf8(out, cp);
        break;
      }
      default: out.push_back(e); break;
    }
  }
  return out;
}

inline std::string json_quote(std::string_view s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default:
        if (c < 0x20) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\u00";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xf]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
  return out;
}

// Rewrites a JS object/array literal into strict JSON text:
//   - single-quoted and template strings become double-quoted
//   - bare identifier keys are quoted
//   - comments and `...` elisions are dropped
//   - trailing, leading, and doubled commas are removed
//   - `!0`/`!1` become true/false, `undefined` becomes null
// Returns nullopt on anything that is not data (function calls, operators).
inline std::optional<std::string> relaxed_json_to_strict(std::string_view text) {
  enum class Tok { Punct, Scalar };
  struct Token {
    Tok kind;
    std::string text;
    bool bare_ident = false;
  };
  std::vector<Token> toks;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
      continue;
    }
    if (c == '/') {
      if (auto end = skip_comment(text, i)) {
        i = *end;
        continue;
      }
      return std::nullopt;
    }
    if (c == '{' || c == '}' || c == '[' || c == ']' || c == ':' || c == ',') {
      toks.push_back({Tok::Punct, std::string(1, c)});
      ++i;
      continue;
    }
    if (c == '.' && text.substr(i, 3) == "...") {
      i += 3;
      continue;
    }
    if (c == '"' || c == '\'' || c == '`') {
      const auto end = skip_string(text, i);
      auto decoded = decode_string_literal(text.substr(i, end - i));
      if (!decoded) return std::nullopt;
      toks.push_back({Tok::Scalar, json_quote(*decoded)});
      i = end;
      continue;
    }
    if (c == '!' && i + 1 < text.size() && (text[i + 1] == '0' || text[i + 1] == '1')) {
      toks.push_back({Tok::Scalar, text[i + 1] == '0' ? "true" : "false"});
      i += 2;
      continue;
    }
    const bool numeric_start =
        std::isdigit(static_cast<unsigned char>(c)) ||
        (i + 1 < text.size() && (c == '-' || c == '+' || c == '.') &&
         (std::isdigit(static_cast<unsigned char>(text[i + 1])) || text[i + 1] == '.'));
    if (numeric_start) {
      std::size_t j = i + 1;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) ||
                                 text[j] == '.' || text[j] == '+' || text[j] == '-')) {
        ++j;
      }
      std::string num(text.substr(i, j - i));
      if (num.front() == '+') num.erase(0, 1);
      if (num.front() == '.') num.insert(0, "0");
      if (num.size() > 1 && num[0] == '-' && num[1] == '.') num.insert(1, "0");
      if (num.size() > 2 && num[0] == '0' && (num[1] == 'x' || num[1] == 'X')) {
        num = std::to_string(std::stoull(num.substr(2), nullptr, 16));
      }
      if (!num.empty() && num.back() == '.') num.push_back('0');
      toks.push_back({Tok::Scalar, num});
      i = j;
      continue;
    }
    if (is_ident_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      std::string word(text.substr(i, j - i));
      if (word == "undefined") word = "null";
      const bool bare = word != "true" && word != "false" && word != "null";
      if (bare) word = json_quote(word);
      toks.push_back({Tok::Scalar, word, bare});
      i = j;
      continue;
    }
    return std::nullopt;
  }

  std::string out;
  for (std::size_t k = 0; k < toks.size(); ++k) {
    const auto& t = toks[k];
    if (t.kind == Tok::Punct && t.text == ",") {
      // Drop commas that do not separate two values.
      const bool after_open = out.empty() || out.back() == '{' || out.back() == '[' ||
                              out.back() == ',' || out.back() == ':';
      const bool before_close = k + 1 >= toks.size() ||
                                (toks[k + 1].kind == Tok::Punct &&
                                 (toks[k + 1].text == "}" || toks[k + 1].text == "]" ||
                                  toks[k + 1].text == ","));
      if (after_open || before_close) continue;
    }
    if (t.kind == Tok::Scalar && k > 0 && toks[k - 1].kind == Tok::Scalar) return std::nullopt;
    // A bare word is only data when it is an object key.
    if (t.bare_ident &&
        !(k + 1 < toks.size() && toks[k + 1].kind == Tok::Punct && toks[k + 1].text == ":")) {
      return std::nullopt;
    }
    out += t.text;
  }
  return out;
}

}  // namespace pixelarch::js
