#include "pregate/complexity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

namespace pregate {

namespace {

enum class TokenRole { Operator, Operand };

struct Token {
  std::string_view text;
  TokenRole role;
};

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_digit(unsigned char c) { return c >= '0' && c <= '9'; }
bool is_ident_start(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '$' || c >= 0x80;
}
bool is_ident_char(unsigned char c) { return is_ident_start(c) || is_digit(c); }
bool is_word_char(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || is_digit(c) || c == '_' || c >= 0x80;
}

struct Grammar {
  std::unordered_set<std::string_view> keywords;        // counted as operators
  std::unordered_set<std::string_view> literal_words;   // counted as operands
  std::unordered_set<std::string_view> decision_words;
  std::unordered_set<std::string_view> decision_ops;
  std::vector<std::string_view> operators;              // longest first
  bool hash_comments = false;
  bool python_strings = false;
};

std::vector<std::string_view> sorted_longest_first(std::vector<std::string_view> ops) {
  std::stable_sort(ops.begin(), ops.end(), [](auto a, auto b) { return a.size() > b.size(); });
  return ops;
}

const Grammar& c_family_grammar() {
  static const Grammar g = [] {
    Grammar g;
    g.keywords = {"if", "else", "for", "while", "do", "switch", "case", "default", "break", "continue",
                  "return", "goto", "try", "catch", "throw", "new", "delete", "sizeof", "typeof",
                  "instanceof", "class", "struct", "union", "enum", "namespace", "using", "template",
                  "typename", "public", "private", "protected", "static", "const", "constexpr", "virtual",
                  "override", "final", "void", "int", "long", "short", "char", "float", "double", "bool",
                  "unsigned", "signed", "auto", "var", "let", "function", "import", "export", "package",
                  "extends", "implements", "interface", "finally", "throws", "async", "await", "yield",
                  "operator", "and", "or", "not", "in", "of", "volatile", "extern", "inline", "register"};
    g.literal_words = {"true", "false", "null", "nullptr", "NULL", "undefined", "this"};
    g.decision_words = {"if", "for", "while", "case", "catch", "and", "or"};
    g.decision_ops = {"&&", "||", "?"};
    g.operators = sorted_longest_first({">>>=", "<<=", ">>=", "...", "->*", "===", "!==", ">>>", "&&", "||",
                                        "==", "!=", "<=", ">=", "++", "--", "->", "::", "+=", "-=", "*=",
                                        "/=", "%=", "&=", "|=", "^=", "<<", ">>", "?.", "??", "=>", "+",
                                        "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^", "?",
                                        ":", ";", ",", ".", "(", "[", "{", "@", "#", "\\"});
    return g;
  }();
  return g;
}

const Grammar& python_grammar() {
  static const Grammar g = [] {
    Grammar g;
    g.keywords = {"and", "or", "not", "in", "is", "if", "elif", "else", "for", "while", "def", "return",
                  "class", "import", "from", "as", "try", "except", "finally", "with", "lambda", "yield",
                  "pass", "break", "continue", "raise", "global", "nonlocal", "assert", "del", "await",
                  "async", "match", "case"};
    g.literal_words = {"True", "False", "None", "self"};
    g.decision_words = {"if", "elif", "for", "while", "except", "case", "and", "or"};
    g.operators = sorted_longest_first({"**=", "//=", ">>=", "<<=", "**", "//", "==", "!=", "<=", ">=", "->",
                                        ":=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "<<",
                                        ">>", "+", "-", "*", "/", "%", "=", "<", ">", "~", "&", "|", "^",
                                        ":", ";", ",", ".", "(", "[", "{", "@", "\\", "!", "?", "$"});
    g.hash_comments = true;
    g.python_strings = true;
    return g;
  }();
  return g;
}

const Grammar* grammar_for(Language lang) {
  switch (lang) {
    case Language::C:
    case Language::Cpp:
    case Language::Java:
    case Language::JavaScript: return &c_family_grammar();
    case Language::Python: return &python_grammar();
    case Language::Other: return nullptr;
  }
  return nullptr;
}

std::size_t skip_quoted(std::string_view s, std::size_t i, bool triple_quotes) {
  // s[i] is the opening quote; returns the index one past the closing quote.
  const char q = s[i];
  if (triple_quotes && i + 2 < s.size() && s[i + 1] == q && s[i + 2] == q) {
    std::size_t j = i + 3;
    while (j + 2 < s.size() && !(s[j] == q && s[j + 1] == q && s[j + 2] == q)) j += (s[j] == '\\') ? 2 : 1;
    return std::min(s.size(), j + 3);
  }
  std::size_t j = i + 1;
  while (j < s.size() && s[j] != q) {
    if (s[j] == '\\') ++j;
    else if (s[j] == '\n' && q != '`') break;
    ++j;
  }
  return std::min(s.size(), j + 1);
}

struct LexResult {
  std::vector<Token> tokens;
  std::int64_t decisions = 0;
};

LexResult lex(std::string_view s, const Grammar& g) {
  LexResult out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_space(c)) { ++i; continue; }
    if (g.hash_comments && c == '#') {
      while (i < n && s[i] != '\n') ++i;
      continue;
    }
    if (!g.hash_comments && c == '/' && i + 1 < n && s[i + 1] == '/') {
      while (i < n && s[i] != '\n') ++i;
      continue;
    }
    if (!g.hash_comments && c == '/' && i + 1 < n && s[i + 1] == '*') {
      auto end = s.find("*/", i + 2);
      i = end == std::string_view::npos ? n : end + 2;
      continue;
    }
    if (c == '"' || c == '\'' || (!g.python_strings && c == '`')) {
      auto j = skip_quoted(s, i, g.python_strings);
      out.tokens.push_back({s.substr(i, j - i), TokenRole::Operand});
      i = j;
      continue;
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(static_cast<unsigned char>(s[i + 1])))) {
      std::size_t j = i + 1;
      while (j < n && (is_ident_char(static_cast<unsigned char>(s[j])) || s[j] == '.' || s[j] == '\'')) ++j;
      out.tokens.push_back({s.substr(i, j - i), TokenRole::Operand});
      i = j;
      continue;
    }
    if (is_ident_start(c)) {
      std::size_t j = i + 1;
      while (j < n && is_ident_char(static_cast<unsigned char>(s[j]))) ++j;
      auto word = s.substr(i, j - i);
      if (g.python_strings && j < n && (s[j] == '"' || s[j] == '\'') && word.size() <= 3 &&
          word.find_first_not_of("rRbBuUfF") == std::string_view::npos) {
        auto k = skip_quoted(s, j, true);
        out.tokens.push_back({s.substr(i, k - i), TokenRole::Operand});
        i = k;
        continue;
      }
      if (g.decision_words.contains(word)) ++out.decisions;
      const bool op = g.keywords.contains(word) && !g.literal_words.contains(word);
      out.tokens.push_back({word, op ? TokenRole::Operator : TokenRole::Operand});
      i = j;
      continue;
    }
    if (c == ')' || c == ']' || c == '}') { ++i; continue; }
    std::string_view matched = s.substr(i, 1);
    for (auto op : g.operators) {
      if (s.substr(i, op.size()) == op) {
        matched = op;
        break;
      }
    }
    if (g.decision_ops.contains(matched)) ++out.decisions;
    out.tokens.push_back({matched, TokenRole::Operator});
    i += matched.size();
  }
  return out;
}

// Language-neutral split: runs of word characters are operands, every other
// non-space byte is a single-character operator.
LexResult lex_heuristic(std::string_view s) {
  static const std::unordered_set<std::string_view> kDecisionWords = {"if", "for", "while", "case", "catch"};
  LexResult out;
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (is_space(c)) { ++i; continue; }
    if (is_word_char(c)) {
      std::size_t j = i + 1;
      while (j < n && is_word_char(static_cast<unsigned char>(s[j]))) ++j;
      auto word = s.substr(i, j - i);
      if (kDecisionWords.contains(word)) ++out.decisions;
      out.tokens.push_back({word, TokenRole::Operand});
      i = j;
      continue;
    }
    if ((c == '&' || c == '|') && i + 1 < n && s[i + 1] == s[i]) {
      ++out.decisions;
      out.tokens.push_back({s.substr(i, 1), TokenRole::Operator});
      out.tokens.push_back({s.substr(i + 1, 1), TokenRole::Operator});
      i += 2;
      continue;
    }
    if (c == '?') ++out.decisions;
    out.tokens.push_back({s.substr(i, 1), TokenRole::Operator});
    ++i;
  }
  return out;
}

LexResult lex_for(std::string_view source, Language lang) {
  if (const Grammar* g = grammar_for(lang)) return lex(source, *g);
  return lex_heuristic(source);
}

HalsteadCounts count_tokens(const std::vector<Token>& tokens) {
  std::set<std::string_view> ops;
  std::set<std::string_view> operands;
  HalsteadCounts c;
  for (const auto& t : tokens) {
    if (t.role == TokenRole::Operator) {
      ops.insert(t.text);
      ++c.total_operators;
    } else {
      operands.insert(t.text);
      ++c.total_operands;
    }
  }
  c.distinct_operators = static_cast<std::int64_t>(ops.size());
  c.distinct_operands = static_cast<std::int64_t>(operands.size());
  return c;
}

}  // namespace

Language parse_language(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) {
    return static_cast<char>(ch >= 'A' && ch <= 'Z' ? ch - 'A' + 'a' : ch);
  });
  if (lower == "c" || lower == "h") return Language::C;
  if (lower == "cpp" || lower == "c++" || lower == "cc" || lower == "cxx" || lower == "hpp") return Language::Cpp;
  if (lower == "java") return Language::Java;
  if (lower == "javascript" || lower == "js" || lower == "typescript" || lower == "ts") return Language::JavaScript;
  if (lower == "python" || lower == "py") return Language::Python;
  return Language::Other;
}

std::string_view to_string(Language lang) {
  switch (lang) {
    case Language::C: return "c";
    case Language::Cpp: return "cpp";
    case Language::Java: return "java";
    case Language::JavaScript: return "javascript";
    case Language::Python: return "python";
    case Language::Other: return "other";
  }
  return "other";
}

bool has_grammar(Language lang) { return grammar_for(lang) != nullptr; }

std::string_view to_string(ComplexityMethod m) {
  return m == ComplexityMethod::Grammar ? "Grammar" : "Heuristic";
}

CyclomaticResult cyclomatic(std::string_view source, Language lang) {
  const auto lexed = lex_for(source, lang);
  return {1 + lexed.decisions, has_grammar(lang) ? ComplexityMethod::Grammar : ComplexityMethod::Heuristic};
}

HalsteadResult halstead_from_counts(const HalsteadCounts& c) {
  HalsteadResult r;
  r.counts = c;
  if (c.distinct_operands == 0) return r;
  const double vocabulary = static_cast<double>(c.distinct_operators + c.distinct_operands);
  const double length = static_cast<double>(c.total_operators + c.total_operands);
  r.volume = length * std::log2(vocabulary);
  const double difficulty = (static_cast<double>(c.distinct_operators) / 2.0) *
                            (static_cast<double>(c.total_operands) / static_cast<double>(c.distinct_operands));
  r.effort = difficulty * r.volume;
  return r;
}

HalsteadResult halstead(std::string_view source, Language lang) {
  return halstead_from_counts(count_tokens(lex_for(source, lang).tokens));
}

double maintainability_index(double volume, std::int64_t cyclomatic_count, std::int64_t loc) {
  const double raw = 171.0 - 5.2 * std::log(std::max(volume, 1.0)) -
                     0.23 * static_cast<double>(cyclomatic_count) -
                     16.2 * std::log(static_cast<double>(std::max<std::int64_t>(loc, 1)));
  return std::clamp(raw * 100.0 / 171.0, 0.0, 100.0);
}

std::int64_t count_loc(std::string_view source) {
  std::int64_t loc = 0;
  bool content = false;
  for (char ch : source) {
    if (ch == '\n') {
      loc += content ? 1 : 0;
      content = false;
    } else if (!is_space(static_cast<unsigned char>(ch))) {
      content = true;
    }
  }
  return loc + (content ? 1 : 0);
}

ComplexityReport task_complexity(std::string_view source, Language lang) {
  const bool grammar = has_grammar(lang);
  const auto lexed = grammar ? lex(source, *grammar_for(lang)) : lex_heuristic(source);
  const auto hal = halstead_from_counts(count_tokens(lexed.tokens));

  ComplexityReport r;
  r.method = grammar ? ComplexityMethod::Grammar : ComplexityMethod::Heuristic;
  r.cyclomatic = 1 + lexed.decisions;
  r.loc = count_loc(source);
  r.halstead_volume = hal.volume;
  // Without a grammar, effort is replaced by a LOC surrogate.
  r.halstead_effort = grammar ? hal.effort : static_cast<double>(r.loc);
  r.maintainability = maintainability_index(r.halstead_volume, r.cyclomatic, r.loc);

  const double tc = 0.4 * saturate(static_cast<double>(r.cyclomatic - 1), 10.0) +
                    0.3 * saturate(std::log1p(r.halstead_effort), 8.0) +
                    0.3 * (1.0 - r.maintainability / 100.0);
  r.task_complexity = std::clamp(tc, 0.0, 1.0);
  return r;
}

nlohmann::json to_json(const ComplexityReport& r) {
  return {{"cyclomatic", r.cyclomatic},
          {"halstead_volume", r.halstead_volume},
          {"halstead_effort", r.halstead_effort},
          {"maintainability", r.maintainability},
          {"loc", r.loc},
          {"task_complexity", r.task_complexity},
          {"method", to_string(r.method)}};
}

}  // namespace pregate
