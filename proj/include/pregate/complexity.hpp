#pragma once

// Per-file task complexity from source text. Two C-like and Python lexers give
// the grammar-aware path; every other language (and any byte soup) goes through
// the keyword/LOC heuristic. Reports carry aggregate numbers only.

#include <cstdint>
#include <string_view>

#include "json.hpp"

namespace pregate {

enum class Language { C, Cpp, Java, JavaScript, Python, Other };

Language parse_language(std::string_view name);
std::string_view to_string(Language lang);
bool has_grammar(Language lang);

enum class ComplexityMethod { Grammar, Heuristic };
std::string_view to_string(ComplexityMethod m);

struct CyclomaticResult {
  std::int64_t count = 1;
  ComplexityMethod method = ComplexityMethod::Heuristic;  // Heuristic doubles as the FallbackUsed signal
};

struct HalsteadCounts {
  std::int64_t distinct_operators = 0;  // n1
  std::int64_t distinct_operands = 0;   // n2
  std::int64_t total_operators = 0;     // N1
  std::int64_t total_operands = 0;      // N2
};

struct HalsteadResult {
  HalsteadCounts counts;
  double volume = 0.0;
  double effort = 0.0;
};

struct ComplexityReport {
  std::int64_t cyclomatic = 1;
  double halstead_volume = 0.0;
  double halstead_effort = 0.0;
  double maintainability = 100.0;
  std::int64_t loc = 0;
  double task_complexity = 0.0;
  ComplexityMethod method = ComplexityMethod::Heuristic;
};

CyclomaticResult cyclomatic(std::string_view source, Language lang);
HalsteadResult halstead(std::string_view source, Language lang);

// Volume/effort from raw counts; both are zero when there are no operands.
HalsteadResult halstead_from_counts(const HalsteadCounts& c);

double maintainability_index(double volume, std::int64_t cyclomatic, std::int64_t loc);

// Non-blank line count.
std::int64_t count_loc(std::string_view source);

// x / (x + k)
inline double saturate(double x, double k) { return x / (x + k); }

ComplexityReport task_complexity(std::string_view source, Language lang);

nlohmann::json to_json(const ComplexityReport& r);

}  // namespace pregate
