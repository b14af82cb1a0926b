#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "transcoder/util/rng.hpp"

// Two toy imperative languages with identical semantics and different
// surface syntax.
//
//   alpha:  let a = n + 3 ;   print a ;   loop 3 { ... }
//   beta:   a := n plus 3 .   show a .    loop 3 times ... end
//
// Programs read the predefined input variable `n`, assign the variables a-d,
// print values and run counted (non-nested) loops. Arithmetic wraps modulo 2^32.
namespace transcoder::data::minilang {

enum class Language { Alpha, Beta };

std::string_view to_string(Language language);
/// Throws ConfigError for anything but "alpha" or "beta".
Language parse_language(std::string_view name);
Language other(Language language);

enum class BinaryOp { Add, Sub, Mul };

struct Operand {
  std::string variable;  // empty for literals
  std::uint32_t literal = 0;

  [[nodiscard]] bool is_variable() const { return !variable.empty(); }
  friend bool operator==(const Operand&, const Operand&) = default;
};

struct Expr {
  Operand lhs;
  std::optional<BinaryOp> op;
  Operand rhs;  // meaningful only when op is set

  friend bool operator==(const Expr&, const Expr&) = default;
};

enum class StatementKind { Assign, Print, Loop };

struct Statement {
  StatementKind kind = StatementKind::Assign;
  std::string variable;  // Assign target or Print operand
  Expr value;            // Assign
  std::uint32_t count = 0;        // Loop
  std::vector<Statement> body;    // Loop

  friend bool operator==(const Statement&, const Statement&) = default;
};

struct Program {
  std::vector<Statement> statements;
  friend bool operator==(const Program&, const Program&) = default;
};

inline constexpr std::string_view kInputVariable = "n";

std::string render(const Program& program, Language language);
/// Language-independent English description, one clause per statement.
std::string summarize(const Program& program);

/// Parses whitespace-tokenized source text. Throws DataError on syntax errors.
Program parse(std::string_view text, Language language);

/// Runs the program with `n` bound to `input` and returns the printed values.
/// Throws DataError when a variable is read before it is assigned.
std::vector<std::uint32_t> run(const Program& program, std::uint32_t input);

/// True when some read happens before the variable's first assignment,
/// following statement order (loop bodies as on their first iteration).
bool has_use_before_assign(const Program& program);

/// Random program with 2-4 top-level statements, at most one loop and at
/// least one print. `buggy` plants exactly one use-before-assign defect.
Program generate_program(util::Rng& rng, bool buggy);

}  // namespace transcoder::data::minilang
