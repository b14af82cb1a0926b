#include "transcoder/data/minilang.hpp"

#include <array>
#include <map>
#include <set>
#include <sstream>

#include "transcoder/errors.hpp"

namespace transcoder::data::minilang {

namespace {

constexpr std::array<std::string_view, 4> kVariables = {"a", "b", "c", "d"};

std::string operand_text(const Operand& o) { return o.is_variable() ? o.variable : std::to_string(o.literal); }

std::string_view op_symbol(BinaryOp op, Language language) {
  switch (op) {
    case BinaryOp::Add: return language == Language::Alpha ? "+" : "plus";
    case BinaryOp::Sub: return language == Language::Alpha ? "-" : "minus";
    case BinaryOp::Mul: return language == Language::Alpha ? "*" : "times";
  }
  return "?";
}

std::string_view op_phrase(BinaryOp op) {
  switch (op) {
    case BinaryOp::Add: return "the sum of";
    case BinaryOp::Sub: return "the difference of";
    case BinaryOp::Mul: return "the product of";
  }
  return "?";
}

void render_statement(const Statement& s, Language language, std::vector<std::string>& out) {
  auto expr = [&](const Expr& e) {
    out.push_back(operand_text(e.lhs));
    if (e.op) {
      out.emplace_back(op_symbol(*e.op, language));
      out.push_back(operand_text(e.rhs));
    }
  };
  switch (s.kind) {
    case StatementKind::Assign:
      if (language == Language::Alpha) {
        out.insert(out.end(), {"let", s.variable, "="});
        expr(s.value);
        out.emplace_back(";");
      } else {
        out.insert(out.end(), {s.variable, ":="});
        expr(s.value);
        out.emplace_back(".");
      }
      break;
    case StatementKind::Print:
      if (language == Language::Alpha) {
        out.insert(out.end(), {"print", s.variable, ";"});
      } else {
        out.insert(out.end(), {"show", s.variable, "."});
      }
      break;
    case StatementKind::Loop:
      out.insert(out.end(), {"loop", std::to_string(s.count)});
      out.emplace_back(language == Language::Alpha ? "{" : "times");
      for (const auto& inner : s.body) render_statement(inner, language, out);
      out.emplace_back(language == Language::Alpha ? "}" : "end");
      break;
  }
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

void summarize_statement(const Statement& s, std::vector<std::string>& out) {
  switch (s.kind) {
    case StatementKind::Assign:
      out.insert(out.end(), {s.variable, "becomes"});
      if (s.value.op) {
        std::istringstream phrase{std::string(op_phrase(*s.value.op))};
        for (std::string w; phrase >> w;) out.push_back(w);
        out.insert(out.end(), {operand_text(s.value.lhs), "and", operand_text(s.value.rhs)});
      } else {
        out.push_back(operand_text(s.value.lhs));
      }
      break;
    case StatementKind::Print:
      out.insert(out.end(), {"output", s.variable});
      break;
    case StatementKind::Loop:
      out.insert(out.end(), {"repeat", std::to_string(s.count), "times", ":"});
      for (std::size_t i = 0; i < s.body.size(); ++i) {
        if (i > 0) out.emplace_back("then");
        summarize_statement(s.body[i], out);
      }
      out.emplace_back("done");
      break;
  }
}

// Recursive-descent parser over whitespace tokens.
class Parser {
 public:
  Parser(std::string_view text, Language language) : language_(language) {
    std::istringstream in{std::string(text)};
    for (std::string t; in >> t;) tokens_.push_back(t);
  }

  Program program() {
    Program p;
    while (!at_end()) p.statements.push_back(statement(false));
    if (p.statements.empty()) fail("empty program");
    return p;
  }

 private:
  [[nodiscard]] bool at_end() const { return pos_ >= tokens_.size(); }
  [[nodiscard]] const std::string& peek() const {
    static const std::string kEnd = "<end>";
    return at_end() ? kEnd : tokens_[pos_];
  }
  std::string next() {
    if (at_end()) fail("unexpected end of input");
    return tokens_[pos_++];
  }
  void expect(std::string_view token) {
    const auto got = next();
    if (got != token) fail("expected '" + std::string(token) + "', got '" + got + "'");
  }
  [[noreturn]] void fail(const std::string& message) const {
    throw DataError(std::string(to_string(language_)) + " parse error at token " + std::to_string(pos_) + ": " +
                    message);
  }

  static bool is_variable_name(const std::string& t) {
    if (t == kInputVariable) return true;
    for (auto v : kVariables)
      if (t == v) return true;
    return false;
  }

  std::string variable() {
    auto t = next();
    if (!is_variable_name(t)) fail("expected a variable, got '" + t + "'");
    return t;
  }

  std::uint32_t number() {
    auto t = next();
    if (t.empty() || t.size() > 9 || t.find_first_not_of("0123456789") != std::string::npos) {
      fail("expected a number, got '" + t + "'");
    }
    return static_cast<std::uint32_t>(std::stoul(t));
  }

  Operand operand() {
    if (is_variable_name(peek())) return Operand{next(), 0};
    return Operand{"", number()};
  }

  std::optional<BinaryOp> binary_op() {
    const auto& t = peek();
    const std::array<BinaryOp, 3> ops = {BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul};
    for (auto op : ops) {
      if (t == op_symbol(op, language_)) {
        ++pos_;
        return op;
      }
    }
    return std::nullopt;
  }

  Expr expr() {
    Expr e;
    e.lhs = operand();
    e.op = binary_op();
    if (e.op) e.rhs = operand();
    return e;
  }

  Statement statement(bool in_loop) {
    Statement s;
    const bool alpha = language_ == Language::Alpha;
    const std::string terminator = alpha ? ";" : ".";
    if (peek() == "loop") {
      if (in_loop) fail("nested loops are not supported");
      ++pos_;
      s.kind = StatementKind::Loop;
      s.count = number();
      expect(alpha ? "{" : "times");
      const std::string close = alpha ? "}" : "end";
      while (peek() != close) {
        if (at_end()) fail("unterminated loop");
        s.body.push_back(statement(true));
      }
      ++pos_;
      if (s.body.empty()) fail("empty loop body");
      return s;
    }
    if (alpha) {
      if (peek() == "print") {
        ++pos_;
        s.kind = StatementKind::Print;
        s.variable = variable();
      } else {
        expect("let");
        s.kind = StatementKind::Assign;
        s.variable = variable();
        expect("=");
        s.value = expr();
      }
    } else {
      if (peek() == "show") {
        ++pos_;
        s.kind = StatementKind::Print;
        s.variable = variable();
      } else {
        s.kind = StatementKind::Assign;
        s.variable = variable();
        expect(":=");
        s.value = expr();
      }
    }
    if (s.kind == StatementKind::Assign && s.variable == kInputVariable) fail("cannot assign the input variable");
    expect(terminator);
    return s;
  }

  Language language_;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

class Interpreter {
 public:
  explicit Interpreter(std::uint32_t input) { env_[std::string(kInputVariable)] = input; }

  void exec(const Statement& s) {
    switch (s.kind) {
      case StatementKind::Assign:
        env_[s.variable] = eval(s.value);
        break;
      case StatementKind::Print:
        output_.push_back(read(s.variable));
        break;
      case StatementKind::Loop:
        for (std::uint32_t i = 0; i < s.count; ++i)
          for (const auto& inner : s.body) exec(inner);
        break;
    }
  }

  std::vector<std::uint32_t> output_;

 private:
  std::uint32_t read(const std::string& name) const {
    const auto it = env_.find(name);
    if (it == env_.end()) throw DataError("variable '" + name + "' read before assignment");
    return it->second;
  }
  std::uint32_t value(const Operand& o) const { return o.is_variable() ? read(o.variable) : o.literal; }
  std::uint32_t eval(const Expr& e) const {
    const std::uint32_t lhs = value(e.lhs);
    if (!e.op) return lhs;
    const std::uint32_t rhs = value(e.rhs);
    switch (*e.op) {
      case BinaryOp::Add: return lhs + rhs;
      case BinaryOp::Sub: return lhs - rhs;
      case BinaryOp::Mul: return lhs * rhs;
    }
    return 0;
  }

  std::map<std::string, std::uint32_t> env_;
};

// Visits every read slot in execution order of a first pass.
template <typename Visitor>
void walk_reads(std::vector<Statement>& statements, std::set<std::string>& assigned, Visitor&& visit) {
  for (auto& s : statements) {
    switch (s.kind) {
      case StatementKind::Assign:
        if (s.value.lhs.is_variable()) visit(s.value.lhs.variable, assigned);
        if (s.value.op && s.value.rhs.is_variable()) visit(s.value.rhs.variable, assigned);
        assigned.insert(s.variable);
        break;
      case StatementKind::Print:
        visit(s.variable, assigned);
        break;
      case StatementKind::Loop:
        walk_reads(s.body, assigned, visit);
        break;
    }
  }
}

Operand random_operand(util::Rng& rng, const std::vector<std::string>& readable) {
  if (rng.bernoulli(0.35)) return Operand{"", static_cast<std::uint32_t>(rng.below(10))};
  return Operand{readable[rng.below(readable.size())], 0};
}

Statement random_simple(util::Rng& rng, std::vector<std::string>& readable, bool allow_print) {
  Statement s;
  if (allow_print && rng.bernoulli(0.35)) {
    s.kind = StatementKind::Print;
    s.variable = readable[rng.below(readable.size())];
    return s;
  }
  s.kind = StatementKind::Assign;
  s.variable = std::string(kVariables[rng.below(kVariables.size())]);
  s.value.lhs = random_operand(rng, readable);
  if (rng.bernoulli(0.6)) {
    s.value.op = static_cast<BinaryOp>(rng.below(3));
    s.value.rhs = random_operand(rng, readable);
  }
  if (std::find(readable.begin(), readable.end(), s.variable) == readable.end()) readable.push_back(s.variable);
  return s;
}

bool contains_print(const std::vector<Statement>& statements) {
  for (const auto& s : statements) {
    if (s.kind == StatementKind::Print) return true;
    if (s.kind == StatementKind::Loop && contains_print(s.body)) return true;
  }
  return false;
}

}  // namespace

std::string_view to_string(Language language) { return language == Language::Alpha ? "alpha" : "beta"; }

Language parse_language(std::string_view name) {
  if (name == "alpha") return Language::Alpha;
  if (name == "beta") return Language::Beta;
  throw ConfigError("unknown mini-language '" + std::string(name) + "' (expected alpha or beta)");
}

Language other(Language language) { return language == Language::Alpha ? Language::Beta : Language::Alpha; }

std::string render(const Program& program, Language language) {
  std::vector<std::string> tokens;
  for (const auto& s : program.statements) render_statement(s, language, tokens);
  return join(tokens);
}

std::string summarize(const Program& program) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < program.statements.size(); ++i) {
    if (i > 0) words.emplace_back("then");
    summarize_statement(program.statements[i], words);
  }
  return join(words);
}

Program parse(std::string_view text, Language language) { return Parser(text, language).program(); }

std::vector<std::uint32_t> run(const Program& program, std::uint32_t input) {
  Interpreter interp(input);
  for (const auto& s : program.statements) interp.exec(s);
  return interp.output_;
}

bool has_use_before_assign(const Program& program) {
  auto copy = program.statements;
  std::set<std::string> assigned{std::string(kInputVariable)};
  bool defect = false;
  walk_reads(copy, assigned, [&](std::string& name, const std::set<std::string>& live) {
    if (!live.contains(name)) defect = true;
  });
  return defect;
}

Program generate_program(util::Rng& rng, bool buggy) {
  for (;;) {
    Program p;
    std::vector<std::string> readable{std::string(kInputVariable)};
    const auto n_statements = 2 + rng.below(3);
    bool used_loop = false;
    for (std::uint64_t i = 0; i < n_statements; ++i) {
      if (!used_loop && i > 0 && rng.bernoulli(0.3)) {
        Statement loop;
        loop.kind = StatementKind::Loop;
        loop.count = static_cast<std::uint32_t>(2 + rng.below(3));
        const auto body = 1 + rng.below(2);
        for (std::uint64_t j = 0; j < body; ++j) loop.body.push_back(random_simple(rng, readable, true));
        p.statements.push_back(std::move(loop));
        used_loop = true;
      } else {
        p.statements.push_back(random_simple(rng, readable, i > 0));
      }
    }
    if (!contains_print(p.statements)) {
      Statement print;
      print.kind = StatementKind::Print;
      print.variable = readable[rng.below(readable.size())];
      p.statements.push_back(print);
    }
    if (!buggy) return p;

    // Plant one defect: pick a read slot that has some variable still
    // unassigned at that point and redirect it there.
    std::vector<std::pair<std::string*, std::vector<std::string>>> slots;
    std::set<std::string> assigned{std::string(kInputVariable)};
    walk_reads(p.statements, assigned, [&](std::string& name, const std::set<std::string>& live) {
      std::vector<std::string> candidates;
      for (auto v : kVariables)
        if (!live.contains(std::string(v))) candidates.emplace_back(v);
      if (!candidates.empty()) slots.emplace_back(&name, std::move(candidates));
    });
    if (slots.empty()) continue;
    auto& [slot, candidates] = slots[rng.below(slots.size())];
    *slot = candidates[rng.below(candidates.size())];
    return p;
  }
}

}  // namespace transcoder::data::minilang
