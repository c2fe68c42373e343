// SPDX-License-Identifier: Apache-2.0

#include "semlink/scan_grammar.hpp"

#include <algorithm>

namespace semlink::scan {

namespace {

constexpr std::array<Action, 4> kActions = {Action::Walk, Action::Look,
                                            Action::Run, Action::Jump};
constexpr std::array<Direction, 2> kDirections = {Direction::Left,
                                                  Direction::Right};

std::optional<Action> as_action(std::string_view w) {
  for (Action a : kActions) {
    if (action_word(a) == w) {
      return a;
    }
  }
  return std::nullopt;
}

std::optional<Direction> as_direction(std::string_view w) {
  if (w == "left") return Direction::Left;
  if (w == "right") return Direction::Right;
  return std::nullopt;
}

std::string_view direction_word(Direction d) {
  return d == Direction::Left ? "left" : "right";
}

std::string_view turn_symbol(Direction d) {
  return d == Direction::Left ? "LTURN" : "RTURN";
}

class Parser {
 public:
  explicit Parser(const Tokens& toks) : toks_(toks) {}

  CommandAst command() {
    CommandAst ast;
    ast.first = clause();
    if (at_end()) {
      return ast;
    }
    if (peek() == "and") {
      ast.conjunction = Conjunction::And;
    } else if (peek() == "after") {
      ast.conjunction = Conjunction::After;
    } else {
      fail("expected 'and', 'after' or end of command");
    }
    ++pos_;
    ast.second = clause();
    if (!at_end()) {
      fail("unexpected trailing token");
    }
    return ast;
  }

 private:
  Clause clause() {
    Clause c;
    c.verb = verb();
    if (!at_end()) {
      if (peek() == "twice") {
        c.repetition = Repetition::Twice;
        ++pos_;
      } else if (peek() == "thrice") {
        c.repetition = Repetition::Thrice;
        ++pos_;
      }
    }
    return c;
  }

  VerbPhrase verb() {
    VerbPhrase v;
    if (at_end()) {
      fail("expected a verb");
    }
    bool turn = false;
    if (peek() == "turn") {
      turn = true;
    } else if (auto a = as_action(peek())) {
      v.action = *a;
    } else {
      fail("expected walk, look, run, jump or turn");
    }
    ++pos_;
    // Optional modifier after an action verb; mandatory after 'turn'.
    if (at_end() || !(peek() == "opposite" || peek() == "around" ||
                      as_direction(peek()))) {
      if (turn) {
        fail("'turn' needs a direction");
      }
      v.form = VerbForm::Bare;
      return v;
    }
    if (peek() == "opposite" || peek() == "around") {
      const bool around = peek() == "around";
      ++pos_;
      v.direction = direction();
      if (turn) {
        v.form = around ? VerbForm::TurnAround : VerbForm::TurnOpposite;
      } else {
        v.form = around ? VerbForm::ActionAround : VerbForm::ActionOpposite;
      }
      return v;
    }
    v.direction = direction();
    v.form = turn ? VerbForm::TurnDirection : VerbForm::ActionDirection;
    return v;
  }

  Direction direction() {
    if (at_end()) {
      fail("expected left or right");
    }
    auto d = as_direction(peek());
    if (!d) {
      fail("expected left or right");
    }
    ++pos_;
    return *d;
  }

  bool at_end() const { return pos_ >= toks_.size(); }
  const Token& peek() const { return toks_[pos_]; }

  [[noreturn]] void fail(const std::string& why) const {
    std::string what = "parse error at token " + std::to_string(pos_);
    if (!at_end()) {
      what += " ('" + toks_[pos_] + "')";
    }
    throw ParseError(pos_, what + ": " + why);
  }

  const Tokens& toks_;
  std::size_t pos_ = 0;
};

void append(Tokens& out, const Tokens& part, int times = 1) {
  for (int i = 0; i < times; ++i) {
    out.insert(out.end(), part.begin(), part.end());
  }
}

Tokens interpret_verb(const VerbPhrase& v) {
  const Token turn{turn_symbol(v.direction)};
  const Token act{action_symbol(v.action)};
  switch (v.form) {
    case VerbForm::Bare: return {act};
    case VerbForm::TurnDirection: return {turn};
    case VerbForm::ActionDirection: return {turn, act};
    case VerbForm::TurnOpposite: return {turn, turn};
    case VerbForm::ActionOpposite: return {turn, turn, act};
    case VerbForm::TurnAround: return {turn, turn, turn, turn};
    case VerbForm::ActionAround: {
      Tokens out;
      append(out, {turn, act}, 4);
      return out;
    }
  }
  return {};
}

Tokens render_verb(const VerbPhrase& v) {
  const Token head = v.has_action() ? Token(action_word(v.action)) : Token("turn");
  const Token dir{direction_word(v.direction)};
  switch (v.form) {
    case VerbForm::Bare: return {head};
    case VerbForm::TurnDirection:
    case VerbForm::ActionDirection: return {head, dir};
    case VerbForm::TurnOpposite:
    case VerbForm::ActionOpposite: return {head, "opposite", dir};
    case VerbForm::TurnAround:
    case VerbForm::ActionAround: return {head, "around", dir};
  }
  return {};
}

bool less_tokens(const Sample& a, const Sample& b) {
  return std::lexicographical_compare(a.source.begin(), a.source.end(),
                                      b.source.begin(), b.source.end());
}

}  // namespace

bool VerbPhrase::has_action() const noexcept {
  return form == VerbForm::Bare || form == VerbForm::ActionDirection ||
         form == VerbForm::ActionOpposite || form == VerbForm::ActionAround;
}

bool operator==(const VerbPhrase& a, const VerbPhrase& b) noexcept {
  if (a.form != b.form) return false;
  if (a.has_action() && a.action != b.action) return false;
  if (a.form != VerbForm::Bare && a.direction != b.direction) return false;
  return true;
}

std::string_view action_word(Action a) noexcept {
  switch (a) {
    case Action::Walk: return "walk";
    case Action::Look: return "look";
    case Action::Run: return "run";
    case Action::Jump: return "jump";
  }
  return "";
}

std::string_view action_symbol(Action a) noexcept {
  switch (a) {
    case Action::Walk: return "WALK";
    case Action::Look: return "LOOK";
    case Action::Run: return "RUN";
    case Action::Jump: return "JUMP";
  }
  return "";
}

std::vector<VerbPhrase> all_verb_phrases() {
  std::vector<VerbPhrase> out;
  for (Action a : kActions) {
    out.push_back({VerbForm::Bare, a, Direction::Left});
    for (Direction d : kDirections) {
      out.push_back({VerbForm::ActionDirection, a, d});
      out.push_back({VerbForm::ActionOpposite, a, d});
      out.push_back({VerbForm::ActionAround, a, d});
    }
  }
  for (Direction d : kDirections) {
    out.push_back({VerbForm::TurnDirection, Action::Walk, d});
    out.push_back({VerbForm::TurnOpposite, Action::Walk, d});
    out.push_back({VerbForm::TurnAround, Action::Walk, d});
  }
  return out;
}

std::vector<Sample> enumerate_commands() {
  std::vector<Clause> clauses;
  for (const auto& v : all_verb_phrases()) {
    for (Repetition r : {Repetition::None, Repetition::Twice, Repetition::Thrice}) {
      clauses.push_back({r, v});
    }
  }
  std::vector<Sample> out;
  out.reserve(clauses.size() * (1 + 2 * clauses.size()));
  auto emit = [&](const CommandAst& ast) {
    out.push_back({render(ast), interpret(ast)});
  };
  for (const auto& c : clauses) {
    emit({Conjunction::Single, c, std::nullopt});
  }
  for (Conjunction conj : {Conjunction::And, Conjunction::After}) {
    for (const auto& a : clauses) {
      for (const auto& b : clauses) {
        emit({conj, a, b});
      }
    }
  }
  std::sort(out.begin(), out.end(), less_tokens);
  out.erase(std::unique(out.begin(), out.end(),
                        [](const Sample& a, const Sample& b) {
                          return a.source == b.source;
                        }),
            out.end());
  return out;
}

CommandAst parse(const Tokens& source) { return Parser(source).command(); }

Tokens render(const Clause& clause) {
  Tokens out = render_verb(clause.verb);
  if (clause.repetition == Repetition::Twice) out.emplace_back("twice");
  if (clause.repetition == Repetition::Thrice) out.emplace_back("thrice");
  return out;
}

Tokens render(const CommandAst& ast) {
  Tokens out = render(ast.first);
  if (ast.conjunction != Conjunction::Single && ast.second) {
    out.emplace_back(ast.conjunction == Conjunction::And ? "and" : "after");
    append(out, render(*ast.second));
  }
  return out;
}

Tokens interpret(const Clause& clause) {
  const Tokens once = interpret_verb(clause.verb);
  Tokens out;
  const int times = clause.repetition == Repetition::None    ? 1
                    : clause.repetition == Repetition::Twice ? 2
                                                             : 3;
  append(out, once, times);
  return out;
}

Tokens interpret(const CommandAst& ast) {
  Tokens out = interpret(ast.first);
  if (ast.conjunction == Conjunction::And) {
    append(out, interpret(*ast.second));
  } else if (ast.conjunction == Conjunction::After) {
    Tokens swapped = interpret(*ast.second);
    append(swapped, out);
    return swapped;
  }
  return out;
}

Tokens execute(const Tokens& source) { return interpret(parse(source)); }

}  // namespace semlink::scan
