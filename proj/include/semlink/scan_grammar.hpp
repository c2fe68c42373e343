// SPDX-License-Identifier: Apache-2.0
//
// The SCAN command language: exhaustive enumeration of its phrase-structure
// grammar, an unambiguous recursive-descent parser, and the compositional
// interpreter mapping commands to action sequences.
//
//   C   -> S | S and S | S after S
//   S   -> V | V twice | V thrice
//   V   -> U | turn Dir | U Dir | turn opposite Dir | U opposite Dir
//        | turn around Dir | U around Dir
//   U   -> walk | look | run | jump
//   Dir -> left | right

#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "semlink/common.hpp"

namespace semlink::scan {

enum class Conjunction { Single, And, After };
enum class Repetition { None, Twice, Thrice };
enum class VerbForm {
  Bare,            // U
  TurnDirection,   // turn Dir
  ActionDirection, // U Dir
  TurnOpposite,    // turn opposite Dir
  ActionOpposite,  // U opposite Dir
  TurnAround,      // turn around Dir
  ActionAround,    // U around Dir
};
enum class Action { Walk, Look, Run, Jump };
enum class Direction { Left, Right };

struct VerbPhrase {
  VerbForm form = VerbForm::Bare;
  Action action = Action::Walk;  // ignored by the turn forms
  Direction direction = Direction::Left;  // ignored by Bare

  bool has_action() const noexcept;
  friend bool operator==(const VerbPhrase& a, const VerbPhrase& b) noexcept;
};

struct Clause {
  Repetition repetition = Repetition::None;
  VerbPhrase verb;

  friend bool operator==(const Clause&, const Clause&) = default;
};

struct CommandAst {
  Conjunction conjunction = Conjunction::Single;
  Clause first;
  std::optional<Clause> second;  // present iff conjunction != Single

  friend bool operator==(const CommandAst&, const CommandAst&) = default;
};

inline constexpr std::array<std::string_view, 13> kCommandVocabulary = {
    "walk", "look", "run", "jump", "turn", "left", "right",
    "opposite", "around", "twice", "thrice", "and", "after"};

inline constexpr std::array<std::string_view, 6> kActionVocabulary = {
    "WALK", "LOOK", "RUN", "JUMP", "LTURN", "RTURN"};

/// Every grammatical command paired with its interpretation, duplicate-free
/// and sorted lexicographically by source tokens.
std::vector<Sample> enumerate_commands();

/// All 34 verb phrases, in generation order.
std::vector<VerbPhrase> all_verb_phrases();

/// Throws ParseError carrying the first offending token position.
CommandAst parse(const Tokens& source);

Tokens render(const CommandAst& ast);
Tokens render(const Clause& clause);

Tokens interpret(const CommandAst& ast);
Tokens interpret(const Clause& clause);

/// parse + interpret.
Tokens execute(const Tokens& source);

std::string_view action_word(Action a) noexcept;
std::string_view action_symbol(Action a) noexcept;

}  // namespace semlink::scan
