// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary types: tokens, samples, and the library error type.

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace semlink {

using Token = std::string;
using Tokens = std::vector<Token>;

/// One source sequence paired with one target sequence.
struct Sample {
  Tokens source;
  Tokens target;

  friend auto operator<=>(const Sample&, const Sample&) = default;
  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class ErrorKind {
  Usage,
  Io,
  Parse,
  NotFound,
  Ambiguous,
  InventoryMismatch,
  InsufficientSamples,
  MissingBinding,
  PrimitiveNotInCorpus,
  ShapeMismatch,
  NonFiniteLoss,
  Format,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Grammar violation at a given token position.
class ParseError : public Error {
 public:
  ParseError(std::size_t position, const std::string& what)
      : Error(ErrorKind::Parse, what), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Splits on runs of ASCII whitespace.
Tokens tokenize(std::string_view text);

/// Joins with single spaces.
std::string join(const Tokens& tokens);

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Position of the first contiguous occurrence of `needle` in `hay` at or
/// after `from`, or npos.
std::size_t find_phrase(const Tokens& hay, const Tokens& needle,
                        std::size_t from = 0);

/// Number of non-overlapping occurrences, scanning left to right.
std::size_t count_phrase(const Tokens& hay, const Tokens& needle);

/// Replaces every non-overlapping occurrence of `from` with `to`.
Tokens replace_phrase(const Tokens& hay, const Tokens& from, const Tokens& to);

}  // namespace semlink
