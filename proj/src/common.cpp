// SPDX-License-Identifier: Apache-2.0

#include "semlink/common.hpp"

#include <cctype>
#include <cstdio>

namespace semlink {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Ambiguous: return "ambiguous";
    case ErrorKind::InventoryMismatch: return "inventory_mismatch";
    case ErrorKind::InsufficientSamples: return "insufficient_samples";
    case ErrorKind::MissingBinding: return "missing_binding";
    case ErrorKind::PrimitiveNotInCorpus: return "primitive_not_in_corpus";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::NonFiniteLoss: return "non_finite_loss";
    case ErrorKind::Format: return "format";
  }
  return "unknown";
}

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i > start) {
      out.emplace_back(text.substr(start, i - start));
    }
  }
  return out;
}

std::string join(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) {
      out.push_back(' ');
    }
    out += tokens[i];
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::size_t find_phrase(const Tokens& hay, const Tokens& needle, std::size_t from) {
  if (needle.empty() || needle.size() > hay.size()) {
    return Tokens::size_type(-1);
  }
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    bool hit = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (hay[i + j] != needle[j]) {
        hit = false;
        break;
      }
    }
    if (hit) {
      return i;
    }
  }
  return Tokens::size_type(-1);
}

std::size_t count_phrase(const Tokens& hay, const Tokens& needle) {
  std::size_t n = 0;
  std::size_t pos = find_phrase(hay, needle, 0);
  while (pos != Tokens::size_type(-1)) {
    ++n;
    pos = find_phrase(hay, needle, pos + needle.size());
  }
  return n;
}

Tokens replace_phrase(const Tokens& hay, const Tokens& from, const Tokens& to) {
  Tokens out;
  out.reserve(hay.size());
  std::size_t i = 0;
  std::size_t pos = find_phrase(hay, from, 0);
  while (pos != Tokens::size_type(-1)) {
    out.insert(out.end(), hay.begin() + static_cast<std::ptrdiff_t>(i),
               hay.begin() + static_cast<std::ptrdiff_t>(pos));
    out.insert(out.end(), to.begin(), to.end());
    i = pos + from.size();
    pos = find_phrase(hay, from, i);
  }
  out.insert(out.end(), hay.begin() + static_cast<std::ptrdiff_t>(i), hay.end());
  return out;
}

}  // namespace semlink
