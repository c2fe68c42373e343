// SPDX-License-Identifier: Apache-2.0
//
// Semantic-linking augmentation. A concept inventory declares primitives,
// their variants, one prompt per primitive and the shared target label;
// builders turn (base data, inventory, level) into train/test bundles.

#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/common.hpp"

namespace semlink::linking {

/// Literal slot mark inside prompt token sequences.
inline constexpr std::string_view kSlot = "[z]";

enum class LinkKind { LexicalVariant, CoHyponym, Synonym };
enum class RuleKind { PrimitiveRule, VariantRule };
enum class Scheme { Inductive, Deductive };
enum class Level { Standard, Difficult, Challenging };

std::string_view to_string(LinkKind k) noexcept;
std::string_view to_string(Scheme s) noexcept;
std::string_view to_string(Level l) noexcept;
LinkKind parse_link_kind(std::string_view s);
Scheme parse_scheme(std::string_view s);
Level parse_level(std::string_view s);

struct Prompt {
  Tokens tokens;  // exactly one kSlot
  Tokens target;

  friend bool operator==(const Prompt&, const Prompt&) = default;
};

struct ConceptEntry {
  Tokens primitive;
  std::vector<Tokens> variants;
  Prompt prompt;
  Tokens target_label;
  LinkKind link_kind = LinkKind::LexicalVariant;

  friend bool operator==(const ConceptEntry&, const ConceptEntry&) = default;
};

using Inventory = std::vector<ConceptEntry>;

struct ConceptRule {
  Tokens source;
  Tokens target;
  RuleKind kind = RuleKind::PrimitiveRule;

  Sample as_sample() const { return {source, target}; }
  friend bool operator==(const ConceptRule&, const ConceptRule&) = default;
};

struct BundleMeta {
  Scheme scheme = Scheme::Inductive;
  Level level = Level::Standard;
  std::string inventory_fingerprint;
  std::size_t base_size = 0;
  std::size_t removed_same_context = 0;  // Difficult: prompt-context samples
  std::size_t removed_same_length = 0;   // Challenging: same-length samples
  std::size_t guarded_skips = 0;         // Challenging removals vetoed
  std::size_t augmentation_size = 0;
  std::size_t pool_size = 0;             // replacement pool before subtraction
};

struct AugmentationBundle {
  std::vector<Sample> train;
  std::vector<Sample> test;
  BundleMeta meta;
};

/// [p_0 ... p_{n-1}]: the last token of `primitive` gains "_i".
std::vector<Tokens> make_variants(const Tokens& primitive, std::size_t n);

/// Replaces the single occurrence of `primitive` with the slot mark.
/// Throws NotFound / Ambiguous.
Prompt derive_prompt(const Sample& sample, const Tokens& primitive);

Sample fill_prompt(const Prompt& prompt, const Tokens& filler);

/// Checks the ConceptEntry invariants; throws InventoryMismatch.
void validate(const Inventory& inventory);

std::vector<ConceptRule> concept_rules(const Inventory& inventory,
                                       bool include_primitive_rules);

AugmentationBundle build_inductive(const std::vector<Sample>& base,
                                   const Inventory& inventory, Level level);

AugmentationBundle build_deductive(const std::vector<Sample>& base,
                                   const Inventory& inventory, Level level);

AugmentationBundle build_bundle(const std::vector<Sample>& base,
                                const Inventory& inventory, Scheme scheme,
                                Level level);

/// Replacement augmentation pool: per base sample, per primitive type in it,
/// per variant of that type, all occurrences replaced jointly. Deduplicated,
/// ordered by (base index, entry, variant).
std::vector<Sample> build_replacement_test(const std::vector<Sample>& base,
                                           const Inventory& inventory);

/// `pool` minus every sample present in `train`, order preserved.
std::vector<Sample> subtract(const std::vector<Sample>& pool,
                             const std::vector<Sample>& train);

inline constexpr std::size_t kAllSamples = std::numeric_limits<std::size_t>::max();

/// Drops samples with two or more variant occurrences, keeps all
/// variant-free samples, and keeps min(k, available) seeded picks per
/// variant. Throws InsufficientSamples when a variant has no candidate.
std::vector<Sample> subsample_per_variant(const std::vector<Sample>& train,
                                          const Inventory& inventory,
                                          std::size_t k, std::uint64_t seed);

/// Total variant occurrences and distinct variant types in a source.
struct VariantCount {
  std::size_t occurrences = 0;
  std::size_t distinct = 0;
  std::size_t first_variant = 0;  // flat index into all variants
};

class VariantIndex {
 public:
  explicit VariantIndex(const Inventory& inventory);
  VariantCount count(const Tokens& source) const;
  std::size_t size() const noexcept { return phrases_.size(); }
  const Tokens& phrase(std::size_t i) const { return phrases_[i]; }

 private:
  std::vector<Tokens> phrases_;
};

/// Pooled one-shot protocol: base plus replacement pool, seeded split,
/// multi-variant samples removed from the training side.
struct PoolSplit {
  std::size_t pool_size = 0;
  std::size_t split_train_size = 0;
  std::vector<Sample> train;  // after multi-variant removal
  std::vector<Sample> test;
};

PoolSplit pool_split(const std::vector<Sample>& base, const Inventory& inventory,
                     double train_fraction, std::uint64_t seed);

/// SCAN lexical-variant inventory over the first `num_primitives` of
/// {jump, look, run, walk}, prompt "[z] twice".
Inventory scan_inventory(std::size_t num_primitives,
                         std::size_t variants_per_primitive);

/// Key-value record file: records separated by blank lines.
std::string serialize_inventory(const Inventory& inventory);
Inventory parse_inventory(std::string_view text);
void save_inventory(const std::filesystem::path& path, const Inventory& inventory);
Inventory load_inventory(const std::filesystem::path& path);

std::string fingerprint(const Inventory& inventory);

/// Metadata sidecar (JSON) for a bundle.
std::string meta_json(const BundleMeta& meta, std::size_t train_size,
                      std::size_t test_size);

}  // namespace semlink::linking
