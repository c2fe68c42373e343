// SPDX-License-Identifier: Apache-2.0
//
// Semantic-parsing datasets derived from variable-annotated text-to-SQL
// corpora. A subset of the annotated variable classes is treated as
// hypernyms: they stay abstract in SQL targets, their chosen primitive entity
// fills them in sources, and every other entity bound to the class becomes a
// co-hyponym variant of that primitive.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "semlink/common.hpp"
#include "semlink/linking.hpp"

namespace semlink::sql {

inline constexpr std::string_view kUnknownToken = "<unk>";

struct Binding {
  std::string variable;  // class name, e.g. CITY_NAME
  Tokens entity;         // empty when the corpus gives no value
};

/// One sentence realization of a templated query.
struct AnnotatedQuery {
  Tokens text;
  Tokens sql;
  std::map<std::string, Binding> bindings;  // keyed by placeholder, e.g. city_name0
};

struct DerivationConfig {
  std::vector<std::string> hypernym_vars;  // ordered; drives inventory order
  std::map<std::string, Tokens> primitive_per_var;
  std::map<std::string, Tokens> prompt_templates;  // optional, contain "[z]"
  std::size_t variants_per_primitive = 0;          // 0 keeps every variant
  std::uint64_t variant_seed = 0;
};

struct DerivedDataset {
  std::vector<Sample> samples;
  linking::Inventory inventory;
};

/// Placeholder -> class: "city_name0" -> "CITY_NAME".
std::string variable_class(std::string_view placeholder);

/// Reads the public text-to-SQL JSON layout: a list of records with
/// "sentences" (text + per-sentence "variables"), "sql" (templated strings,
/// the first is used) and "variables" (name, type, example).
std::vector<AnnotatedQuery> parse_corpus(std::string_view json_text);
std::vector<AnnotatedQuery> load_corpus(const std::filesystem::path& path);

/// Throws MissingBinding or PrimitiveNotInCorpus.
DerivedDataset derive_dataset(const std::vector<AnnotatedQuery>& corpus,
                              const DerivationConfig& cfg);

linking::Inventory variant_sampler(const linking::Inventory& inventory,
                                   std::size_t k_per_primitive, std::uint64_t seed);

/// Every distinct bound entity, sorted.
std::vector<Tokens> collect_entities(const std::vector<AnnotatedQuery>& corpus);

/// Identity rules entity -> entity with out-of-vocabulary tokens masked as
/// <unk> on both sides; duplicates dropped, first occurrence kept.
std::vector<linking::ConceptRule> entity_rules(const std::vector<Tokens>& entities,
                                               const std::set<Token>& base_vocab);

std::set<Token> source_vocabulary(const std::vector<Sample>& samples);

DerivationConfig geo_preset();
DerivationConfig adv_preset();
DerivationConfig preset(std::string_view name);

}  // namespace semlink::sql
