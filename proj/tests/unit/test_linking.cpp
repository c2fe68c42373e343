// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "semlink/linking.hpp"
#include "semlink/sample_io.hpp"
#include "semlink/scan_grammar.hpp"

using namespace semlink;
using namespace semlink::linking;

namespace {

Sample S(const char* src, const char* tgt) { return {tokenize(src), tokenize(tgt)}; }

const std::vector<Sample>& scan_base() {
  static const auto base = scan::enumerate_commands();
  return base;
}

std::set<std::string> keys(const std::vector<Sample>& xs) {
  std::set<std::string> out;
  for (const auto& s : xs) out.insert(join(s.source) + "\t" + join(s.target));
  return out;
}

// Replacement pool computed word by word on strings: for each sample and
// each of jump/look/run/walk present, substitute every occurrence of that
// word with each of its variants.
std::set<std::string> oracle_pool(std::size_t primitives, std::size_t variants) {
  const std::vector<std::string> words = {"jump", "look", "run", "walk"};
  std::set<std::string> out;
  for (const auto& s : scan_base()) {
    for (std::size_t p = 0; p < primitives; ++p) {
      if (std::find(s.source.begin(), s.source.end(), words[p]) == s.source.end()) continue;
      for (std::size_t v = 0; v < variants; ++v) {
        std::string line;
        for (const auto& t : s.source) {
          if (!line.empty()) line += ' ';
          line += t == words[p] ? words[p] + "_" + std::to_string(v) : t;
        }
        out.insert(line + "\t" + join(s.target));
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("make_variants suffixes the last token") {
  CHECK(make_variants(tokenize("jump"), 1) == std::vector<Tokens>{tokenize("jump_0")});
  CHECK(make_variants(tokenize("jump"), 3) ==
        std::vector<Tokens>{tokenize("jump_0"), tokenize("jump_1"), tokenize("jump_2")});
  CHECK(make_variants(tokenize("new york city"), 2) ==
        std::vector<Tokens>{tokenize("new york city_0"), tokenize("new york city_1")});
  CHECK(make_variants(tokenize("jump"), 0).empty());
}

TEST_CASE("derive_prompt and fill_prompt") {
  const Prompt p = derive_prompt(S("jump twice", "JUMP JUMP"), tokenize("jump"));
  CHECK(p.tokens == tokenize("[z] twice"));
  CHECK(p.target == tokenize("JUMP JUMP"));
  CHECK(fill_prompt(p, tokenize("jump_0")) == S("jump_0 twice", "JUMP JUMP"));
  CHECK(fill_prompt(p, tokenize("jump")) == S("jump twice", "JUMP JUMP"));

  const Prompt geo = derive_prompt(S("how many people in new york city", "SELECT"),
                                   tokenize("new york city"));
  CHECK(geo.tokens == tokenize("how many people in [z]"));

  const Prompt adv{tokenize("who teaches [z] ?"), tokenize("T")};
  CHECK(fill_prompt(adv, tokenize("advanced ai techniques")) ==
        S("who teaches advanced ai techniques ?", "T"));

  try {
    derive_prompt(S("jump and jump", "JUMP JUMP"), tokenize("jump"));
    FAIL("expected Ambiguous");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Ambiguous);
  }
  try {
    derive_prompt(S("walk", "WALK"), tokenize("jump"));
    FAIL("expected NotFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotFound);
  }
}

TEST_CASE("inventory validation rejects malformed entries") {
  Inventory inv = scan_inventory(1, 2);
  CHECK_NOTHROW(validate(inv));
  inv[0].variants.push_back(inv[0].variants[0]);
  CHECK_THROWS_AS(validate(inv), Error);
  inv = scan_inventory(1, 2);
  inv[0].prompt.tokens = tokenize("[z] and [z]");
  CHECK_THROWS_AS(validate(inv), Error);
  inv = scan_inventory(1, 2);
  inv[0].variants.push_back(inv[0].primitive);
  CHECK_THROWS_AS(validate(inv), Error);
}

TEST_CASE("replacement pool matches the string-level oracle") {
  const Inventory inv = scan_inventory(4, 10);
  const auto pool = build_replacement_test(scan_base(), inv);
  CHECK(pool.size() == 308280);
  CHECK(keys(pool) == oracle_pool(4, 10));

  const std::set<std::string> k = keys(pool);
  CHECK(k.count("jump_0 and jump_0\tJUMP JUMP"));
  CHECK_FALSE(k.count("jump_0 and jump_1\tJUMP JUMP"));
  CHECK(k.count("jump_3 and walk\tJUMP WALK"));
  CHECK_FALSE(k.count("jump_3 and walk_3\tJUMP WALK"));

  const VariantIndex index(inv);
  const auto base_keys = keys(scan_base());
  for (const auto& s : pool) {
    REQUIRE(index.count(s.source).distinct == 1);
    REQUIRE_FALSE(base_keys.count(join(s.source) + "\t" + join(s.target)));
  }
  CHECK(build_replacement_test({S("turn left", "LTURN")}, inv).empty());
}

TEST_CASE("SCAN inductive and deductive train sizes and identities") {
  const Inventory inv = scan_inventory(4, 10);
  const auto il_std = build_inductive(scan_base(), inv, Level::Standard);
  const auto il_dif = build_inductive(scan_base(), inv, Level::Difficult);
  const auto dl_std = build_deductive(scan_base(), inv, Level::Standard);
  const auto dl_dif = build_deductive(scan_base(), inv, Level::Difficult);

  CHECK(il_std.train.size() == 20910 + 40);
  CHECK(il_dif.train.size() == 20910 + 40 - 4);
  CHECK(dl_std.train.size() == 20910 + 4 + 40);
  CHECK(dl_dif.train.size() == 20910 + 40);
  CHECK(il_std.train.size() - il_dif.train.size() == inv.size());
  CHECK(dl_std.train.size() - dl_dif.train.size() == inv.size());
  CHECK(dl_std.train.size() - il_std.train.size() == inv.size());

  // Reference train sizes, compared within the documented tolerance.
  auto near = [](std::size_t got, long want) { return std::labs(static_cast<long>(got) - want) <= 4; };
  CHECK(near(il_std.train.size(), 20946));
  CHECK(near(il_dif.train.size(), 20942));
  CHECK(near(dl_std.train.size(), 20950));
  CHECK(near(dl_dif.train.size(), 20946));

  for (const auto* b : {&il_std, &il_dif, &dl_std, &dl_dif}) {
    CHECK(b->test.size() == 308240);
    CHECK(b->meta.pool_size == 308280);
    const auto train = keys(b->train);
    for (const auto& s : b->test) REQUIRE_FALSE(train.count(join(s.source) + "\t" + join(s.target)));
  }
  CHECK(il_dif.meta.removed_same_context == 4);
  CHECK(dl_std.meta.augmentation_size == 44);

  const auto rules = concept_rules(inv, true);
  CHECK(std::find(rules.begin(), rules.end(),
                  ConceptRule{tokenize("jump"), tokenize("JUMP"), RuleKind::PrimitiveRule}) != rules.end());
  CHECK(std::find(rules.begin(), rules.end(),
                  ConceptRule{tokenize("jump_0"), tokenize("JUMP"), RuleKind::VariantRule}) != rules.end());
  CHECK_THROWS_AS(build_deductive(scan_base(), inv, Level::Challenging), Error);
}

TEST_CASE("every variant occurs in exactly one standard training sample") {
  const Inventory inv = scan_inventory(4, 10);
  for (auto scheme : {Scheme::Inductive, Scheme::Deductive}) {
    const auto b = build_bundle(scan_base(), inv, scheme, Level::Standard);
    std::map<Token, int> seen;
    for (const auto& s : b.train) {
      for (const auto& t : s.source) {
        if (t.find('_') != std::string::npos) ++seen[t];
      }
    }
    CHECK(seen.size() == 40);
    for (const auto& [t, n] : seen) CHECK(n == 1);
  }
}

TEST_CASE("challenging level matches a brute-force count") {
  const Inventory inv = scan_inventory(4, 10);
  const auto b = build_inductive(scan_base(), inv, Level::Challenging);
  // Brute force: base commands of source length 2 that contain a primitive,
  // minus the four "p twice" prompt contexts already removed.
  const std::set<Token> prims = {"jump", "look", "run", "walk"};
  std::size_t expected = 0;
  for (const auto& s : scan_base()) {
    if (s.source.size() != 2 || s.source[1] == "twice") continue;
    if (prims.count(s.source[0]) || prims.count(s.source[1])) ++expected;
  }
  CHECK(expected == 12);
  CHECK(b.meta.removed_same_length + b.meta.guarded_skips == expected);
  CHECK(b.meta.removed_same_length == 12);
  // The reference sizes imply 14 removals; the length rule gives 12.
  CHECK(std::labs(static_cast<long>(b.meta.removed_same_length) - 14) <= 3);
  CHECK(b.train.size() == 20910 + 40 - 4 - 12);

  std::set<Token> base_src, train_src;
  for (const auto& s : scan_base()) base_src.insert(s.source.begin(), s.source.end());
  for (const auto& s : b.train) train_src.insert(s.source.begin(), s.source.end());
  for (const auto& t : base_src) CHECK(train_src.count(t));
}

TEST_CASE("challenging removal is vetoed when a token would disappear") {
  const std::vector<Sample> base = {S("a x", "A X"), S("a q", "A Q"), S("a r", "A R"),
                                    S("b r", "B R"), S("b x", "B X"), S("a", "A")};
  ConceptEntry e;
  e.primitive = tokenize("a");
  e.variants = {tokenize("a_0")};
  e.prompt = {tokenize("[z] x"), tokenize("A X")};
  e.target_label = tokenize("A");
  const auto b = build_inductive(base, {e}, Level::Challenging);
  // "a q" is the only carrier of q/Q; "a r" can go since "b r" keeps r.
  CHECK(b.meta.removed_same_context == 1);
  CHECK(b.meta.removed_same_length == 1);
  CHECK(b.meta.guarded_skips == 1);
  const auto train = keys(b.train);
  CHECK(train.count("a q\tA Q"));
  CHECK_FALSE(train.count("a r\tA R"));
  CHECK(train.count("a_0 x\tA X"));
}

TEST_CASE("empty inventory leaves the base untouched") {
  const std::vector<Sample> base = {S("jump", "JUMP"), S("walk", "WALK")};
  for (auto level : {Level::Standard, Level::Difficult, Level::Challenging}) {
    const auto b = build_inductive(base, {}, level);
    CHECK(b.train == base);
    CHECK(b.test.empty());
  }
  CHECK(build_deductive(base, {}, Level::Standard).train == base);
}

TEST_CASE("inductive build requires the prompt context in the base") {
  const std::vector<Sample> base = {S("jump", "JUMP")};
  try {
    build_inductive(base, scan_inventory(1, 1), Level::Standard);
    FAIL("expected InventoryMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InventoryMismatch);
  }
}

TEST_CASE("bundles are deterministic") {
  const Inventory inv = scan_inventory(2, 3);
  const auto a = build_inductive(scan_base(), inv, Level::Difficult);
  const auto b = build_inductive(scan_base(), inv, Level::Difficult);
  CHECK(serialize_samples(a.train) == serialize_samples(b.train));
  CHECK(serialize_samples(a.test) == serialize_samples(b.test));
  CHECK(meta_json(a.meta, a.train.size(), a.test.size()) ==
        meta_json(b.meta, b.train.size(), b.test.size()));
}

TEST_CASE("per-variant subsampling") {
  const Inventory inv = scan_inventory(1, 2);
  const std::vector<Sample> train = {
      S("walk", "WALK"),          S("jump_0", "JUMP"),         S("jump_0 twice", "JUMP JUMP"),
      S("jump_0 thrice", "JUMP JUMP JUMP"), S("jump_1 left", "LTURN JUMP"),
      S("jump_0 and jump_1", "JUMP JUMP"),  S("jump_1 and jump_1", "JUMP JUMP")};
  const auto one = subsample_per_variant(train, inv, 1, 7);
  const VariantIndex index(inv);
  std::map<std::size_t, int> per;
  for (const auto& s : one) {
    const auto c = index.count(s.source);
    CHECK(c.occurrences <= 1);
    if (c.occurrences == 1) ++per[c.first_variant];
  }
  CHECK(per[0] == 1);
  CHECK(per[1] == 1);
  CHECK(one.size() == 3);
  CHECK(subsample_per_variant(train, inv, 1, 7) == one);

  const auto all = subsample_per_variant(train, inv, kAllSamples, 7);
  CHECK(all.size() == 5);
  CHECK_THROWS_AS(subsample_per_variant(train, inv, 0, 7), Error);

  try {
    subsample_per_variant({S("walk", "WALK"), S("jump_0", "JUMP")}, inv, 1, 7);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientSamples);
  }
}

TEST_CASE("pool split partitions the pool and drops multi-variant training samples") {
  const std::vector<Sample> base = {S("jump", "JUMP"), S("jump twice", "JUMP JUMP"),
                                    S("jump and walk", "JUMP WALK"), S("walk", "WALK"),
                                    S("jump and jump", "JUMP JUMP")};
  const Inventory inv = scan_inventory(1, 3);
  const auto split = pool_split(base, inv, 0.8, 3);
  CHECK(split.pool_size == 5 + 4 * 3);
  CHECK(split.split_train_size == 13);
  CHECK(split.test.size() == 4);
  const VariantIndex index(inv);
  std::size_t dropped = 0;
  for (const auto& s : split.train) CHECK(index.count(s.source).occurrences <= 1);
  dropped = split.split_train_size - split.train.size();
  CHECK(dropped <= 3);
  const auto again = pool_split(base, inv, 0.8, 3);
  CHECK(again.train == split.train);
  CHECK(again.test == split.test);
  CHECK_THROWS_AS(pool_split(base, inv, 1.0, 3), Error);
}

TEST_CASE("inventory files round trip") {
  Inventory inv = scan_inventory(2, 3);
  inv[1].link_kind = LinkKind::Synonym;
  const std::string text = serialize_inventory(inv);
  CHECK(parse_inventory(text) == inv);
  CHECK(fingerprint(parse_inventory(text)) == fingerprint(inv));
  CHECK(parse_inventory("# comment\n\n" + text) == inv);
  CHECK_THROWS_AS(parse_inventory("primitive: jump\nbogus: 1\n"), Error);
  CHECK_THROWS_AS(parse_inventory("variant: jump_0\n"), Error);
}
