// SPDX-License-Identifier: Apache-2.0

#include "semlink/linking.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "semlink/rng.hpp"
#include "semlink/sample_io.hpp"
#include "semlink/scan_grammar.hpp"

namespace semlink::linking {

namespace {

constexpr std::size_t npos = Tokens::size_type(-1);

std::string sample_key(const Sample& s) {
  std::string k = join(s.source);
  k.push_back('\t');
  k += join(s.target);
  return k;
}

class SampleSet {
 public:
  SampleSet() = default;
  explicit SampleSet(const std::vector<Sample>& samples) {
    keys_.reserve(samples.size() * 2);
    for (const auto& s : samples) insert(s);
  }
  bool insert(const Sample& s) { return keys_.insert(sample_key(s)).second; }
  bool contains(const Sample& s) const { return keys_.count(sample_key(s)) > 0; }

 private:
  std::unordered_set<std::string> keys_;
};

std::vector<Sample> dedup(std::vector<Sample> samples) {
  SampleSet seen;
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    if (seen.insert(s)) out.push_back(std::move(s));
  }
  return out;
}

void require_contexts(const std::vector<Sample>& base, const Inventory& inventory) {
  const SampleSet base_set(base);
  for (const auto& e : inventory) {
    const Sample context = fill_prompt(e.prompt, e.primitive);
    if (!base_set.contains(context)) {
      throw Error(ErrorKind::InventoryMismatch,
                  "prompt context '" + join(context.source) + "' for primitive '" +
                      join(e.primitive) + "' is not in the base data");
    }
  }
}

// Token occurrence counts over a training list, split by side.
struct TokenCounts {
  std::unordered_map<Token, std::size_t> source;
  std::unordered_map<Token, std::size_t> target;

  void add(const Sample& s) {
    for (const auto& t : s.source) ++source[t];
    for (const auto& t : s.target) ++target[t];
  }
  void remove(const Sample& s) {
    for (const auto& t : s.source) --source[t];
    for (const auto& t : s.target) --target[t];
  }

  // Would removing `s` leave any of its tokens with zero occurrences?
  bool removal_safe(const Sample& s) const {
    std::map<Token, std::size_t> need_src, need_tgt;
    for (const auto& t : s.source) ++need_src[t];
    for (const auto& t : s.target) ++need_tgt[t];
    for (const auto& [t, n] : need_src) {
      if (source.at(t) <= n) return false;
    }
    for (const auto& [t, n] : need_tgt) {
      if (target.at(t) <= n) return false;
    }
    return true;
  }
};

}  // namespace

std::string_view to_string(LinkKind k) noexcept {
  switch (k) {
    case LinkKind::LexicalVariant: return "lexical_variant";
    case LinkKind::CoHyponym: return "co_hyponym";
    case LinkKind::Synonym: return "synonym";
  }
  return "";
}

std::string_view to_string(Scheme s) noexcept {
  return s == Scheme::Inductive ? "il" : "dl";
}

std::string_view to_string(Level l) noexcept {
  switch (l) {
    case Level::Standard: return "standard";
    case Level::Difficult: return "difficult";
    case Level::Challenging: return "challenging";
  }
  return "";
}

LinkKind parse_link_kind(std::string_view s) {
  if (s == "lexical_variant") return LinkKind::LexicalVariant;
  if (s == "co_hyponym") return LinkKind::CoHyponym;
  if (s == "synonym") return LinkKind::Synonym;
  throw Error(ErrorKind::Format, "unknown link kind '" + std::string(s) + "'");
}

Scheme parse_scheme(std::string_view s) {
  if (s == "il") return Scheme::Inductive;
  if (s == "dl") return Scheme::Deductive;
  throw Error(ErrorKind::Usage, "unknown scheme '" + std::string(s) + "' (il|dl)");
}

Level parse_level(std::string_view s) {
  if (s == "standard") return Level::Standard;
  if (s == "difficult") return Level::Difficult;
  if (s == "challenging") return Level::Challenging;
  throw Error(ErrorKind::Usage, "unknown level '" + std::string(s) +
                                    "' (standard|difficult|challenging)");
}

std::vector<Tokens> make_variants(const Tokens& primitive, std::size_t n) {
  if (primitive.empty()) {
    throw Error(ErrorKind::Usage, "make_variants: empty primitive");
  }
  std::vector<Tokens> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tokens v = primitive;
    v.back() += "_" + std::to_string(i);
    out.push_back(std::move(v));
  }
  return out;
}

Prompt derive_prompt(const Sample& sample, const Tokens& primitive) {
  const std::size_t pos = find_phrase(sample.source, primitive);
  if (pos == npos) {
    throw Error(ErrorKind::NotFound,
                "primitive '" + join(primitive) + "' not in '" + join(sample.source) + "'");
  }
  if (find_phrase(sample.source, primitive, pos + 1) != npos) {
    throw Error(ErrorKind::Ambiguous, "primitive '" + join(primitive) +
                                          "' occurs more than once in '" +
                                          join(sample.source) + "'");
  }
  Prompt p;
  p.tokens.assign(sample.source.begin(), sample.source.begin() + static_cast<std::ptrdiff_t>(pos));
  p.tokens.emplace_back(kSlot);
  p.tokens.insert(p.tokens.end(),
                  sample.source.begin() + static_cast<std::ptrdiff_t>(pos + primitive.size()),
                  sample.source.end());
  p.target = sample.target;
  return p;
}

Sample fill_prompt(const Prompt& prompt, const Tokens& filler) {
  Sample s;
  for (const auto& t : prompt.tokens) {
    if (t == kSlot) {
      s.source.insert(s.source.end(), filler.begin(), filler.end());
    } else {
      s.source.push_back(t);
    }
  }
  s.target = prompt.target;
  return s;
}

void validate(const Inventory& inventory) {
  for (const auto& e : inventory) {
    const std::string who = "concept '" + join(e.primitive) + "'";
    if (e.primitive.empty()) {
      throw Error(ErrorKind::InventoryMismatch, "concept with empty primitive");
    }
    if (e.target_label.empty()) {
      throw Error(ErrorKind::InventoryMismatch, who + ": empty target label");
    }
    if (std::count(e.prompt.tokens.begin(), e.prompt.tokens.end(), Token(kSlot)) != 1) {
      throw Error(ErrorKind::InventoryMismatch, who + ": prompt needs exactly one slot");
    }
    if (e.prompt.target.empty()) {
      throw Error(ErrorKind::InventoryMismatch, who + ": empty prompt target");
    }
    std::vector<Tokens> sorted = e.variants;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw Error(ErrorKind::InventoryMismatch, who + ": duplicate variants");
    }
    for (const auto& v : e.variants) {
      if (v.empty() || v == e.primitive) {
        throw Error(ErrorKind::InventoryMismatch,
                    who + ": variant empty or equal to primitive");
      }
    }
  }
}

std::vector<ConceptRule> concept_rules(const Inventory& inventory,
                                       bool include_primitive_rules) {
  std::vector<ConceptRule> rules;
  if (include_primitive_rules) {
    for (const auto& e : inventory) {
      rules.push_back({e.primitive, e.target_label, RuleKind::PrimitiveRule});
    }
  }
  for (const auto& e : inventory) {
    for (const auto& v : e.variants) {
      rules.push_back({v, e.target_label, RuleKind::VariantRule});
    }
  }
  return rules;
}

std::vector<Sample> build_replacement_test(const std::vector<Sample>& base,
                                           const Inventory& inventory) {
  SampleSet seen;
  std::vector<Sample> out;
  for (const auto& s : base) {
    for (const auto& e : inventory) {
      if (find_phrase(s.source, e.primitive) == npos) continue;
      for (const auto& v : e.variants) {
        Sample r{replace_phrase(s.source, e.primitive, v), s.target};
        if (seen.insert(r)) out.push_back(std::move(r));
      }
    }
  }
  return out;
}

std::vector<Sample> subtract(const std::vector<Sample>& pool,
                             const std::vector<Sample>& train) {
  const SampleSet train_set(train);
  std::vector<Sample> out;
  out.reserve(pool.size());
  for (const auto& s : pool) {
    if (!train_set.contains(s)) out.push_back(s);
  }
  return out;
}

AugmentationBundle build_inductive(const std::vector<Sample>& base,
                                   const Inventory& inventory, Level level) {
  validate(inventory);
  require_contexts(base, inventory);

  AugmentationBundle b;
  b.meta.scheme = Scheme::Inductive;
  b.meta.level = level;
  b.meta.inventory_fingerprint = fingerprint(inventory);
  b.meta.base_size = base.size();

  std::vector<Sample> aug;
  for (const auto& e : inventory) {
    for (const auto& v : e.variants) aug.push_back(fill_prompt(e.prompt, v));
  }
  aug = dedup(std::move(aug));
  b.meta.augmentation_size = aug.size();

  std::vector<char> keep(base.size(), 1);
  if (level != Level::Standard) {
    SampleSet contexts;
    for (const auto& e : inventory) contexts.insert(fill_prompt(e.prompt, e.primitive));
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (contexts.contains(base[i])) {
        keep[i] = 0;
        ++b.meta.removed_same_context;
      }
    }
  }
  if (level == Level::Challenging) {
    TokenCounts counts;
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (keep[i]) counts.add(base[i]);
    }
    for (const auto& s : aug) counts.add(s);

    for (std::size_t i = 0; i < base.size(); ++i) {
      if (!keep[i]) continue;
      const auto& src = base[i].source;
      bool candidate = false;
      for (const auto& e : inventory) {
        if (find_phrase(src, e.primitive) == npos) continue;
        for (const auto& v : e.variants) {
          if (fill_prompt(e.prompt, v).source.size() == src.size()) {
            candidate = true;
            break;
          }
        }
        if (candidate) break;
      }
      if (!candidate) continue;
      if (counts.removal_safe(base[i])) {
        keep[i] = 0;
        counts.remove(base[i]);
        ++b.meta.removed_same_length;
      } else {
        ++b.meta.guarded_skips;
      }
    }
  }

  for (std::size_t i = 0; i < base.size(); ++i) {
    if (keep[i]) b.train.push_back(base[i]);
  }
  b.train.insert(b.train.end(), aug.begin(), aug.end());

  const auto pool = build_replacement_test(base, inventory);
  b.meta.pool_size = pool.size();
  b.test = subtract(pool, b.train);
  return b;
}

AugmentationBundle build_deductive(const std::vector<Sample>& base,
                                   const Inventory& inventory, Level level) {
  if (level == Level::Challenging) {
    throw Error(ErrorKind::Usage, "deductive learning has no challenging level");
  }
  validate(inventory);

  AugmentationBundle b;
  b.meta.scheme = Scheme::Deductive;
  b.meta.level = level;
  b.meta.inventory_fingerprint = fingerprint(inventory);
  b.meta.base_size = base.size();

  std::vector<Sample> rules;
  for (const auto& r : concept_rules(inventory, level == Level::Standard)) {
    rules.push_back(r.as_sample());
  }
  rules = dedup(std::move(rules));
  b.meta.augmentation_size = rules.size();

  // Rules are appended as-is, even when one equals a base sample.
  b.train = base;
  b.train.insert(b.train.end(), rules.begin(), rules.end());

  const auto pool = build_replacement_test(base, inventory);
  b.meta.pool_size = pool.size();
  b.test = subtract(pool, b.train);
  return b;
}

AugmentationBundle build_bundle(const std::vector<Sample>& base,
                                const Inventory& inventory, Scheme scheme,
                                Level level) {
  return scheme == Scheme::Inductive ? build_inductive(base, inventory, level)
                                     : build_deductive(base, inventory, level);
}

VariantIndex::VariantIndex(const Inventory& inventory) {
  for (const auto& e : inventory) {
    for (const auto& v : e.variants) phrases_.push_back(v);
  }
}

VariantCount VariantIndex::count(const Tokens& source) const {
  VariantCount c;
  std::size_t first = npos;
  for (std::size_t vi = 0; vi < phrases_.size(); ++vi) {
    const std::size_t n = count_phrase(source, phrases_[vi]);
    if (n == 0) continue;
    c.occurrences += n;
    ++c.distinct;
    if (first == npos) first = vi;
  }
  c.first_variant = first == npos ? 0 : first;
  return c;
}

std::vector<Sample> subsample_per_variant(const std::vector<Sample>& train,
                                          const Inventory& inventory,
                                          std::size_t k, std::uint64_t seed) {
  if (k == 0) {
    throw Error(ErrorKind::Usage, "subsample_per_variant: k must be >= 1");
  }
  const VariantIndex index(inventory);
  std::vector<char> keep(train.size(), 0);
  std::vector<std::vector<std::size_t>> candidates(index.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const VariantCount c = index.count(train[i].source);
    if (c.occurrences == 0) {
      keep[i] = 1;
    } else if (c.occurrences == 1) {
      candidates[c.first_variant].push_back(i);
    }
  }
  Rng rng(seed);
  for (std::size_t vi = 0; vi < index.size(); ++vi) {
    const auto& cand = candidates[vi];
    if (cand.empty()) {
      throw Error(ErrorKind::InsufficientSamples,
                  "variant '" + join(index.phrase(vi)) + "' has no single-variant sample");
    }
    for (std::size_t pick : rng.choose(cand.size(), k)) keep[cand[pick]] = 1;
  }
  std::vector<Sample> out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (keep[i]) out.push_back(train[i]);
  }
  return out;
}

PoolSplit pool_split(const std::vector<Sample>& base, const Inventory& inventory,
                     double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::Usage, "train fraction must lie in (0, 1)");
  }
  std::vector<Sample> pool = base;
  const auto replaced = build_replacement_test(base, inventory);
  pool.insert(pool.end(), replaced.begin(), replaced.end());
  pool = dedup(std::move(pool));

  PoolSplit split;
  split.pool_size = pool.size();
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(pool.size())));
  std::vector<char> in_train(pool.size(), 0);
  for (std::size_t i = 0; i < n_train; ++i) in_train[order[i]] = 1;
  split.split_train_size = n_train;

  const VariantIndex index(inventory);
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!in_train[i]) {
      split.test.push_back(pool[i]);
    } else if (index.count(pool[i].source).occurrences <= 1) {
      split.train.push_back(pool[i]);
    }
  }
  return split;
}

Inventory scan_inventory(std::size_t num_primitives,
                         std::size_t variants_per_primitive) {
  static const std::vector<Token> primitives = {"jump", "look", "run", "walk"};
  if (num_primitives < 1 || num_primitives > primitives.size()) {
    throw Error(ErrorKind::Usage, "SCAN supports 1 to 4 primitives");
  }
  Inventory inv;
  for (std::size_t i = 0; i < num_primitives; ++i) {
    ConceptEntry e;
    e.primitive = {primitives[i]};
    e.variants = make_variants(e.primitive, variants_per_primitive);
    e.prompt.tokens = {Token(kSlot), "twice"};
    e.prompt.target = scan::execute({primitives[i], "twice"});
    e.target_label = scan::execute(e.primitive);
    e.link_kind = LinkKind::LexicalVariant;
    inv.push_back(std::move(e));
  }
  return inv;
}

std::string serialize_inventory(const Inventory& inventory) {
  std::ostringstream os;
  for (std::size_t i = 0; i < inventory.size(); ++i) {
    const auto& e = inventory[i];
    if (i) os << '\n';
    os << "primitive: " << join(e.primitive) << '\n';
    for (const auto& v : e.variants) os << "variant: " << join(v) << '\n';
    os << "prompt: " << join(e.prompt.tokens) << '\n';
    os << "prompt_target: " << join(e.prompt.target) << '\n';
    os << "target_label: " << join(e.target_label) << '\n';
    os << "link_kind: " << to_string(e.link_kind) << '\n';
  }
  return os.str();
}

Inventory parse_inventory(std::string_view text) {
  Inventory inv;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  ConceptEntry cur;
  bool open = false;
  auto close = [&] {
    if (!open) return;
    if (cur.primitive.empty()) {
      throw Error(ErrorKind::Format, "inventory record without primitive");
    }
    inv.push_back(std::move(cur));
    cur = ConceptEntry{};
    open = false;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (tokenize(line).empty()) {
      close();
      continue;
    }
    if (line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorKind::Format,
                  "inventory line " + std::to_string(lineno) + ": expected 'key: value'");
    }
    const std::string key = join(tokenize(std::string_view(line).substr(0, colon)));
    const Tokens value = tokenize(std::string_view(line).substr(colon + 1));
    open = true;
    if (key == "primitive") {
      cur.primitive = value;
    } else if (key == "variant") {
      cur.variants.push_back(value);
    } else if (key == "prompt") {
      cur.prompt.tokens = value;
    } else if (key == "prompt_target") {
      cur.prompt.target = value;
    } else if (key == "target_label") {
      cur.target_label = value;
    } else if (key == "link_kind") {
      cur.link_kind = parse_link_kind(join(value));
    } else {
      throw Error(ErrorKind::Format, "inventory line " + std::to_string(lineno) +
                                         ": unknown key '" + key + "'");
    }
  }
  close();
  validate(inv);
  return inv;
}

void save_inventory(const std::filesystem::path& path, const Inventory& inventory) {
  write_file(path, serialize_inventory(inventory));
}

Inventory load_inventory(const std::filesystem::path& path) {
  return parse_inventory(read_file(path));
}

std::string fingerprint(const Inventory& inventory) {
  return hex64(fnv1a64(serialize_inventory(inventory)));
}

std::string meta_json(const BundleMeta& meta, std::size_t train_size,
                      std::size_t test_size) {
  nlohmann::ordered_json j;
  j["scheme"] = to_string(meta.scheme);
  j["level"] = to_string(meta.level);
  j["inventory_fingerprint"] = meta.inventory_fingerprint;
  j["base_size"] = meta.base_size;
  j["augmentation_size"] = meta.augmentation_size;
  j["removed_same_context"] = meta.removed_same_context;
  j["removed_same_length"] = meta.removed_same_length;
  j["guarded_skips"] = meta.guarded_skips;
  j["pool_size"] = meta.pool_size;
  j["train_size"] = train_size;
  j["test_size"] = test_size;
  return j.dump(2) + "\n";
}

}  // namespace semlink::linking
