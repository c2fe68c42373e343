// SPDX-License-Identifier: Apache-2.0

#include "semlink/sql_datasets.hpp"

#include <algorithm>
#include <cctype>

#include <json.hpp>

#include "semlink/rng.hpp"
#include "semlink/sample_io.hpp"

namespace semlink::sql {

namespace {

using nlohmann::json;

std::string strip_quotes(std::string_view tok) {
  if (tok.size() >= 2 && (tok.front() == '"' || tok.front() == '\'') &&
      tok.back() == tok.front()) {
    return std::string(tok.substr(1, tok.size() - 2));
  }
  return std::string(tok);
}

// SQL placeholders may be quoted and wrapped for LIKE, as in "%topic0%".
std::string placeholder_of(std::string_view tok) {
  std::string p = strip_quotes(tok);
  if (p.size() >= 2 && p.front() == '%' && p.back() == '%') p = p.substr(1, p.size() - 2);
  return p;
}

const Binding* lookup(const AnnotatedQuery& q, const Token& tok) {
  auto it = q.bindings.find(placeholder_of(tok));
  return it == q.bindings.end() ? nullptr : &it->second;
}

const Tokens& bound_entity(const Binding& b, const std::string& placeholder) {
  if (b.entity.empty()) {
    throw Error(ErrorKind::MissingBinding,
                "placeholder '" + placeholder + "' has no bound entity");
  }
  return b.entity;
}

bool contains_once(const Tokens& hay, const Tokens& needle) {
  return count_phrase(hay, needle) == 1;
}

}  // namespace

std::string variable_class(std::string_view placeholder) {
  std::size_t end = placeholder.size();
  while (end > 0 && std::isdigit(static_cast<unsigned char>(placeholder[end - 1]))) {
    --end;
  }
  std::string out(placeholder.substr(0, end));
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::vector<AnnotatedQuery> parse_corpus(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("corpus is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw Error(ErrorKind::Format, "corpus must be a JSON array of query records");
  }
  std::vector<AnnotatedQuery> out;
  try {
    for (const auto& rec : doc) {
      const auto& sqls = rec.at("sql");
      if (!sqls.is_array() || sqls.empty()) {
        throw Error(ErrorKind::Format, "query record without sql");
      }
      const Tokens sql = tokenize(sqls.at(0).get<std::string>());

      std::map<std::string, Binding> declared;
      if (rec.contains("variables")) {
        for (const auto& v : rec.at("variables")) {
          Binding b;
          const auto name = v.at("name").get<std::string>();
          b.variable = variable_class(v.value("type", name));
          b.entity = tokenize(v.value("example", std::string()));
          declared[name] = std::move(b);
        }
      }
      for (const auto& s : rec.at("sentences")) {
        AnnotatedQuery q;
        q.text = tokenize(s.at("text").get<std::string>());
        q.sql = sql;
        q.bindings = declared;
        if (s.contains("variables")) {
          for (const auto& [name, value] : s.at("variables").items()) {
            auto& b = q.bindings[name];
            if (b.variable.empty()) b.variable = variable_class(name);
            const Tokens entity = tokenize(value.get<std::string>());
            if (!entity.empty()) b.entity = entity;
          }
        }
        out.push_back(std::move(q));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Format, std::string("malformed corpus record: ") + e.what());
  }
  return out;
}

std::vector<AnnotatedQuery> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_file(path));
}

DerivedDataset derive_dataset(const std::vector<AnnotatedQuery>& corpus,
                              const DerivationConfig& cfg) {
  if (cfg.hypernym_vars.empty()) {
    throw Error(ErrorKind::Usage, "derivation needs at least one hypernym variable");
  }
  const std::set<std::string> hypernyms(cfg.hypernym_vars.begin(), cfg.hypernym_vars.end());
  for (const auto& var : cfg.hypernym_vars) {
    if (!cfg.primitive_per_var.count(var)) {
      throw Error(ErrorKind::Usage, "no primitive chosen for " + var);
    }
  }

  DerivedDataset out;
  std::map<std::string, std::set<Tokens>> values;  // hypernym class -> entities
  for (const auto& q : corpus) {
    Sample s;
    for (const auto& tok : q.text) {
      const Binding* b = lookup(q, tok);
      if (!b) {
        s.source.push_back(tok);
        continue;
      }
      if (hypernyms.count(b->variable)) {
        const auto& prim = cfg.primitive_per_var.at(b->variable);
        s.source.insert(s.source.end(), prim.begin(), prim.end());
        if (!b->entity.empty()) values[b->variable].insert(b->entity);
      } else {
        const auto& ent = bound_entity(*b, placeholder_of(tok));
        s.source.insert(s.source.end(), ent.begin(), ent.end());
      }
    }
    for (const auto& tok : q.sql) {
      const Binding* b = lookup(q, tok);
      if (!b) {
        s.target.push_back(tok);
      } else if (hypernyms.count(b->variable)) {
        s.target.push_back(b->variable);
      } else {
        const auto& ent = bound_entity(*b, placeholder_of(tok));
        s.target.insert(s.target.end(), ent.begin(), ent.end());
      }
    }
    if (s.source.empty() || s.target.empty()) {
      throw Error(ErrorKind::Format, "query realization with empty text or sql");
    }
    out.samples.push_back(std::move(s));
  }
  std::sort(out.samples.begin(), out.samples.end());
  out.samples.erase(std::unique(out.samples.begin(), out.samples.end()),
                    out.samples.end());

  // Entities bound under two hypernym classes join neither variant set.
  std::map<Tokens, std::size_t> owners;
  for (const auto& [var, vals] : values) {
    for (const auto& v : vals) ++owners[v];
  }
  std::set<Tokens> primitives;
  for (const auto& [var, prim] : cfg.primitive_per_var) primitives.insert(prim);

  for (const auto& var : cfg.hypernym_vars) {
    const Tokens& prim = cfg.primitive_per_var.at(var);
    if (!values[var].count(prim)) {
      throw Error(ErrorKind::PrimitiveNotInCorpus,
                  "primitive '" + join(prim) + "' is never bound to " + var);
    }
    linking::ConceptEntry e;
    e.primitive = prim;
    e.target_label = {var};
    e.link_kind = linking::LinkKind::CoHyponym;
    for (const auto& v : values[var]) {
      if (v != prim && owners[v] == 1 && !primitives.count(v)) e.variants.push_back(v);
    }

    const Sample* chosen = nullptr;
    if (auto it = cfg.prompt_templates.find(var); it != cfg.prompt_templates.end()) {
      const Tokens want =
          linking::fill_prompt({it->second, {}}, prim).source;
      for (const auto& s : out.samples) {
        if (s.source == want && contains_once(s.source, prim)) {
          chosen = &s;
          break;
        }
      }
    }
    if (!chosen) {
      for (const auto& s : out.samples) {
        if (!contains_once(s.source, prim)) continue;
        if (!chosen || s.source.size() < chosen->source.size()) chosen = &s;
      }
    }
    if (!chosen) {
      throw Error(ErrorKind::PrimitiveNotInCorpus,
                  "no derived sample contains '" + join(prim) + "' exactly once");
    }
    e.prompt = linking::derive_prompt(*chosen, prim);
    out.inventory.push_back(std::move(e));
  }
  if (cfg.variants_per_primitive > 0) {
    out.inventory = variant_sampler(out.inventory, cfg.variants_per_primitive,
                                    cfg.variant_seed);
  }
  return out;
}

linking::Inventory variant_sampler(const linking::Inventory& inventory,
                                   std::size_t k_per_primitive, std::uint64_t seed) {
  if (k_per_primitive == 0) {
    throw Error(ErrorKind::Usage, "variant_sampler: k must be >= 1");
  }
  Rng rng(seed);
  linking::Inventory out = inventory;
  for (auto& e : out) {
    std::vector<Tokens> kept;
    for (std::size_t i : rng.choose(e.variants.size(), k_per_primitive)) {
      kept.push_back(e.variants[i]);
    }
    e.variants = std::move(kept);
  }
  return out;
}

std::vector<Tokens> collect_entities(const std::vector<AnnotatedQuery>& corpus) {
  std::set<Tokens> all;
  for (const auto& q : corpus) {
    for (const auto& [name, b] : q.bindings) {
      if (!b.entity.empty()) all.insert(b.entity);
    }
  }
  return {all.begin(), all.end()};
}

std::vector<linking::ConceptRule> entity_rules(const std::vector<Tokens>& entities,
                                               const std::set<Token>& base_vocab) {
  std::vector<linking::ConceptRule> rules;
  std::set<Tokens> seen;
  for (const auto& ent : entities) {
    Tokens masked;
    for (const auto& t : ent) {
      masked.push_back(base_vocab.count(t) ? t : Token(kUnknownToken));
    }
    if (masked.empty() || !seen.insert(masked).second) continue;
    rules.push_back({masked, masked, linking::RuleKind::PrimitiveRule});
  }
  return rules;
}

std::set<Token> source_vocabulary(const std::vector<Sample>& samples) {
  std::set<Token> vocab;
  for (const auto& s : samples) vocab.insert(s.source.begin(), s.source.end());
  return vocab;
}

DerivationConfig geo_preset() {
  DerivationConfig c;
  c.hypernym_vars = {"CITY_NAME", "RIVER_NAME", "STATE_NAME", "CAPITAL_NAME"};
  c.primitive_per_var = {{"CITY_NAME", {"new", "york", "city"}},
                         {"RIVER_NAME", {"mississippi", "rivier"}},
                         {"STATE_NAME", {"dc"}},
                         {"CAPITAL_NAME", {"dover"}}};
  c.prompt_templates = {{"CITY_NAME", tokenize("how many people in [z]")},
                        {"RIVER_NAME", tokenize("how long is [z]")},
                        {"STATE_NAME", tokenize("where is [z]")},
                        {"CAPITAL_NAME", tokenize("what states capital is [z]")}};
  return c;
}

DerivationConfig adv_preset() {
  DerivationConfig c;
  c.hypernym_vars = {"TOPIC", "INSTRUCTOR", "DEPARTMENT", "NUMBER"};
  c.primitive_per_var = {{"TOPIC", tokenize("a history of american film")},
                         {"INSTRUCTOR", tokenize("aaron magid")},
                         {"DEPARTMENT", {"aaptis"}},
                         {"NUMBER", {"100"}}};
  c.prompt_templates = {{"TOPIC", tokenize("who teaches [z] ?")},
                        {"INSTRUCTOR", tokenize("does [z] give upper-level courses ?")},
                        {"DEPARTMENT", tokenize("name core courses for [z] .")},
                        {"NUMBER", tokenize("can undergrads take [z] ?")}};
  c.variants_per_primitive = 5;
  c.variant_seed = 0;
  return c;
}

DerivationConfig preset(std::string_view name) {
  if (name == "geo") return geo_preset();
  if (name == "adv") return adv_preset();
  throw Error(ErrorKind::Usage, "unknown corpus preset '" + std::string(name) + "' (geo|adv)");
}

}  // namespace semlink::sql
