// SPDX-License-Identifier: Apache-2.0

#include "semlink/semlink.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <optional>
#include <string>

#include <json.hpp>

#include "semlink/eval_runner.hpp"
#include "semlink/linking.hpp"
#include "semlink/sample_io.hpp"
#include "semlink/scan_grammar.hpp"
#include "semlink/seq2seq.hpp"
#include "semlink/sql_datasets.hpp"

struct semlink_samples {
  std::vector<semlink::Sample> items;
};

struct semlink_inventory {
  semlink::linking::Inventory items;
};

struct semlink_model {
  semlink::nn::Model model;
};

namespace {

using namespace semlink;
using ojson = nlohmann::ordered_json;

thread_local std::string g_error;
thread_local std::string g_error_kind;

semlink_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
      return SEMLINK_E_USAGE;
    case ErrorKind::NonFiniteLoss:
      return SEMLINK_E_NUMERIC;
    default:
      return SEMLINK_E_DATA;
  }
}

semlink_status fail(semlink_status st, const std::string& kind, const std::string& what) {
  g_error = what;
  g_error_kind = kind;
  return st;
}

template <typename F>
semlink_status guarded(F&& body) {
  try {
    body();
    g_error.clear();
    g_error_kind.clear();
    return SEMLINK_OK;
  } catch (const Error& e) {
    return fail(status_of(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(SEMLINK_E_INTERNAL, "internal", "out of memory");
  } catch (const std::exception& e) {
    return fail(SEMLINK_E_INTERNAL, "internal", e.what());
  } catch (...) {
    return fail(SEMLINK_E_INTERNAL, "internal", "unknown failure");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::Usage, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

eval::Progress progress_of(semlink_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

std::vector<Tokens> sources_of(const std::vector<Sample>& data) {
  std::vector<Tokens> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.source);
  return out;
}

int resolve_max_len(int max_len, const std::vector<Sample>& data) {
  return max_len > 0 ? max_len : nn::default_max_len(data);
}

std::vector<Tokens> scoring_lines(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<Tokens> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab != std::string::npos) {
      const auto next = line.find('\t', tab + 1);
      line = line.substr(tab + 1, next == std::string::npos ? std::string::npos : next - tab - 1);
    }
    out.push_back(tokenize(line));
    pos = end + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* semlink_version(void) { return "0.3.0"; }

const char* semlink_last_error(void) { return g_error.c_str(); }

const char* semlink_last_error_kind(void) { return g_error_kind.c_str(); }

void semlink_string_free(char* s) { std::free(s); }

semlink_status semlink_file_digest(const char* path, char** hex) {
  return guarded([&] {
    require(path && hex, "semlink_file_digest: null argument");
    *hex = dup_string(hex64(fnv1a64(read_file(path))));
  });
}

// ---------------------------------------------------------------- samples

semlink_status semlink_samples_load(const char* path, semlink_samples** out) {
  return guarded([&] {
    require(path && out, "semlink_samples_load: null argument");
    auto s = std::make_unique<semlink_samples>();
    s->items = load_samples(path);
    *out = s.release();
  });
}

semlink_status semlink_samples_save(const semlink_samples* s, const char* path) {
  return guarded([&] {
    require(s && path, "semlink_samples_save: null argument");
    save_samples(path, s->items);
  });
}

size_t semlink_samples_size(const semlink_samples* s) { return s ? s->items.size() : 0; }

semlink_status semlink_samples_get(const semlink_samples* s, size_t index, char** source,
                                   char** target) {
  return guarded([&] {
    require(s && source && target, "semlink_samples_get: null argument");
    require(index < s->items.size(), "semlink_samples_get: index out of range");
    const std::string src = join(s->items[index].source);
    const std::string tgt = join(s->items[index].target);
    *source = dup_string(src);
    *target = dup_string(tgt);
  });
}

void semlink_samples_free(semlink_samples* s) { delete s; }

semlink_status semlink_scan_generate(semlink_samples** out) {
  return guarded([&] {
    require(out, "semlink_scan_generate: null argument");
    auto s = std::make_unique<semlink_samples>();
    s->items = scan::enumerate_commands();
    *out = s.release();
  });
}

// -------------------------------------------------------------- inventory

semlink_status semlink_scan_inventory(size_t num_primitives, size_t variants_per_primitive,
                                      semlink_inventory** out) {
  return guarded([&] {
    require(out, "semlink_scan_inventory: null argument");
    auto inv = std::make_unique<semlink_inventory>();
    inv->items = linking::scan_inventory(num_primitives, variants_per_primitive);
    *out = inv.release();
  });
}

semlink_status semlink_inventory_load(const char* path, semlink_inventory** out) {
  return guarded([&] {
    require(path && out, "semlink_inventory_load: null argument");
    auto inv = std::make_unique<semlink_inventory>();
    inv->items = linking::load_inventory(path);
    *out = inv.release();
  });
}

semlink_status semlink_inventory_save(const semlink_inventory* inv, const char* path) {
  return guarded([&] {
    require(inv && path, "semlink_inventory_save: null argument");
    linking::save_inventory(path, inv->items);
  });
}

size_t semlink_inventory_size(const semlink_inventory* inv) {
  return inv ? inv->items.size() : 0;
}

void semlink_inventory_free(semlink_inventory* inv) { delete inv; }

// ------------------------------------------------------------ augmentation

semlink_status semlink_augment(const semlink_samples* base, const semlink_inventory* inv,
                               const char* scheme, const char* level, semlink_samples** train,
                               semlink_samples** test, char** meta_json) {
  return guarded([&] {
    require(base && inv && scheme && level && train && test && meta_json,
            "semlink_augment: null argument");
    auto b = linking::build_bundle(base->items, inv->items, linking::parse_scheme(scheme),
                                   linking::parse_level(level));
    auto tr = std::make_unique<semlink_samples>();
    auto te = std::make_unique<semlink_samples>();
    const std::string meta = linking::meta_json(b.meta, b.train.size(), b.test.size());
    tr->items = std::move(b.train);
    te->items = std::move(b.test);
    char* m = dup_string(meta);
    *train = tr.release();
    *test = te.release();
    *meta_json = m;
  });
}

semlink_status semlink_replacement_test(const semlink_samples* base,
                                        const semlink_inventory* inv, semlink_samples** out) {
  return guarded([&] {
    require(base && inv && out, "semlink_replacement_test: null argument");
    auto s = std::make_unique<semlink_samples>();
    s->items = linking::build_replacement_test(base->items, inv->items);
    *out = s.release();
  });
}

semlink_status semlink_derive_sql(const char* corpus_path, const char* preset,
                                  size_t num_primitives, size_t variants_per_primitive,
                                  semlink_samples** samples, semlink_inventory** inv) {
  return guarded([&] {
    require(corpus_path && preset && samples && inv, "semlink_derive_sql: null argument");
    sql::DerivationConfig cfg = sql::preset(preset);
    if (num_primitives > 0 && num_primitives < cfg.hypernym_vars.size()) {
      cfg.hypernym_vars.resize(num_primitives);
    }
    if (variants_per_primitive > 0) cfg.variants_per_primitive = variants_per_primitive;
    auto d = sql::derive_dataset(sql::load_corpus(corpus_path), cfg);
    auto s = std::make_unique<semlink_samples>();
    auto i = std::make_unique<semlink_inventory>();
    s->items = std::move(d.samples);
    i->items = std::move(d.inventory);
    *samples = s.release();
    *inv = i.release();
  });
}

semlink_status semlink_entity_rules(const char* corpus_path, const semlink_samples* base,
                                    semlink_samples** rules) {
  return guarded([&] {
    require(corpus_path && base && rules, "semlink_entity_rules: null argument");
    const auto r = sql::entity_rules(sql::collect_entities(sql::load_corpus(corpus_path)),
                                     sql::source_vocabulary(base->items));
    auto s = std::make_unique<semlink_samples>();
    for (const auto& rule : r) s->items.push_back(rule.as_sample());
    *rules = s.release();
  });
}

// ------------------------------------------------------------------ models

semlink_status semlink_model_train(const semlink_samples* train, const char* config_json,
                                   semlink_progress_fn progress, void* user,
                                   semlink_model** out) {
  return guarded([&] {
    require(train && out, "semlink_model_train: null argument");
    nn::ModelConfig cfg = nn::ModelConfig::desk();
    if (config_json && *config_json) cfg = nn::ModelConfig::merge_json(cfg, config_json);
    cfg.validate();
    auto m = std::make_unique<semlink_model>(semlink_model{nn::make_model(cfg, train->items)});
    nn::TrainOptions opts;
    if (progress) {
      opts.on_epoch = [&](const nn::MetricsRecord& r) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "epoch %d/%d loss %.4f train-tok %.4f", r.epoch,
                      cfg.max_epochs, r.loss, r.token_acc);
        progress(buf, user);
      };
    }
    nn::train(m->model, train->items, opts);
    *out = m.release();
  });
}

semlink_status semlink_model_config_resolve(const char* config_json, char** resolved_json) {
  return guarded([&] {
    require(resolved_json, "semlink_model_config_resolve: null argument");
    nn::ModelConfig cfg = nn::ModelConfig::desk();
    if (config_json && *config_json) cfg = nn::ModelConfig::merge_json(cfg, config_json);
    cfg.validate();
    *resolved_json = dup_string(cfg.to_json());
  });
}

semlink_status semlink_model_save(const semlink_model* m, const char* path) {
  return guarded([&] {
    require(m && path, "semlink_model_save: null argument");
    nn::save_checkpoint(path, m->model);
  });
}

semlink_status semlink_model_load(const char* path, semlink_model** out) {
  return guarded([&] {
    require(path && out, "semlink_model_load: null argument");
    *out = new semlink_model{nn::load_checkpoint(path)};
  });
}

semlink_status semlink_model_config(const semlink_model* m, char** config_json) {
  return guarded([&] {
    require(m && config_json, "semlink_model_config: null argument");
    *config_json = dup_string(m->model.config().to_json());
  });
}

size_t semlink_model_parameter_count(const semlink_model* m) {
  return m ? m->model.parameter_count() : 0;
}

semlink_status semlink_model_predict(const semlink_model* m, const semlink_samples* data,
                                     int max_len, char** predictions_tsv) {
  return guarded([&] {
    require(m && data && predictions_tsv, "semlink_model_predict: null argument");
    const auto pred =
        m->model.greedy_decode(sources_of(data->items), resolve_max_len(max_len, data->items));
    std::string out;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      out += join(data->items[i].source);
      out += '\t';
      out += join(pred[i]);
      out += '\n';
    }
    *predictions_tsv = dup_string(out);
  });
}

semlink_status semlink_model_evaluate(const semlink_model* m, const semlink_samples* data,
                                      int max_len, char** metrics_json) {
  return guarded([&] {
    require(m && data && metrics_json, "semlink_model_evaluate: null argument");
    require(!data->items.empty(), "semlink_model_evaluate: empty data set");
    const auto pred =
        m->model.greedy_decode(sources_of(data->items), resolve_max_len(max_len, data->items));
    std::vector<Tokens> gold;
    for (const auto& s : data->items) gold.push_back(s.target);
    const auto sc = eval::score(pred, gold);
    ojson j{{"count", sc.count},
            {"token_acc", eval::round4(sc.token_acc)},
            {"seq_acc", eval::round4(sc.seq_acc)},
            {"loss", eval::round4(nn::evaluate_loss(m->model, data->items))}};
    *metrics_json = dup_string(j.dump());
  });
}

void semlink_model_free(semlink_model* m) { delete m; }

// -------------------------------------------------------------- evaluation

semlink_status semlink_score_files(const char* pred_path, const char* gold_path,
                                   char** scores_json) {
  return guarded([&] {
    require(pred_path && gold_path && scores_json, "semlink_score_files: null argument");
    const auto pred = scoring_lines(pred_path);
    const auto gold = scoring_lines(gold_path);
    if (pred.size() != gold.size()) {
      throw Error(ErrorKind::Format, "prediction file has " + std::to_string(pred.size()) +
                                         " lines, gold file " + std::to_string(gold.size()));
    }
    if (gold.empty()) throw Error(ErrorKind::Format, "gold file is empty");
    for (const auto& g : gold) {
      if (g.empty()) throw Error(ErrorKind::Format, "gold file has an empty sequence");
    }
    const auto sc = eval::score(pred, gold);
    ojson j{{"count", sc.count},
            {"token_acc", eval::round4(sc.token_acc)},
            {"seq_acc", eval::round4(sc.seq_acc)},
            {"metrics",
             {{"token_acc", eval::kTokenAccuracyDefinition},
              {"seq_acc", eval::kSequenceAccuracyDefinition}}}};
    *scores_json = dup_string(j.dump(2) + "\n");
  });
}

semlink_status semlink_plan_resolve(const char* plan_json, char** resolved_json) {
  return guarded([&] {
    require(plan_json && resolved_json, "semlink_plan_resolve: null argument");
    const auto plan = eval::ExperimentPlan::from_json(plan_json);
    plan.validate();
    *resolved_json = dup_string(plan.to_json());
  });
}

semlink_status semlink_sweep_resolve(const char* sweep_json, char** plans_json) {
  return guarded([&] {
    require(sweep_json && plans_json, "semlink_sweep_resolve: null argument");
    ojson list = ojson::array();
    for (const auto& p : eval::parse_sweep(sweep_json)) {
      p.validate();
      list.push_back(ojson::parse(p.to_json()));
    }
    *plans_json = dup_string(list.dump());
  });
}

semlink_status semlink_run_plan(const char* plan_json, semlink_progress_fn progress,
                                void* user, char** report_json) {
  return guarded([&] {
    require(plan_json && report_json, "semlink_run_plan: null argument");
    const auto plan = eval::ExperimentPlan::from_json(plan_json);
    const auto rep = eval::run_experiment(plan, progress_of(progress, user));
    *report_json = dup_string(rep.to_json());
  });
}

semlink_status semlink_sweep(const char* sweep_json, int jobs, const char* table_path,
                             semlink_progress_fn progress, void* user, char** outcomes_json) {
  return guarded([&] {
    require(sweep_json && table_path && outcomes_json, "semlink_sweep: null argument");
    const auto plans = eval::parse_sweep(sweep_json);
    for (const auto& p : plans) p.validate();
    const auto outcomes = eval::sweep(plans, jobs, table_path, progress_of(progress, user));
    ojson list = ojson::array();
    for (const auto& o : outcomes) {
      ojson item{{"plan", o.plan_id}, {"ok", o.error.empty()}};
      if (o.report) {
        item["mean_seq_acc"] = eval::round4(o.report->mean_seq_acc);
        item["mean_token_acc"] = eval::round4(o.report->mean_token_acc);
      } else {
        item["kind"] = to_string(o.error_kind);
        item["error"] = o.error;
      }
      list.push_back(item);
    }
    *outcomes_json = dup_string(list.dump(2) + "\n");
  });
}

}  // extern "C"
