// SPDX-License-Identifier: Apache-2.0

#include "semlink/eval_runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "semlink/sample_io.hpp"
#include "semlink/scan_grammar.hpp"
#include "semlink/sql_datasets.hpp"

namespace semlink::eval {

using ojson = nlohmann::ordered_json;

const char* const kTokenAccuracyDefinition =
    "positions 0..max(|pred|,|gold|)-1 compared; a position matches only when both "
    "sequences hold the same token there; score = matches / max(|pred|,|gold|); "
    "dataset value = mean over samples";
const char* const kSequenceAccuracyDefinition =
    "1 when prediction and gold are identical token for token including length, else 0; "
    "dataset value = mean over samples";

double token_accuracy(const Tokens& pred, const Tokens& gold) {
  const std::size_t n = std::max(pred.size(), gold.size());
  if (n == 0) return 1.0;
  const std::size_t common = std::min(pred.size(), gold.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < common; ++i) hits += pred[i] == gold[i];
  return static_cast<double>(hits) / static_cast<double>(n);
}

double sequence_accuracy(const Tokens& pred, const Tokens& gold) {
  return pred == gold ? 1.0 : 0.0;
}

Scores score(const std::vector<Tokens>& predictions, const std::vector<Tokens>& gold) {
  if (predictions.size() != gold.size()) {
    throw Error(ErrorKind::Usage, "score: " + std::to_string(predictions.size()) +
                                      " predictions for " + std::to_string(gold.size()) +
                                      " references");
  }
  Scores s;
  s.count = gold.size();
  if (gold.empty()) return s;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].empty()) throw Error(ErrorKind::Usage, "score: empty reference sequence");
    s.token_acc += token_accuracy(predictions[i], gold[i]);
    s.seq_acc += sequence_accuracy(predictions[i], gold[i]);
  }
  s.token_acc /= static_cast<double>(gold.size());
  s.seq_acc /= static_cast<double>(gold.size());
  return s;
}

double round4(double x) { return std::round(x * 1e4) / 1e4; }

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

// ------------------------------------------------------------------ plans

namespace {

const char* dataset_name(Dataset d) { return d == Dataset::Scan ? "scan" : "sql"; }

const char* scheme_name(PlanScheme s) {
  switch (s) {
    case PlanScheme::None: return "none";
    case PlanScheme::Inductive: return "il";
    case PlanScheme::Deductive: return "dl";
    case PlanScheme::EntityAug: return "entity_aug";
  }
  return "?";
}

const char* protocol_name(Protocol p) { return p == Protocol::Linking ? "linking" : "pool"; }

PlanScheme parse_plan_scheme(const std::string& s) {
  if (s == "none") return PlanScheme::None;
  if (s == "il") return PlanScheme::Inductive;
  if (s == "dl") return PlanScheme::Deductive;
  if (s == "entity_aug") return PlanScheme::EntityAug;
  throw Error(ErrorKind::Usage, "unknown scheme '" + s + "' (none|il|dl|entity_aug)");
}

std::string k_name(std::size_t k) {
  return k == linking::kAllSamples ? std::string("full") : std::to_string(k);
}

}  // namespace

void ExperimentPlan::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::Usage, "plan '" + id + "': " + why);
  };
  if (id.empty()) fail("id must be non-empty");
  if (id.find('/') != std::string::npos || id == "." || id == "..") fail("id must be a plain name");
  if (seeds.empty()) fail("at least one seed is required");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) fail("seeds must be distinct");
  if (samples_per_variant == 0) fail("samples_per_variant must be >= 1");
  if (num_primitives == 0) fail("num_primitives must be >= 1");
  if (dataset == Dataset::Scan) {
    if (num_primitives > 4) fail("SCAN has 4 primitives");
    if (variants_per_primitive == 0) fail("variants_per_primitive must be >= 1");
    if (scheme == PlanScheme::EntityAug) fail("entity augmentation needs a SQL corpus");
  } else {
    if (corpus.empty()) fail("SQL plans need a corpus path");
    if (preset.empty()) fail("SQL plans need a preset (geo|adv)");
  }
  if (protocol == Protocol::Pool) {
    if (scheme != PlanScheme::None) fail("the pool protocol takes scheme none");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  } else if (samples_per_variant != linking::kAllSamples) {
    fail("samples_per_variant applies to the pool protocol only");
  }
  if (level == linking::Level::Challenging && scheme != PlanScheme::Inductive) {
    fail("the challenging level exists for il only");
  }
  model.validate();
}

std::string ExperimentPlan::to_json() const {
  ojson j;
  j["id"] = id;
  j["dataset"] = dataset_name(dataset);
  if (dataset == Dataset::Sql) {
    j["corpus"] = corpus;
    j["preset"] = preset;
  }
  j["scheme"] = scheme_name(scheme);
  j["level"] = std::string(linking::to_string(level));
  j["protocol"] = protocol_name(protocol);
  j["num_primitives"] = num_primitives;
  j["variants_per_primitive"] = variants_per_primitive;
  if (samples_per_variant == linking::kAllSamples) {
    j["samples_per_variant"] = "full";
  } else {
    j["samples_per_variant"] = samples_per_variant;
  }
  j["train_fraction"] = train_fraction;
  j["split_seed"] = split_seed;
  j["rule_variants"] = rule_variants;
  j["seeds"] = seeds;
  j["model"] = ojson::parse(model.to_json());
  j["eval_subsample"] = eval_subsample;
  j["eval_seed"] = eval_seed;
  j["output"] = output;
  return j.dump();
}

ExperimentPlan ExperimentPlan::merge_json(ExperimentPlan p, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("plan is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Format, "a plan must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "id") p.id = v.get<std::string>();
      else if (key == "dataset") {
        const auto d = v.get<std::string>();
        if (d == "scan") p.dataset = Dataset::Scan;
        else if (d == "sql") p.dataset = Dataset::Sql;
        else throw Error(ErrorKind::Usage, "unknown dataset '" + d + "' (scan|sql)");
      } else if (key == "corpus") p.corpus = v.get<std::string>();
      else if (key == "preset") p.preset = v.get<std::string>();
      else if (key == "scheme") p.scheme = parse_plan_scheme(v.get<std::string>());
      else if (key == "level") p.level = linking::parse_level(v.get<std::string>());
      else if (key == "protocol") {
        const auto s = v.get<std::string>();
        if (s == "linking") p.protocol = Protocol::Linking;
        else if (s == "pool") p.protocol = Protocol::Pool;
        else throw Error(ErrorKind::Usage, "unknown protocol '" + s + "' (linking|pool)");
      } else if (key == "num_primitives") p.num_primitives = v.get<std::size_t>();
      else if (key == "variants_per_primitive") p.variants_per_primitive = v.get<std::size_t>();
      else if (key == "samples_per_variant") {
        if (v.is_string()) {
          if (v.get<std::string>() != "full") {
            throw Error(ErrorKind::Usage, "samples_per_variant must be a count or \"full\"");
          }
          p.samples_per_variant = linking::kAllSamples;
        } else {
          p.samples_per_variant = v.get<std::size_t>();
        }
      } else if (key == "train_fraction") p.train_fraction = v.get<double>();
      else if (key == "split_seed") p.split_seed = v.get<std::uint64_t>();
      else if (key == "rule_variants") p.rule_variants = v.get<std::vector<std::string>>();
      else if (key == "seeds") p.seeds = v.get<std::vector<std::uint64_t>>();
      else if (key == "model") p.model = nn::ModelConfig::merge_json(p.model, v.dump());
      else if (key == "eval_subsample") p.eval_subsample = v.get<std::size_t>();
      else if (key == "eval_seed") p.eval_seed = v.get<std::uint64_t>();
      else if (key == "output") p.output = v.get<std::string>();
      else throw Error(ErrorKind::Usage, "unknown plan key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("plan: ") + e.what());
  }
  return p;
}

ExperimentPlan ExperimentPlan::from_json(const std::string& text) {
  return merge_json(ExperimentPlan{}, text);
}

std::vector<ExperimentPlan> parse_sweep(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("sweep is not valid JSON: ") + e.what());
  }
  ExperimentPlan defaults;
  nlohmann::json list = j;
  if (j.is_object()) {
    if (j.contains("defaults")) defaults = ExperimentPlan::merge_json(defaults, j["defaults"].dump());
    if (!j.contains("plans")) throw Error(ErrorKind::Format, "sweep object lacks \"plans\"");
    list = j["plans"];
  }
  if (!list.is_array() || list.empty()) {
    throw Error(ErrorKind::Usage, "a sweep needs a non-empty list of plans");
  }
  std::vector<ExperimentPlan> plans;
  std::set<std::string> ids;
  for (const auto& item : list) {
    plans.push_back(ExperimentPlan::merge_json(defaults, item.dump()));
    if (!ids.insert(plans.back().id).second) {
      throw Error(ErrorKind::Usage, "duplicate plan id '" + plans.back().id + "'");
    }
  }
  return plans;
}

std::vector<ExperimentPlan> load_sweep(const std::filesystem::path& path) {
  return parse_sweep(read_file(path));
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  return ExperimentPlan::from_json(read_file(path));
}

// --------------------------------------------------------------- prepare

namespace {

// One-shot variants taught by their rule: the single sampled composition of
// each listed variant is swapped for the rule variant -> target label.
void apply_rule_variants(std::vector<Sample>& train, const linking::Inventory& inv,
                         const std::vector<std::string>& rule_variants) {
  for (const auto& name : rule_variants) {
    const Tokens v = tokenize(name);
    const linking::ConceptEntry* owner = nullptr;
    for (const auto& e : inv) {
      if (std::find(e.variants.begin(), e.variants.end(), v) != e.variants.end()) owner = &e;
    }
    if (!owner) throw Error(ErrorKind::NotFound, "rule variant '" + name + "' is not in the inventory");
    std::erase_if(train, [&](const Sample& s) { return find_phrase(s.source, v) != std::size_t(-1); });
    train.push_back({v, owner->target_label});
  }
}

}  // namespace

PreparedData prepare(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<Sample> base;
  linking::Inventory inv;
  std::vector<sql::AnnotatedQuery> corpus;
  if (plan.dataset == Dataset::Scan) {
    base = scan::enumerate_commands();
    inv = linking::scan_inventory(plan.num_primitives, plan.variants_per_primitive);
  } else {
    corpus = sql::load_corpus(plan.corpus);
    sql::DerivationConfig cfg = sql::preset(plan.preset);
    if (plan.num_primitives < cfg.hypernym_vars.size()) cfg.hypernym_vars.resize(plan.num_primitives);
    auto derived = sql::derive_dataset(corpus, cfg);
    base = std::move(derived.samples);
    inv = std::move(derived.inventory);
  }

  PreparedData d;
  ojson meta;
  meta["base_size"] = base.size();
  meta["inventory_fingerprint"] = linking::fingerprint(inv);
  if (plan.protocol == Protocol::Pool) {
    auto split = linking::pool_split(base, inv, plan.train_fraction, plan.split_seed);
    meta["pool_size"] = split.pool_size;
    meta["split_train_size"] = split.split_train_size;
    meta["single_variant_train_size"] = split.train.size();
    d.train = std::move(split.train);
    if (plan.samples_per_variant != linking::kAllSamples) {
      d.train = linking::subsample_per_variant(d.train, inv, plan.samples_per_variant,
                                               derive_seed(plan.split_seed, 0x6b));
      if (plan.samples_per_variant == 1) apply_rule_variants(d.train, inv, plan.rule_variants);
    }
    d.test = std::move(split.test);
  } else {
    switch (plan.scheme) {
      case PlanScheme::None:
        d.train = base;
        d.test = linking::build_replacement_test(base, inv);
        break;
      case PlanScheme::Inductive:
      case PlanScheme::Deductive: {
        auto b = linking::build_bundle(base, inv,
                                       plan.scheme == PlanScheme::Inductive
                                           ? linking::Scheme::Inductive
                                           : linking::Scheme::Deductive,
                                       plan.level);
        meta["bundle"] = ojson::parse(linking::meta_json(b.meta, b.train.size(), b.test.size()));
        d.train = std::move(b.train);
        d.test = std::move(b.test);
        break;
      }
      case PlanScheme::EntityAug: {
        const auto rules = sql::entity_rules(sql::collect_entities(corpus),
                                             sql::source_vocabulary(base));
        meta["entity_rules"] = rules.size();
        d.train = base;
        for (const auto& r : rules) d.train.push_back(r.as_sample());
        d.test = linking::build_replacement_test(base, inv);
        break;
      }
    }
  }
  if (d.test.empty()) throw Error(ErrorKind::InsufficientSamples, "plan '" + plan.id + "' has an empty test set");
  if (plan.eval_subsample > 0 && d.test.size() > plan.eval_subsample) {
    Rng rng(plan.eval_seed);
    for (auto i : rng.choose(d.test.size(), plan.eval_subsample)) d.eval_set.push_back(d.test[i]);
  } else {
    d.eval_set = d.test;
  }
  meta["train_size"] = d.train.size();
  meta["test_size"] = d.test.size();
  meta["eval_size"] = d.eval_set.size();
  d.meta_json = meta.dump();
  return d;
}

// ----------------------------------------------------------------- report

std::string AggregateReport::to_json() const {
  ojson j;
  j["metrics"] = {{"token_acc", kTokenAccuracyDefinition},
                  {"seq_acc", kSequenceAccuracyDefinition},
                  {"loss", "gold-fed mean cross-entropy per target token on the eval set"},
                  {"std", "sample standard deviation over seeds (0 for one seed)"},
                  {"precision", "4 decimal places"}};
  j["plan"] = ojson::parse(plan.to_json());
  j["plan"].erase("output");
  j["data"] = ojson::parse(data_meta);
  ojson runs_j = ojson::array();
  for (const auto& r : runs) {
    runs_j.push_back({{"seed", r.seed},
                      {"epochs", r.test.epoch},
                      {"token_acc", round4(r.test.token_acc)},
                      {"seq_acc", round4(r.test.seq_acc)},
                      {"loss", round4(r.test.loss)},
                      {"train_loss", round4(r.train_loss)},
                      {"train_seq_acc", round4(r.train_seq_acc)}});
  }
  j["runs"] = runs_j;
  j["mean"] = {{"token_acc", round4(mean_token_acc)}, {"seq_acc", round4(mean_seq_acc)}};
  j["std"] = {{"token_acc", round4(std_token_acc)}, {"seq_acc", round4(std_seq_acc)}};
  return j.dump(2) + "\n";
}

std::string AggregateReport::timing_json() const {
  ojson j;
  j["plan"] = plan.id;
  j["wall_clock_s"] = wall_clock_s;
  ojson per = ojson::array();
  for (const auto& r : runs) per.push_back({{"seed", r.seed}, {"wall_clock_s", r.wall_clock_s}});
  j["runs"] = per;
  return j.dump(2) + "\n";
}

// ------------------------------------------------------------------- run

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string predictions_tsv(const std::vector<Sample>& data, const std::vector<Tokens>& pred) {
  std::string out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += join(data[i].source);
    out += '\t';
    out += join(pred[i]);
    out += '\t';
    out += join(data[i].target);
    out += '\n';
  }
  return out;
}

std::vector<Tokens> sources_of(const std::vector<Sample>& data) {
  std::vector<Tokens> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.source);
  return out;
}

std::vector<Tokens> targets_of(const std::vector<Sample>& data) {
  std::vector<Tokens> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(s.target);
  return out;
}

SeedRun run_seed(const ExperimentPlan& plan, const PreparedData& data, std::uint64_t seed,
                 const std::filesystem::path& dir, const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  nn::ModelConfig cfg = plan.model;
  cfg.seed = seed;
  nn::Model model = nn::make_model(cfg, data.train);
  std::string metrics_log;
  nn::TrainOptions opts;
  opts.on_epoch = [&](const nn::MetricsRecord& r) {
    ojson line{{"epoch", r.epoch}, {"seed", r.seed}, {"loss", round4(r.loss)},
               {"token_acc", round4(r.token_acc)}, {"seq_acc", round4(r.seq_acc)}};
    metrics_log += line.dump() + "\n";
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s seed %llu] epoch %d/%d loss %.4f train-tok %.4f",
                    plan.id.c_str(), static_cast<unsigned long long>(seed), r.epoch,
                    cfg.max_epochs, r.loss, r.token_acc);
      progress(buf);
    }
  };
  const nn::TrainResult tr = nn::train(model, data.train, opts);

  const int max_len = nn::default_max_len(data.train);
  const auto pred = model.greedy_decode(sources_of(data.eval_set), max_len);
  const Scores sc = score(pred, targets_of(data.eval_set));

  SeedRun run;
  run.seed = seed;
  run.test.seed = seed;
  run.test.epoch = cfg.max_epochs;
  run.test.token_acc = sc.token_acc;
  run.test.seq_acc = sc.seq_acc;
  run.test.loss = nn::evaluate_loss(model, data.eval_set);
  run.train_loss = tr.epochs.empty() ? 0.0 : tr.epochs.back().loss;

  std::vector<Sample> train_probe;
  if (plan.eval_subsample > 0 && data.train.size() > plan.eval_subsample) {
    Rng rng(derive_seed(plan.eval_seed, 0x7472));
    for (auto i : rng.choose(data.train.size(), plan.eval_subsample)) train_probe.push_back(data.train[i]);
  } else {
    train_probe = data.train;
  }
  run.train_seq_acc =
      score(model.greedy_decode(sources_of(train_probe), max_len), targets_of(train_probe)).seq_acc;

  const std::string stem = "seed_" + std::to_string(seed);
  nn::save_checkpoint(dir / (stem + ".ckpt"), model);
  write_file(dir / (stem + ".pred.tsv"), predictions_tsv(data.eval_set, pred));
  write_file(dir / (stem + ".metrics.jsonl"), metrics_log);
  run.wall_clock_s = seconds_since(t0);
  if (progress) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "[%s seed %llu] test token_acc %.4f seq_acc %.4f (%zu samples)",
                  plan.id.c_str(), static_cast<unsigned long long>(seed), sc.token_acc,
                  sc.seq_acc, sc.count);
    progress(buf);
  }
  return run;
}

}  // namespace

AggregateReport run_experiment(const ExperimentPlan& plan, const Progress& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  const PreparedData data = prepare(plan);
  const std::filesystem::path dir = std::filesystem::path(plan.output) / plan.id;
  save_samples(dir / "train.tsv", data.train);
  save_samples(dir / "eval.tsv", data.eval_set);
  if (progress) {
    progress("[" + plan.id + "] train " + std::to_string(data.train.size()) + ", test " +
             std::to_string(data.test.size()) + ", evaluating on " +
             std::to_string(data.eval_set.size()));
  }

  AggregateReport rep;
  rep.plan = plan;
  rep.train_size = data.train.size();
  rep.test_size = data.test.size();
  rep.eval_size = data.eval_set.size();
  rep.data_meta = data.meta_json;
  for (const auto seed : plan.seeds) {
    try {
      rep.runs.push_back(run_seed(plan, data, seed, dir, progress));
    } catch (const Error& e) {
      throw Error(e.kind(), "plan '" + plan.id + "' seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  // Aggregates over the rounded per-seed values, as written in the report.
  std::vector<double> tok, seq;
  for (const auto& r : rep.runs) {
    tok.push_back(round4(r.test.token_acc));
    seq.push_back(round4(r.test.seq_acc));
  }
  std::tie(rep.mean_token_acc, rep.std_token_acc) = mean_std(tok);
  std::tie(rep.mean_seq_acc, rep.std_seq_acc) = mean_std(seq);
  rep.wall_clock_s = seconds_since(t0);
  write_file(dir / "report.json", rep.to_json());
  write_file(dir / "timing.json", rep.timing_json());
  return rep;
}

// ----------------------------------------------------------------- sweep

std::string sweep_table_csv(const std::vector<SweepOutcome>& outcomes) {
  std::ostringstream os;
  os << "plan_id,dataset,scheme,level,protocol,num_primitives,variants_per_primitive,"
        "samples_per_variant,train_size,seed,token_acc,seq_acc,loss,wall_clock\n";
  char buf[64];
  for (const auto& o : outcomes) {
    if (!o.report) continue;
    const auto& r = *o.report;
    const auto& p = r.plan;
    for (const auto& run : r.runs) {
      os << p.id << ',' << dataset_name(p.dataset) << ',' << scheme_name(p.scheme) << ','
         << linking::to_string(p.level) << ',' << protocol_name(p.protocol) << ','
         << p.num_primitives << ',' << p.variants_per_primitive << ','
         << k_name(p.samples_per_variant) << ',' << r.train_size << ',' << run.seed;
      for (double x : {run.test.token_acc, run.test.seq_acc, run.test.loss}) {
        std::snprintf(buf, sizeof buf, ",%.4f", round4(x));
        os << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.1f\n", run.wall_clock_s);
      os << buf;
    }
  }
  return os.str();
}

std::vector<SweepOutcome> sweep(const std::vector<ExperimentPlan>& plans, int jobs,
                                const std::filesystem::path& table_path,
                                const Progress& progress) {
  if (plans.empty()) throw Error(ErrorKind::Usage, "sweep: no plans");
  if (jobs < 1) throw Error(ErrorKind::Usage, "sweep: jobs must be >= 1");
  std::set<std::string> ids;
  for (const auto& p : plans) {
    if (!ids.insert(p.output + "/" + p.id).second) {
      throw Error(ErrorKind::Usage, "sweep: two plans write to " + p.output + "/" + p.id);
    }
  }
  std::vector<SweepOutcome> out(plans.size());
  std::mutex log_mutex;
  Progress locked;
  if (progress) {
    locked = [&](const std::string& line) {
      std::lock_guard<std::mutex> lock(log_mutex);
      progress(line);
    };
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < plans.size(); i = next++) {
      out[i].plan_id = plans[i].id;
      try {
        out[i].report = run_experiment(plans[i], locked);
      } catch (const Error& e) {
        out[i].error = e.what();
        out[i].error_kind = e.kind();
      } catch (const std::exception& e) {
        out[i].error = e.what();
        out[i].error_kind = ErrorKind::Io;
      }
      if (locked && !out[i].error.empty()) locked("[" + plans[i].id + "] FAILED: " + out[i].error);
    }
  };
  const int n = std::min<int>(jobs, static_cast<int>(plans.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  write_file(table_path, sweep_table_csv(out));
  ojson failures = ojson::array();
  for (const auto& o : out) {
    if (!o.error.empty()) {
      failures.push_back({{"plan", o.plan_id}, {"kind", to_string(o.error_kind)}, {"error", o.error}});
    }
  }
  const auto failures_path = table_path.parent_path() / "failures.json";
  if (!failures.empty()) {
    write_file(failures_path, failures.dump(2) + "\n");
  } else {
    std::error_code ec;
    std::filesystem::remove(failures_path, ec);
  }
  return out;
}

}  // namespace semlink::eval
