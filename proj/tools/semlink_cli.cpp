// SPDX-License-Identifier: Apache-2.0
//
// semlink command-line tool. Every subcommand resolves its options into a
// JSON object, runs against the C library, and writes a manifest holding the
// resolved options, seeds and input/output digests beside its outputs.
// `semlink rerun <manifest>` replays a manifest and checks the outputs.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "semlink/semlink.h"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3, kInternal = 4 };

struct Failure {
  int code;
  std::string message;
};

int verbosity = 1;

void note(const std::string& line) {
  if (verbosity > 0) std::cerr << line << '\n';
}

void on_progress(const char* line, void*) {
  const std::string s(line);
  const bool epoch = s.find("epoch ") != std::string::npos && s.find("test ") == std::string::npos;
  if (verbosity >= 2 || (verbosity == 1 && !epoch)) std::cerr << s << '\n';
}

[[noreturn]] void usage_error(const std::string& what) { throw Failure{kUsage, what}; }
[[noreturn]] void data_error(const std::string& what) { throw Failure{kData, what}; }

void check(semlink_status st) {
  if (st == SEMLINK_OK) return;
  std::string msg = semlink_last_error();
  const std::string kind = semlink_last_error_kind();
  if (!kind.empty()) msg = kind + ": " + msg;
  throw Failure{static_cast<int>(st), msg};
}

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { semlink_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(Handle&& o) noexcept : p(o.p) { o.p = nullptr; }
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};
using Samples = Handle<semlink_samples, semlink_samples_free>;
using Inventory = Handle<semlink_inventory, semlink_inventory_free>;
using Model = Handle<semlink_model, semlink_model_free>;

fs::path default_dir() {
  const char* env = std::getenv("SEMLINK_OUT_DIR");
  return env && *env ? fs::path(env) : fs::current_path();
}

std::string resolve_output(const std::string& given, const std::string& fallback) {
  const fs::path p = given.empty() ? default_dir() / fallback : fs::path(given);
  return fs::absolute(p).lexically_normal().string();
}

std::string resolve_input(const std::string& given) {
  const fs::path p = fs::absolute(given).lexically_normal();
  if (!fs::is_regular_file(p)) data_error("input file not found: " + given);
  return p.string();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) data_error("cannot write " + path);
  out << text;
  if (!out) data_error("write failed for " + path);
}

std::string digest(const std::string& path) {
  LibString hex;
  check(semlink_file_digest(path.c_str(), &hex.p));
  return hex.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    data_error(what + " is not valid JSON: " + e.what());
  }
}

// What a subcommand read and wrote; drives the manifest.
struct Effects {
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;  // byte-deterministic outputs only
  std::vector<std::uint64_t> seeds;
  std::string manifest;
};

// Output paths are prepared (parent directories created) and checked
// against the inputs before any work starts.
void prepare_paths(const std::vector<std::string>& inputs, const std::vector<std::string>& outputs) {
  std::set<std::string> in(inputs.begin(), inputs.end());
  for (const auto& o : outputs) {
    if (in.count(o)) usage_error("output would overwrite input " + o);
    const fs::path p(o);
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    if (ec) data_error("cannot create directory " + p.parent_path().string() + ": " + ec.message());
  }
}

Samples load_samples(const std::string& path) {
  Samples s;
  check(semlink_samples_load(path.c_str(), &s.p));
  return s;
}

void base_and_inventory(const json& o, Samples& base, Inventory& inv) {
  if (o["base"].get<std::string>().empty()) {
    check(semlink_scan_generate(&base.p));
  } else {
    check(semlink_samples_load(o["base"].get<std::string>().c_str(), &base.p));
  }
  if (o["inventory"].get<std::string>().empty()) {
    check(semlink_scan_inventory(o["primitives"].get<std::size_t>(),
                                 o["variants"].get<std::size_t>(), &inv.p));
  } else {
    check(semlink_inventory_load(o["inventory"].get<std::string>().c_str(), &inv.p));
  }
}

std::vector<std::string> optional_inputs(const json& o, std::initializer_list<const char*> keys) {
  std::vector<std::string> out;
  for (const char* k : keys) {
    if (o.contains(k) && !o[k].get<std::string>().empty()) out.push_back(o[k].get<std::string>());
  }
  return out;
}

// ---------------------------------------------------------------- commands

Effects cmd_gen_scan(const json& o) {
  Effects fx;
  fx.outputs = {o["out"]};
  prepare_paths({}, fx.outputs);
  Samples s;
  check(semlink_scan_generate(&s.p));
  check(semlink_samples_save(s.p, o["out"].get<std::string>().c_str()));
  note("wrote " + std::to_string(semlink_samples_size(s.p)) + " commands to " +
       o["out"].get<std::string>());
  fx.manifest = o["out"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_scan_inventory(const json& o) {
  Effects fx;
  fx.outputs = {o["out"]};
  prepare_paths({}, fx.outputs);
  Inventory inv;
  check(semlink_scan_inventory(o["primitives"], o["variants"], &inv.p));
  check(semlink_inventory_save(inv.p, o["out"].get<std::string>().c_str()));
  fx.manifest = o["out"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_derive_sql(const json& o) {
  Effects fx;
  fx.inputs = {o["corpus"]};
  fx.outputs = {o["out_samples"], o["out_inventory"]};
  prepare_paths(fx.inputs, fx.outputs);
  Samples s;
  Inventory inv;
  check(semlink_derive_sql(o["corpus"].get<std::string>().c_str(),
                           o["preset"].get<std::string>().c_str(), o["primitives"],
                           o["variants"], &s.p, &inv.p));
  check(semlink_samples_save(s.p, o["out_samples"].get<std::string>().c_str()));
  check(semlink_inventory_save(inv.p, o["out_inventory"].get<std::string>().c_str()));
  note("derived " + std::to_string(semlink_samples_size(s.p)) + " samples, " +
       std::to_string(semlink_inventory_size(inv.p)) + " primitives");
  fx.manifest = o["out_samples"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_augment(const json& o) {
  Effects fx;
  fx.inputs = optional_inputs(o, {"base", "inventory"});
  fx.outputs = {o["out_train"], o["out_test"], o["out_meta"]};
  prepare_paths(fx.inputs, fx.outputs);
  Samples base, train, test;
  Inventory inv;
  base_and_inventory(o, base, inv);
  LibString meta;
  check(semlink_augment(base.p, inv.p, o["scheme"].get<std::string>().c_str(),
                        o["level"].get<std::string>().c_str(), &train.p, &test.p, &meta.p));
  check(semlink_samples_save(train.p, o["out_train"].get<std::string>().c_str()));
  check(semlink_samples_save(test.p, o["out_test"].get<std::string>().c_str()));
  write_text(o["out_meta"], json::parse(meta.str()).dump(2) + "\n");
  note("train " + std::to_string(semlink_samples_size(train.p)) + " (base " +
       std::to_string(semlink_samples_size(base.p)) + "), test " +
       std::to_string(semlink_samples_size(test.p)));
  fx.manifest = o["out_train"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_test_set(const json& o) {
  Effects fx;
  fx.inputs = optional_inputs(o, {"base", "inventory"});
  fx.outputs = {o["out"]};
  prepare_paths(fx.inputs, fx.outputs);
  Samples base, test;
  Inventory inv;
  base_and_inventory(o, base, inv);
  check(semlink_replacement_test(base.p, inv.p, &test.p));
  check(semlink_samples_save(test.p, o["out"].get<std::string>().c_str()));
  note("test set " + std::to_string(semlink_samples_size(test.p)));
  fx.manifest = o["out"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_train(const json& o) {
  Effects fx;
  fx.inputs = {o["data"]};
  fx.outputs = {o["out"]};
  fx.seeds = {o["model"]["seed"].get<std::uint64_t>()};
  prepare_paths(fx.inputs, fx.outputs);
  Samples data = load_samples(o["data"]);
  Model m;
  check(semlink_model_train(data.p, o["model"].dump().c_str(), on_progress, nullptr, &m.p));
  check(semlink_model_save(m.p, o["out"].get<std::string>().c_str()));
  note("saved " + std::to_string(semlink_model_parameter_count(m.p)) + "-parameter model to " +
       o["out"].get<std::string>());
  fx.manifest = o["out"].get<std::string>() + ".manifest.json";
  return fx;
}

Effects cmd_eval(const json& o) {
  Effects fx;
  const std::string out = o["out"];
  LibString scores;
  if (o["mode"] == "files") {
    fx.inputs = {o["pred"], o["gold"]};
    fx.outputs = {out};
    prepare_paths(fx.inputs, fx.outputs);
    check(semlink_score_files(o["pred"].get<std::string>().c_str(),
                              o["gold"].get<std::string>().c_str(), &scores.p));
    write_text(out, scores.str());
  } else {
    fx.inputs = {o["model"], o["data"]};
    fx.outputs = {out, o["predictions"]};
    prepare_paths(fx.inputs, fx.outputs);
    Model m;
    check(semlink_model_load(o["model"].get<std::string>().c_str(), &m.p));
    Samples data = load_samples(o["data"]);
    LibString pred;
    check(semlink_model_predict(m.p, data.p, o["max_len"], &pred.p));
    write_text(o["predictions"], pred.str());
    check(semlink_model_evaluate(m.p, data.p, o["max_len"], &scores.p));
    write_text(out, json::parse(scores.str()).dump(2) + "\n");
  }
  std::cout << read_text(out);
  fx.manifest = out + ".manifest.json";
  return fx;
}

void plan_files(const json& plan, Effects& fx) {
  const fs::path dir = fs::path(plan["output"].get<std::string>()) / plan["id"].get<std::string>();
  for (const char* f : {"train.tsv", "eval.tsv", "report.json"}) fx.outputs.push_back((dir / f).string());
  for (const auto& s : plan["seeds"]) {
    const std::string stem = "seed_" + std::to_string(s.get<std::uint64_t>());
    for (const char* ext : {".ckpt", ".pred.tsv", ".metrics.jsonl"}) {
      fx.outputs.push_back((dir / (stem + ext)).string());
    }
    fx.seeds.push_back(s);
  }
  if (plan["dataset"] == "sql") fx.inputs.push_back(plan["corpus"]);
}

Effects cmd_run(const json& o) {
  Effects fx;
  const json& plan = o["plan"];
  plan_files(plan, fx);
  for (const auto& in : fx.inputs) resolve_input(in);
  prepare_paths(fx.inputs, fx.outputs);
  LibString report;
  check(semlink_run_plan(plan.dump().c_str(), on_progress, nullptr, &report.p));
  const auto r = json::parse(report.str());
  std::cout << plan["id"].get<std::string>() << " seq_acc " << r["mean"]["seq_acc"] << " ± "
            << r["std"]["seq_acc"] << " token_acc " << r["mean"]["token_acc"] << '\n';
  fx.manifest = (fs::path(plan["output"].get<std::string>()) / plan["id"].get<std::string>() /
                 "manifest.json")
                    .string();
  return fx;
}

Effects cmd_sweep(const json& o) {
  Effects fx;
  for (const auto& plan : o["plans"]) plan_files(plan, fx);
  std::sort(fx.inputs.begin(), fx.inputs.end());
  fx.inputs.erase(std::unique(fx.inputs.begin(), fx.inputs.end()), fx.inputs.end());
  for (const auto& in : fx.inputs) resolve_input(in);
  prepare_paths(fx.inputs, fx.outputs);
  prepare_paths(fx.inputs, {o["table"]});
  const json sweep{{"plans", o["plans"]}};
  LibString outcomes;
  check(semlink_sweep(sweep.dump().c_str(), o["jobs"], o["table"].get<std::string>().c_str(),
                      on_progress, nullptr, &outcomes.p));
  std::cout << outcomes.str();
  fx.manifest = o["table"].get<std::string>() + ".manifest.json";
  int worst = kOk;
  std::string first_error;
  for (const auto& item : json::parse(outcomes.str())) {
    if (item["ok"]) continue;
    const std::string kind = item["kind"];
    const int code = kind == "usage" ? kUsage : kind == "non_finite_loss" ? kNumeric : kData;
    if (worst == kOk) first_error = item["plan"].get<std::string>() + ": " + item["error"].get<std::string>();
    worst = std::max(worst, code);
  }
  // Outputs of failed plans do not exist; keep only what was written.
  std::erase_if(fx.outputs, [](const std::string& p) { return !fs::exists(p); });
  if (worst != kOk) {
    fx.outputs.clear();
    throw Failure{worst, "sweep finished with failures; first: " + first_error};
  }
  return fx;
}

using Command = Effects (*)(const json&);

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table = {
      {"gen-scan", cmd_gen_scan}, {"scan-inventory", cmd_scan_inventory},
      {"derive-sql", cmd_derive_sql}, {"augment", cmd_augment},
      {"test-set", cmd_test_set}, {"train", cmd_train},
      {"eval", cmd_eval}, {"run", cmd_run},
      {"sweep", cmd_sweep}};
  return table;
}

json digests(const std::vector<std::string>& paths) {
  json d = json::object();
  for (const auto& p : paths) d[p] = digest(p);
  return d;
}

// Every file a resolved command reads.
std::vector<std::string> declared_inputs(const json& o) {
  std::set<std::string> out;
  for (const char* key : {"data", "base", "inventory", "corpus", "pred", "gold", "model", "config",
                          "plan_file", "sweep_file"}) {
    if (o.contains(key) && o[key].is_string() && !o[key].get<std::string>().empty()) {
      out.insert(o[key].get<std::string>());
    }
  }
  auto add_corpus = [&](const json& plan) {
    if (plan["dataset"] == "sql") out.insert(plan["corpus"].get<std::string>());
  };
  if (o.contains("plan")) add_corpus(o["plan"]);
  if (o.contains("plans")) {
    for (const auto& p : o["plans"]) add_corpus(p);
  }
  return {out.begin(), out.end()};
}

// Runs a resolved command and writes its manifest.
json execute(const std::string& name, const json& options) {
  const json inputs = digests(declared_inputs(options));
  const Effects fx = commands().at(name)(options);
  for (const auto& [p, d] : inputs.items()) {
    if (digest(p) != d.get<std::string>()) data_error("input changed while running: " + p);
  }
  json manifest;
  manifest["tool"] = "semlink";
  manifest["version"] = semlink_version();
  manifest["subcommand"] = name;
  manifest["options"] = options;
  manifest["seeds"] = fx.seeds;
  manifest["inputs"] = inputs;
  manifest["outputs"] = digests(fx.outputs);
  write_text(fx.manifest, manifest.dump(2) + "\n");
  note("manifest " + fx.manifest);
  return manifest;
}

int rerun(const std::string& path) {
  const json manifest = parse_json(read_text(resolve_input(path)), path);
  if (!manifest.contains("subcommand") || !commands().count(manifest["subcommand"])) {
    data_error(path + " is not a semlink manifest");
  }
  for (const auto& [p, d] : manifest["inputs"].items()) {
    if (!fs::exists(p)) data_error("recorded input is missing: " + p);
    if (digest(p) != d.get<std::string>()) data_error("recorded input has changed: " + p);
  }
  const json again = execute(manifest["subcommand"], manifest["options"]);
  std::size_t same = 0;
  std::vector<std::string> differ;
  for (const auto& [p, d] : manifest["outputs"].items()) {
    if (again["outputs"].contains(p) && again["outputs"][p] == d) {
      ++same;
    } else {
      differ.push_back(p);
    }
  }
  if (!differ.empty()) {
    for (const auto& p : differ) std::cerr << "differs: " << p << '\n';
    data_error(std::to_string(differ.size()) + " output(s) not reproduced");
  }
  std::cout << "reproduced " << same << " output(s) byte-identically\n";
  return kOk;
}

// Flags override plan file values.
json plan_overrides(const std::vector<std::uint64_t>& seeds, const std::string& output,
                    int epochs, std::size_t eval_subsample, bool has_subsample) {
  json o = json::object();
  if (!seeds.empty()) o["seeds"] = seeds;
  if (!output.empty()) o["output"] = fs::absolute(output).lexically_normal().string();
  if (epochs > 0) o["model"] = {{"max_epochs", epochs}};
  if (has_subsample) o["eval_subsample"] = eval_subsample;
  return o;
}

json resolve_plan(json plan, const json& overrides) {
  if (!plan.is_object()) data_error("a plan must be a JSON object");
  if (!plan.contains("output") && std::getenv("SEMLINK_OUT_DIR")) {
    plan["output"] = default_dir().string();
  }
  for (const auto& [k, v] : overrides.items()) {
    if (k == "model" && plan.contains("model")) {
      plan["model"].merge_patch(v);
    } else {
      plan[k] = v;
    }
  }
  LibString resolved;
  check(semlink_plan_resolve(plan.dump().c_str(), &resolved.p));
  json r = json::parse(resolved.str());
  r["output"] = fs::absolute(r["output"].get<std::string>()).lexically_normal().string();
  if (r["dataset"] == "sql") r["corpus"] = resolve_input(r["corpus"]);
  return r;
}

json resolve_model(const std::string& config_path, const std::string& preset,
                   std::optional<std::uint64_t> seed, int epochs) {
  json cfg = json::object();
  if (!config_path.empty()) cfg = parse_json(read_text(config_path), config_path);
  if (!cfg.is_object()) data_error(config_path + ": a model config must be a JSON object");
  if (!preset.empty()) cfg["preset"] = preset;
  if (seed) cfg["seed"] = *seed;
  if (epochs > 0) cfg["max_epochs"] = epochs;
  LibString resolved;
  check(semlink_model_config_resolve(cfg.dump().c_str(), &resolved.p));
  return json::parse(resolved.str());
}

int run_cli(int argc, char** argv) {
  CLI::App app{"semlink: compositional data augmentation experiments"};
  app.require_subcommand(1);
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Also report per-epoch progress");
  app.add_flag("-q,--quiet", quiet, "No progress output");
  app.set_version_flag("--version", std::string(semlink_version()));

  std::string out, out2, out3, base, inventory, corpus, preset, scheme, level, data, config,
      pred, gold, model, predictions, plan_path, table, manifest_path;
  std::size_t primitives = 4, variants = 10, eval_subsample = 0;
  int epochs = 0, max_len = 0, jobs = 1;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;
  bool il = false, dl = false;

  auto* gen = app.add_subcommand("gen-scan", "Write all SCAN command/action pairs");
  gen->add_option("out", out, "Output sample file (default scan.tsv)");

  auto* sinv = app.add_subcommand("scan-inventory", "Write a SCAN concept inventory");
  sinv->add_option("out", out, "Output inventory (default inventory.txt)");
  sinv->add_option("--primitives", primitives, "Number of primitives (1-4)")->capture_default_str();
  sinv->add_option("--variants", variants, "Variants per primitive")->capture_default_str();

  auto* dsql = app.add_subcommand("derive-sql", "Derive samples and an inventory from a text-to-SQL corpus");
  dsql->add_option("--corpus", corpus, "Variable-annotated corpus (JSON)")->required();
  dsql->add_option("--preset", preset, "Hypernym preset")->required()->check(CLI::IsMember({"geo", "adv"}));
  dsql->add_option("--primitives", primitives, "Keep the first N hypernym classes (0 = all)");
  dsql->add_option("--variants", variants, "Variants sampled per primitive (0 = preset)");
  dsql->add_option("--out-samples", out, "Sample file (default <preset>.tsv)");
  dsql->add_option("--out-inventory", out2, "Inventory file (default <preset>.inventory.txt)");

  auto* aug = app.add_subcommand("augment", "Build an augmented training set and its test set");
  aug->add_option("--base", base, "Base samples (default: all SCAN commands)");
  aug->add_option("--inventory", inventory, "Inventory (default: SCAN inventory)");
  aug->add_option("--primitives", primitives, "SCAN inventory primitives")->capture_default_str();
  aug->add_option("--variants", variants, "SCAN inventory variants per primitive")->capture_default_str();
  auto* scheme_opt = aug->add_option("--scheme", scheme, "il | dl")->check(CLI::IsMember({"il", "dl"}));
  auto* il_flag = aug->add_flag("--il", il, "Same as --scheme il");
  auto* dl_flag = aug->add_flag("--dl", dl, "Same as --scheme dl");
  scheme_opt->excludes(il_flag)->excludes(dl_flag);
  il_flag->excludes(dl_flag);
  aug->add_option("--level", level, "standard | difficult | challenging")
      ->check(CLI::IsMember({"standard", "difficult", "challenging"}));
  aug->add_option("--out-train", out, "Training set (default train.tsv)");
  aug->add_option("--out-test", out2, "Test set (default test.tsv)");
  aug->add_option("--out-meta", out3, "Builder counts (default train.meta.json)");

  auto* tset = app.add_subcommand("test-set", "Build the replacement test set");
  tset->add_option("--base", base, "Base samples (default: all SCAN commands)");
  tset->add_option("--inventory", inventory, "Inventory (default: SCAN inventory)");
  tset->add_option("--primitives", primitives, "SCAN inventory primitives")->capture_default_str();
  tset->add_option("--variants", variants, "SCAN inventory variants per primitive")->capture_default_str();
  tset->add_option("--out", out, "Test set (default test.tsv)");

  auto* tr = app.add_subcommand("train", "Train a model on a sample file");
  tr->add_option("data", data, "Training samples")->required();
  tr->add_option("--out", out, "Checkpoint (default model.ckpt)");
  tr->add_option("--config", config, "Model configuration (JSON)");
  tr->add_option("--preset", preset, "desk | full")->check(CLI::IsMember({"desk", "full"}));
  auto* seed_opt = tr->add_option("--seed", seed, "Training seed");
  tr->add_option("--epochs", epochs, "Training epochs");

  auto* ev = app.add_subcommand("eval", "Score predictions, or evaluate a checkpoint on a sample file");
  auto* pred_opt = ev->add_option("--pred", pred, "Prediction file");
  auto* gold_opt = ev->add_option("--gold", gold, "Gold file");
  auto* model_opt = ev->add_option("--model", model, "Checkpoint");
  auto* data_opt = ev->add_option("--data", data, "Samples to evaluate the checkpoint on");
  ev->add_option("--predictions", predictions, "Prediction output (default predictions.tsv)");
  ev->add_option("--max-len", max_len, "Decoding length cap (default 2 x longest target + 2)");
  ev->add_option("--out", out, "Scores (default scores.json)");
  pred_opt->needs(gold_opt);
  gold_opt->needs(pred_opt);
  model_opt->needs(data_opt);
  data_opt->needs(model_opt);
  pred_opt->excludes(model_opt);

  auto* run = app.add_subcommand("run", "Run one experiment plan");
  run->add_option("plan", plan_path, "Plan file (JSON)")->required();
  run->add_option("--seeds", seeds, "Override the plan seeds");
  run->add_option("--output", out, "Override the output directory");
  run->add_option("--epochs", epochs, "Override the training epochs");
  auto* sub_opt = run->add_option("--eval-subsample", eval_subsample, "Override the test subsample size");

  auto* sw = app.add_subcommand("sweep", "Run a list of plans and write the CSV table");
  sw->add_option("sweep", plan_path, "Sweep file (JSON)")->required();
  sw->add_option("--jobs", jobs, "Plans run at once")->capture_default_str()->check(CLI::PositiveNumber);
  sw->add_option("--table", table, "CSV table (default sweep.csv)");
  sw->add_option("--seeds", seeds, "Override every plan's seeds");
  sw->add_option("--output", out, "Override every plan's output directory");
  sw->add_option("--epochs", epochs, "Override the training epochs");
  auto* sw_sub_opt = sw->add_option("--eval-subsample", eval_subsample, "Override the test subsample size");

  auto* re = app.add_subcommand("rerun", "Replay a manifest and verify its outputs");
  re->add_option("manifest", manifest_path, "Manifest file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }
  verbosity = quiet ? 0 : 1 + verbose;

  try {
    json o;
    std::string name;
    if (*gen) {
      name = "gen-scan";
      o["out"] = resolve_output(out, "scan.tsv");
    } else if (*sinv) {
      name = "scan-inventory";
      o["out"] = resolve_output(out, "inventory.txt");
      o["primitives"] = primitives;
      o["variants"] = variants;
    } else if (*dsql) {
      name = "derive-sql";
      o["corpus"] = resolve_input(corpus);
      o["preset"] = preset;
      o["primitives"] = dsql->count("--primitives") ? primitives : 0;
      o["variants"] = dsql->count("--variants") ? variants : 0;
      o["out_samples"] = resolve_output(out, preset + ".tsv");
      o["out_inventory"] = resolve_output(out2, preset + ".inventory.txt");
    } else if (*aug || *tset) {
      name = *aug ? "augment" : "test-set";
      o["base"] = base.empty() ? "" : resolve_input(base);
      o["inventory"] = inventory.empty() ? "" : resolve_input(inventory);
      o["primitives"] = primitives;
      o["variants"] = variants;
      if (*aug) {
        if (il) scheme = "il";
        if (dl) scheme = "dl";
        if (scheme.empty()) usage_error("augment needs --scheme il|dl (or --il / --dl)");
        if (level.empty()) usage_error("augment needs --level");
        o["scheme"] = scheme;
        o["level"] = level;
        o["out_train"] = resolve_output(out, "train.tsv");
        o["out_test"] = resolve_output(out2, "test.tsv");
        o["out_meta"] = resolve_output(out3, "train.meta.json");
      } else {
        o["out"] = resolve_output(out, "test.tsv");
      }
    } else if (*tr) {
      name = "train";
      o["data"] = resolve_input(data);
      if (!config.empty()) o["config"] = resolve_input(config);
      o["out"] = resolve_output(out, "model.ckpt");
      o["model"] = resolve_model(config, preset,
                                 seed_opt->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                                 epochs);
    } else if (*ev) {
      name = "eval";
      if (!pred.empty()) {
        o["mode"] = "files";
        o["pred"] = resolve_input(pred);
        o["gold"] = resolve_input(gold);
      } else if (!model.empty()) {
        o["mode"] = "model";
        o["model"] = resolve_input(model);
        o["data"] = resolve_input(data);
        o["predictions"] = resolve_output(predictions, "predictions.tsv");
        o["max_len"] = max_len;
      } else {
        usage_error("eval needs --pred/--gold or --model/--data");
      }
      o["out"] = resolve_output(out, "scores.json");
    } else if (*run) {
      name = "run";
      const std::string path = resolve_input(plan_path);
      o["plan_file"] = path;
      o["plan"] = resolve_plan(parse_json(read_text(path), plan_path),
                               plan_overrides(seeds, out, epochs, eval_subsample, sub_opt->count() > 0));
    } else if (*sw) {
      name = "sweep";
      const std::string path = resolve_input(plan_path);
      json file = parse_json(read_text(path), plan_path);
      if (file.is_array()) file = json{{"plans", file}};
      LibString resolved;
      check(semlink_sweep_resolve(file.dump().c_str(), &resolved.p));
      const json ov = plan_overrides(seeds, out, epochs, eval_subsample, sw_sub_opt->count() > 0);
      // Plans without an explicit output follow the default directory.
      std::set<std::string> explicit_output;
      for (const auto& p : file["plans"]) {
        if (p.contains("output") || (file.contains("defaults") && file["defaults"].contains("output"))) {
          explicit_output.insert(p.value("id", std::string("plan")));
        }
      }
      json plans = json::array();
      for (json p : json::parse(resolved.str())) {
        if (!explicit_output.count(p["id"].get<std::string>())) p.erase("output");
        plans.push_back(resolve_plan(p, ov));
      }
      o["sweep_file"] = path;
      o["plans"] = plans;
      o["jobs"] = jobs;
      o["table"] = resolve_output(table, "sweep.csv");
    } else if (*re) {
      return rerun(manifest_path);
    }
    execute(name, o);
    return kOk;
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << '\n';
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
