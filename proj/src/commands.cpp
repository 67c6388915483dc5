#include "hopqa/commands.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "hopqa/config.hpp"
#include "hopqa/corpus.hpp"
#include "hopqa/curriculum.hpp"
#include "hopqa/error.hpp"
#include "hopqa/eval.hpp"
#include "hopqa/gateway.hpp"
#include "hopqa/mathgen.hpp"
#include "hopqa/pvi.hpp"
#include "hopqa/review.hpp"
#include "hopqa/synthesis.hpp"

namespace hopqa {

namespace fs = std::filesystem;

namespace {

struct Run {
  config::RunConfig cfg;
  json counts = json::object();
  json skips = json::array();
  json outputs = json::object();
  std::optional<gateway::GatewayStats> gateway_stats;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(body);
  }
  if (failure) std::rethrow_exception(failure);
}

// Role lookup with "default" as the fallback role.
std::string role_backend(const config::RunConfig& cfg, const std::string& role) {
  if (!cfg.roles.count(role) && cfg.roles.count("default")) return config::backend_id_for_role(cfg, "default");
  return config::backend_id_for_role(cfg, role);
}

template <typename T, typename Parse>
T parse_setting(const std::string& field, const std::string& value, Parse parse) {
  try {
    return parse(value);
  } catch (const Error& e) {
    throw ConfigError(field, e.what());
  }
}

void finish_gateway(Run& run, const gateway::Gateway& gw) { run.gateway_stats = gw.stats(); }

// --- ingest ---------------------------------------------------------------------

struct IngestArgs {
  std::string topics_file;
  std::string endpoint;
  std::string out = "corpus.jsonl";
  std::optional<std::size_t> limit;
};

void cmd_ingest(Run& run, const IngestArgs& a) {
  std::vector<std::string> topics = run.cfg.topics;
  if (!a.topics_file.empty()) {
    topics.clear();
    for (const auto& line : split_lines(read_file(a.topics_file))) {
      auto t = trim(line);
      if (!t.empty() && t[0] != '#') topics.push_back(t);
    }
  }
  if (topics.empty()) throw ConfigError("topics.list", "no topics given (use --topics or topics.list)");
  if (a.endpoint.empty()) throw ConfigError("--endpoint", "retrieval endpoint is required");

  const auto rules = corpus::default_pii_rules();
  corpus::FetchOptions opts;
  opts.limit = a.limit.value_or(run.cfg.fetch_limit);
  opts.minhash = run.cfg.minhash;
  opts.rules = &rules;
  opts.cache_dir = run.cfg.cache_dir;
  opts.attempts = run.cfg.retry.attempts;
  opts.base_delay = run.cfg.retry.base_delay;

  std::unique_ptr<gateway::Gateway> gw;
  std::string pii_backend;
  if (run.cfg.pii_model) {
    pii_backend = role_backend(run.cfg, "pii");
    gw = config::make_gateway(run.cfg, {pii_backend});
  }

  std::vector<corpus::Document> docs;
  corpus::FetchReport report;
  for (const auto& topic : topics) {
    auto fetched = corpus::fetch_topic(topic, a.endpoint, opts, &report);
    spdlog::info("ingest: {} document(s) for topic '{}'", fetched.size(), topic);
    for (auto& d : fetched) {
      if (gw) {
        d.sanitized_text = corpus::sanitize_with_model(d.sanitized_text, rules, *gw, pii_backend);
        corpus::finalize(d, run.cfg.minhash);
      }
      docs.push_back(std::move(d));
    }
  }
  const auto fetched = docs.size();
  docs = corpus::dedup(std::move(docs), run.cfg.dedup_threshold);
  corpus::write_corpus(a.out, docs);

  run.counts = {{"topics", topics.size()},
                {"fetched", fetched},
                {"kept", docs.size()},
                {"dropped_duplicates", fetched - docs.size()},
                {"fetch_requests", report.requests},
                {"fetch_cache_hits", report.cache_hits},
                {"pages_skipped", report.skipped}};
  run.outputs["corpus"] = a.out;
  if (gw) finish_gateway(run, *gw);
}

// --- synthesize -----------------------------------------------------------------

struct SynthesizeArgs {
  std::string corpus;
  std::string qtype = "mc";
  std::string out = "dataset.jsonl";
  std::optional<std::uint64_t> seed;
};

void cmd_synthesize(Run& run, const SynthesizeArgs& a) {
  std::vector<synthesis::QuestionType> types;
  if (a.qtype == "both") {
    types = {synthesis::QuestionType::multiple_choice, synthesis::QuestionType::true_false};
  } else {
    types = {parse_setting<synthesis::QuestionType>("--qtype", a.qtype, synthesis::question_type_from_string)};
  }

  synthesis::SynthesisConfig sc;
  sc.seed = config::require_seed(run.cfg, a.seed);
  sc.entity_backend = role_backend(run.cfg, "entity");
  sc.question_backend = role_backend(run.cfg, "question");
  sc.answer_backend = role_backend(run.cfg, "answer");
  sc.bias_check = run.cfg.bias_check;
  sc.bias_backend = sc.bias_check ? role_backend(run.cfg, "bias") : "";
  sc.retries = run.cfg.retries;
  sc.max_tokens = run.cfg.max_tokens;
  sc.temperature = run.cfg.temperature;
  sc.pair_threshold = run.cfg.dedup_threshold;
  sc.parallelism = run.cfg.parallelism;

  std::vector<std::string> ids = {sc.entity_backend, sc.question_backend, sc.answer_backend};
  if (sc.bias_check) ids.push_back(sc.bias_backend);
  auto gw = config::make_gateway(run.cfg, ids);

  const auto docs = corpus::read_corpus(a.corpus);
  std::map<std::string, synthesis::QaItem> items;
  std::size_t pairs = 0, unpaired = 0;
  for (auto type : types) {
    auto report = synthesis::run_synthesis(docs, type, *gw, sc);
    pairs += report.pairs;
    unpaired = report.unpaired;
    for (auto& item : report.items) items.emplace(item.id, std::move(item));
    for (const auto& s : report.skipped) {
      run.skips.push_back({{"type", synthesis::to_string(type)},
                           {"context_a", s.context_a},
                           {"context_b", s.context_b},
                           {"stage", s.stage},
                           {"reason", s.reason}});
    }
  }
  std::vector<synthesis::QaItem> out;
  for (auto& [id, item] : items) out.push_back(std::move(item));
  synthesis::write_dataset(a.out, out);
  synthesis::write_provenance(synthesis::provenance_path(a.out), out);

  run.counts = {{"documents", docs.size()},
                {"pairs", pairs},
                {"unpaired_documents", unpaired},
                {"items", out.size()},
                {"skipped", run.skips.size()}};
  run.outputs["dataset"] = a.out;
  run.outputs["provenance"] = synthesis::provenance_path(a.out).string();
  finish_gateway(run, *gw);
}

// --- pvi ------------------------------------------------------------------------

struct PviArgs {
  std::string dataset;
  std::string scorer;
  std::string out = "pvi.jsonl";
  std::string dataset_out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> k;
};

void cmd_pvi(Run& run, const PviArgs& a) {
  const std::string scorer = a.scorer.empty() ? config::backend_id_for_role(run.cfg, "scorer") : a.scorer;
  if (!run.cfg.backends.count(scorer)) throw ConfigError("backends.scorer", "backend '" + scorer + "' is not defined");
  const auto seed = config::require_seed(run.cfg, a.seed);
  const auto k = a.k.value_or(run.cfg.k);
  auto gw = config::make_gateway(run.cfg, {scorer});
  if (!gw->backend(scorer).supports_scoring()) {
    throw CapabilityError("backend '" + scorer + "' does not expose token log-probabilities");
  }

  auto items = synthesis::read_dataset(a.dataset);
  std::vector<pvi::PviRecord> records(items.size());
  pvi::PviOptions opts;
  opts.include_options = run.cfg.include_options;
  parallel_for(items.size(), run.cfg.parallelism,
               [&](std::size_t i) { records[i] = pvi::compute_pvi(items[i], *gw, scorer, opts); });
  pvi::normalize(records);
  if (!records.empty()) pvi::cluster_difficulty(records, std::min(k, records.size()), seed);
  pvi::write_records(a.out, records);

  std::map<std::string, std::size_t> levels;
  for (const auto& r : records) ++levels[r.difficulty];
  if (!a.dataset_out.empty()) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      items[i].pvi = records[i].pvi_bits;
      items[i].difficulty = records[i].difficulty;
    }
    synthesis::write_dataset(a.dataset_out, items);
    run.outputs["dataset"] = a.dataset_out;
  }
  run.counts = {{"items", items.size()}, {"k", k}, {"levels", levels}};
  run.outputs["pvi"] = a.out;
  finish_gateway(run, *gw);
}

// --- curriculum -----------------------------------------------------------------

struct CurriculumArgs {
  std::string dataset;
  std::string pvi;
  std::string strategy;
  std::optional<std::uint64_t> seed;
  std::optional<double> fraction;
  std::optional<double> ratio;
  std::string out = "manifest.jsonl";
};

void cmd_curriculum(Run& run, const CurriculumArgs& a) {
  const auto strategy = parse_setting<curriculum::Strategy>(
      a.strategy.empty() ? "curriculum.strategy" : "--strategy",
      a.strategy.empty() ? run.cfg.strategy : a.strategy, curriculum::strategy_from_string);
  const auto seed = config::require_seed(run.cfg, a.seed);
  const double fraction = a.fraction.value_or(run.cfg.fraction);
  const double ratio = a.ratio.value_or(run.cfg.ratio);
  if (!(fraction > 0 && fraction <= 1)) throw ConfigError("--fraction", "must be in (0, 1]");
  if (!(ratio > 0 && ratio < 1)) throw ConfigError("--ratio", "must be in (0, 1)");

  const auto items = synthesis::read_dataset(a.dataset);
  std::map<std::string, curriculum::PviInfo> pvi;
  if (!a.pvi.empty()) {
    for (const auto& r : pvi::read_records(a.pvi)) pvi[r.item_id] = {r.pvi_bits, r.difficulty};
  }
  std::vector<curriculum::LabeledItem> labeled;
  for (const auto& item : items) {
    auto it = pvi.find(item.id);
    labeled.push_back({item.id, it != pvi.end() ? it->second.difficulty : item.difficulty});
    if (it == pvi.end() && item.pvi) pvi[item.id] = {*item.pvi, item.difficulty};
  }

  auto s = curriculum::split(labeled, ratio, seed);
  for (const auto& w : s.warnings) spdlog::warn("curriculum: {}", w);
  auto ordered = curriculum::order(s.train, pvi, strategy, seed);
  auto manifest = curriculum::make_manifest(strategy, seed, std::move(ordered), s.test);
  manifest = curriculum::subset(manifest, fraction);
  curriculum::export_manifest(manifest, a.out);

  run.counts = {{"items", items.size()},
                {"train_full", manifest.full_train_size},
                {"train", manifest.train_order.size()},
                {"test", manifest.test_ids.size()},
                {"warnings", s.warnings}};
  run.outputs["manifest"] = a.out;
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string dataset;
  std::string model;
  std::string mode;
  std::string report = "report.json";
  std::string pvi;
};

fs::path records_path(const fs::path& report) {
  auto p = report;
  p.replace_extension(".records.jsonl");
  return p;
}

void cmd_eval(Run& run, const EvalArgs& a) {
  const auto mode = parse_setting<eval::PromptMode>(a.mode.empty() ? "eval.mode" : "--mode",
                                                    a.mode.empty() ? run.cfg.mode : a.mode,
                                                    eval::prompt_mode_from_string);
  const std::string model = a.model.empty() ? role_backend(run.cfg, "eval") : a.model;
  auto gw = config::make_gateway(run.cfg, {model});

  auto items = synthesis::read_dataset(a.dataset);
  if (!a.pvi.empty()) {
    std::map<std::string, std::string> level;
    for (const auto& r : pvi::read_records(a.pvi)) level[r.item_id] = r.difficulty;
    for (auto& item : items) {
      if (auto it = level.find(item.id); it != level.end()) item.difficulty = it->second;
    }
  }
  eval::EvalOptions opts;
  opts.token_budget = run.cfg.token_budget;
  opts.max_tokens = run.cfg.eval_max_tokens;
  opts.json_question = run.cfg.json_question;
  opts.parallelism = run.cfg.parallelism;
  auto report = eval::evaluate(items, *gw, model, mode, opts);

  const auto rec_path = records_path(a.report);
  std::vector<json> rows;
  for (const auto& r : report.records) rows.push_back(r.to_json());
  write_file_atomic(rec_path, to_jsonl(rows));
  auto summary = report.to_json();
  summary["records"] = rec_path.string();
  write_file_atomic(a.report, summary.dump(2) + "\n");

  run.counts = {{"items", items.size()}, {"correct", report.overall.correct}, {"errored", report.overall.errored}};
  run.outputs["report"] = a.report;
  run.outputs["records"] = rec_path.string();
  finish_gateway(run, *gw);
}

// --- rouge ----------------------------------------------------------------------

struct RougeArgs {
  std::string candidates;
  std::string references;
  std::string out = "rouge.json";
};

std::vector<std::pair<std::string, std::string>> read_texts(const fs::path& path) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    if (row.is_string()) {
      out.emplace_back(std::to_string(line - 1), row.get<std::string>());
    } else if (row.is_object() && row.contains("text") && row["text"].is_string()) {
      out.emplace_back(row.contains("id") ? row["id"].get<std::string>() : std::to_string(line - 1),
                       row["text"].get<std::string>());
    } else {
      throw Error(path.string() + ":" + std::to_string(line) + ": expected a string or {id, text}");
    }
  }
  return out;
}

json score_json(const eval::RougeScore& s) { return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}}; }

void cmd_rouge(Run& run, const RougeArgs& a) {
  const auto cands = read_texts(a.candidates);
  std::map<std::string, std::string> refs;
  for (const auto& [id, text] : read_texts(a.references)) refs[id] = text;

  const std::vector<std::pair<const char*, eval::RougeVariant>> variants = {
      {"rouge1", eval::RougeVariant::rouge1}, {"rouge2", eval::RougeVariant::rouge2}, {"rougeL", eval::RougeVariant::rougeL}};
  json pairs = json::array();
  std::map<std::string, eval::RougeScore> sums;
  for (const auto& [id, cand] : cands) {
    auto ref = refs.find(id);
    if (ref == refs.end()) throw Error("no reference for candidate " + id);
    if (trim(ref->second).empty()) throw Error("reference " + id + " is empty");
    json row = {{"id", id}};
    for (const auto& [name, v] : variants) {
      auto s = eval::rouge(cand, ref->second, v);
      row[name] = score_json(s);
      auto& acc = sums[name];
      acc.precision += s.precision;
      acc.recall += s.recall;
      acc.f1 += s.f1;
    }
    pairs.push_back(row);
  }
  json mean = json::object();
  for (const auto& [name, v] : variants) {
    auto s = sums[name];
    const double n = cands.empty() ? 1.0 : static_cast<double>(cands.size());
    mean[name] = score_json({s.precision / n, s.recall / n, s.f1 / n});
  }
  write_file_atomic(a.out, json{{"pairs", pairs}, {"mean", mean}, {"count", cands.size()}}.dump(2) + "\n");
  run.counts = {{"pairs", cands.size()}};
  run.outputs["rouge"] = a.out;
}

// --- mathgen --------------------------------------------------------------------

struct MathgenArgs {
  std::string mode = "direct";
  std::string topic = "noma";
  int count = 1;
  std::string out = "problems.jsonl";
  std::optional<std::uint64_t> seed;
  std::optional<int> max_rounds;
};

void cmd_mathgen(Run& run, const MathgenArgs& a) {
  const auto mode = parse_setting<mathgen::Mode>("--mode", a.mode, mathgen::mode_from_string);
  if (a.count < 1) throw ConfigError("--count", "must be >= 1");
  mathgen::WorkflowOptions opts;
  opts.seed = config::require_seed(run.cfg, a.seed);
  opts.max_rounds = a.max_rounds.value_or(run.cfg.max_rounds);
  if (opts.max_rounds < 1) throw ConfigError("--max-rounds", "must be >= 1");
  opts.enhance = run.cfg.enhance;

  std::vector<std::string> ids;
  for (const auto& role : mathgen::kRoles) {
    const auto key = to_lower(role);
    if (run.cfg.roles.count(key)) {
      opts.backends[role] = config::backend_id_for_role(run.cfg, key);
      ids.push_back(opts.backends[role]);
    }
  }
  if (opts.backends.size() < mathgen::kRoles.size()) {
    opts.default_backend = run.cfg.roles.count("agents") ? config::backend_id_for_role(run.cfg, "agents")
                                                         : role_backend(run.cfg, "agents");
    ids.push_back(opts.default_backend);
  }
  auto gw = config::make_gateway(run.cfg, ids);

  std::vector<mathgen::MathProblem> problems(static_cast<std::size_t>(a.count));
  parallel_for(problems.size(), run.cfg.parallelism, [&](std::size_t i) {
    mathgen::Workflow wf(*gw, opts);
    problems[i] = wf.run(mode, a.topic, static_cast<int>(i));
  });
  std::size_t valid = 0;
  for (const auto& p : problems) valid += p.validation_status == "valid";
  const auto generated = problems.size();
  auto retained = mathgen::similarity_filter(std::move(problems), run.cfg.similarity_threshold);
  mathgen::write_problems(a.out, retained);

  run.counts = {{"generated", generated},
                {"valid", valid},
                {"rejected", generated - valid},
                {"retained", retained.size()}};
  run.outputs["problems"] = a.out;
  finish_gateway(run, *gw);
}

// --- review-serve ---------------------------------------------------------------

struct ReviewArgs {
  std::string store;
  std::vector<std::string> datasets;
  std::string addr = "127.0.0.1:8080";
  std::string token_env;
  std::string static_dir;
  std::string export_path;
};

std::atomic<review::Server*> g_server{nullptr};

void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

void cmd_review_serve(Run& run, const ReviewArgs& a) {
  std::vector<fs::path> datasets(a.datasets.begin(), a.datasets.end());
  review::Store store(datasets, a.store);
  run.counts = {{"items", store.state().size()}, {"journal_entries", store.journal_length()}};

  if (!a.export_path.empty()) {
    store.export_accepted(a.export_path);
    run.outputs["export"] = a.export_path;
    return;
  }

  const auto colon = a.addr.rfind(':');
  int port = -1;
  if (colon != std::string::npos) {
    try {
      port = std::stoi(a.addr.substr(colon + 1));
    } catch (const std::exception&) {
    }
  }
  if (port < 0 || port > 65535) throw ConfigError("--addr", "expected host:port, got '" + a.addr + "'");
  const auto host = a.addr.substr(0, colon);

  review::ServerOptions opts;
  const auto env = a.token_env.empty() ? run.cfg.token_env : a.token_env;
  if (!env.empty()) {
    const char* token = std::getenv(env.c_str());
    if (!token || !*token) throw ConfigError("review.token_env", "environment variable " + env + " is unset");
    opts.token = token;
  } else {
    spdlog::warn("review-serve: no --token-env given; the API is unauthenticated");
  }
  opts.static_dir = a.static_dir.empty() ? run.cfg.static_dir : fs::path(a.static_dir);

  review::Server server(store, opts);
  g_server = &server;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  try {
    server.listen(host, port);
  } catch (...) {
    g_server = nullptr;
    std::signal(SIGINT, prev_int);
    std::signal(SIGTERM, prev_term);
    throw;
  }
  g_server = nullptr;
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  run.counts["journal_entries"] = store.journal_length();
}

// --------------------------------------------------------------------------------

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("hopqa");
  if (!logger) logger = spdlog::stderr_color_mt("hopqa");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

void write_report(const fs::path& path, const std::string& command, int code, const Run& run, double seconds,
                  const std::string& error) {
  json report = {{"command", command},
                 {"exit_code", code},
                 {"wall_time_seconds", seconds},
                 {"counts", run.counts},
                 {"skips", run.skips},
                 {"outputs", run.outputs}};
  if (run.gateway_stats) report["gateway"] = run.gateway_stats->to_json();
  if (!error.empty()) report["error"] = error;
  try {
    write_file_atomic(path, report.dump(2) + "\n");
  } catch (const std::exception& e) {
    spdlog::error("cannot write run report {}: {}", path.string(), e.what());
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multi-hop QA dataset pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string report_path = "run-report.json";
  std::string log_level = "info";
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--run-report", report_path, "Run report path");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Fetch, sanitize and deduplicate documents");
  c_ingest->add_option("--topics", ingest.topics_file, "File with one topic per line");
  c_ingest->add_option("--endpoint", ingest.endpoint, "Search + extract endpoint");
  c_ingest->add_option("--out", ingest.out);
  c_ingest->add_option("--limit", ingest.limit, "Pages per topic");

  SynthesizeArgs synth;
  auto* c_synth = app.add_subcommand("synthesize", "Generate multi-hop QA items from a corpus");
  c_synth->add_option("--corpus", synth.corpus)->required();
  c_synth->add_option("--qtype", synth.qtype, "mc, tf or both");
  c_synth->add_option("--out", synth.out);
  c_synth->add_option("--seed", synth.seed);

  PviArgs pvi_args;
  auto* c_pvi = app.add_subcommand("pvi", "Score items and assign difficulty levels");
  c_pvi->add_option("--dataset", pvi_args.dataset)->required();
  c_pvi->add_option("--scorer", pvi_args.scorer, "Scoring backend id");
  c_pvi->add_option("--out", pvi_args.out);
  c_pvi->add_option("--dataset-out", pvi_args.dataset_out, "Also write the dataset with pvi and difficulty set");
  c_pvi->add_option("--seed", pvi_args.seed);
  c_pvi->add_option("--k", pvi_args.k, "Number of difficulty clusters");

  CurriculumArgs cur;
  auto* c_cur = app.add_subcommand("curriculum", "Split and order items into a training manifest");
  c_cur->add_option("--dataset", cur.dataset)->required();
  c_cur->add_option("--pvi", cur.pvi);
  c_cur->add_option("--strategy", cur.strategy);
  c_cur->add_option("--seed", cur.seed);
  c_cur->add_option("--fraction", cur.fraction);
  c_cur->add_option("--ratio", cur.ratio, "Train share of the split");
  c_cur->add_option("--out", cur.out);

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a model on a dataset");
  c_eval->add_option("--dataset", ev.dataset)->required();
  c_eval->add_option("--model", ev.model, "Backend id");
  c_eval->add_option("--mode", ev.mode, "zs or cot");
  c_eval->add_option("--report", ev.report);
  c_eval->add_option("--pvi", ev.pvi, "PVI records supplying difficulty levels");

  RougeArgs rg;
  auto* c_rouge = app.add_subcommand("rouge", "Score candidate texts against references");
  c_rouge->add_option("--candidates", rg.candidates)->required();
  c_rouge->add_option("--references", rg.references)->required();
  c_rouge->add_option("--out", rg.out);

  MathgenArgs mg;
  auto* c_math = app.add_subcommand("mathgen", "Generate NOMA math problems with the agent workflow");
  c_math->add_option("--mode", mg.mode, "direct or solution-first");
  c_math->add_option("--topic", mg.topic);
  c_math->add_option("--count", mg.count);
  c_math->add_option("--out", mg.out);
  c_math->add_option("--seed", mg.seed);
  c_math->add_option("--max-rounds", mg.max_rounds);

  ReviewArgs rv;
  auto* c_review = app.add_subcommand("review-serve", "Serve the review API");
  c_review->add_option("--store", rv.store, "Verdict journal")->required();
  c_review->add_option("--dataset", rv.datasets, "Dataset or problems file (repeatable)")->required();
  c_review->add_option("--addr", rv.addr, "host:port");
  c_review->add_option("--token-env", rv.token_env, "Environment variable holding the bearer token");
  c_review->add_option("--static-dir", rv.static_dir);
  c_review->add_option("--export", rv.export_path, "Write accepted items and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    setup_logging(log_level);
  } catch (const spdlog::spdlog_ex& e) {
    std::cerr << "invalid --log-level: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const auto start = std::chrono::steady_clock::now();
  Run run;
  int code = kExitOk;
  std::string error;
  try {
    if (!config_path.empty()) run.cfg = config::load_config(config_path);
    if (command == "ingest") cmd_ingest(run, ingest);
    else if (command == "synthesize") cmd_synthesize(run, synth);
    else if (command == "pvi") cmd_pvi(run, pvi_args);
    else if (command == "curriculum") cmd_curriculum(run, cur);
    else if (command == "eval") cmd_eval(run, ev);
    else if (command == "rouge") cmd_rouge(run, rg);
    else if (command == "mathgen") cmd_mathgen(run, mg);
    else if (command == "review-serve") cmd_review_serve(run, rv);
  } catch (const ConfigError& e) {
    code = kExitConfig;
    error = std::string("config error: ") + e.what();
  } catch (const std::exception& e) {
    code = kExitStage;
    error = std::string(command) + " failed: " + e.what();
  }
  if (!error.empty()) std::cerr << error << "\n";

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_report(report_path, command, code, run, seconds, error);
  return code;
}

}  // namespace hopqa
