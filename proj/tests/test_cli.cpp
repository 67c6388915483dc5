#include <doctest.h>

#include "hopqa/commands.hpp"
#include "hopqa/config.hpp"
#include "hopqa/curriculum.hpp"
#include "hopqa/error.hpp"
#include "hopqa/pvi.hpp"
#include "hopqa/synthesis.hpp"
#include "support.hpp"

using namespace hopqa;
using hopqa::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hopqa");
  args.insert(args.begin() + 1, "--log-level");
  args.insert(args.begin() + 2, "warn");
  return run_cli(args);
}

json report_at(const fs::path& p) { return json::parse(read_file(p)); }

std::string field_of(const std::string& ini) {
  try {
    config::parse_config(ini, ".");
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_CASE("config: defaults carry the pipeline hyperparameters") {
  auto cfg = config::parse_config("[run]\nseed = 3\n", "/base");
  CHECK(cfg.seed == 3u);
  CHECK(cfg.ratio == doctest::Approx(0.8));
  CHECK(cfg.k == 3);
  CHECK(cfg.token_budget == 30);
  CHECK(cfg.minhash.num_hashes == 128);
  CHECK(cfg.minhash.shingle_len == 5);
  CHECK(cfg.dedup_threshold == doctest::Approx(0.85));
  CHECK(cfg.include_options);
  CHECK(cfg.retry.attempts == 3);
  CHECK(cfg.max_rounds == 3);
}

TEST_CASE("config: field diagnostics") {
  CHECK(field_of("[run]\nsed = 1\n") == "run.sed");
  CHECK(field_of("[nope]\nx = 1\n") == "nope");
  CHECK(field_of("[run]\nseed = abc\n") == "run.seed");
  CHECK(field_of("[curriculum]\nratio = 1.5\n") == "curriculum.ratio");
  CHECK(field_of("[minhash]\nnum_hashes = 4\n") == "minhash.num_hashes");
  CHECK(field_of("[backends]\nscorer = ghost\n") == "backends.scorer");
  CHECK(field_of("[backend.m]\nkind = carrier-pigeon\n") == "backend.m.kind");
  CHECK(field_of("[backend.m]\nkind = mock\n") == "backend.m.script");
  CHECK(field_of("[pvi]\ninclude_options = maybe\n") == "pvi.include_options");
}

TEST_CASE("config: relative paths resolve against the config file") {
  auto cfg = config::parse_config("[run]\ncache_dir = c\n[backend.m]\nkind = mock\nscript = s.json\n", "/etc/hq");
  CHECK(cfg.cache_dir == fs::path("/etc/hq/c"));
  CHECK(cfg.backends.at("m").script == fs::path("/etc/hq/s.json"));
}

TEST_CASE("config: seeds must be explicit") {
  auto cfg = config::parse_config("", ".");
  CHECK_THROWS_AS(config::require_seed(cfg, std::nullopt), ConfigError);
  CHECK(config::require_seed(cfg, 11u) == 11u);
}

TEST_CASE("cli: pvi without a scorer backend exits 2 naming the field") {
  TempDir dir;
  write_file_atomic(dir / "c.ini", "[run]\nseed = 1\n");
  write_file_atomic(dir / "d.jsonl", "");
  const int code = cli({"--config", (dir / "c.ini").string(), "--run-report", (dir / "r.json").string(), "pvi",
                        "--dataset", (dir / "d.jsonl").string(), "--out", (dir / "p.jsonl").string()});
  CHECK(code == 2);
  auto report = report_at(dir / "r.json");
  CHECK(report["exit_code"] == 2);
  CHECK(report["error"].get<std::string>().find("backends.scorer") != std::string::npos);
}

TEST_CASE("cli: usage errors exit 2 and stage errors exit 1") {
  TempDir dir;
  CHECK(cli({"synthesize"}) == 2);
  CHECK(cli({"--run-report", (dir / "r.json").string(), "rouge", "--candidates", (dir / "missing.jsonl").string(),
             "--references", (dir / "missing.jsonl").string()}) == 1);
  CHECK(report_at(dir / "r.json")["exit_code"] == 1);
}

TEST_CASE("cli: rouge subcommand") {
  TempDir dir;
  write_file_atomic(dir / "c.jsonl", R"({"id": "x", "text": "the cat"})" "\n");
  write_file_atomic(dir / "r.jsonl", R"({"id": "x", "text": "the cat sat"})" "\n");
  REQUIRE(cli({"--run-report", (dir / "rr.json").string(), "rouge", "--candidates", (dir / "c.jsonl").string(),
               "--references", (dir / "r.jsonl").string(), "--out", (dir / "o.json").string()}) == 0);
  auto out = json::parse(read_file(dir / "o.json"));
  CHECK(out["mean"]["rouge1"]["f1"].get<double>() == doctest::Approx(0.8));
  CHECK(out["mean"]["rouge2"]["f1"].get<double>() == doctest::Approx(2.0 / 3.0));
  CHECK(out["mean"]["rougeL"]["f1"].get<double>() == doctest::Approx(0.8));
}

namespace {

struct PipelineRun {
  fs::path out;
  json reports = json::object();
};

// ingest -> synthesize -> pvi -> curriculum -> eval, all against the fixture
// wiki and the scripted mock.
PipelineRun run_pipeline(const fs::path& work, const fs::path& ini, const std::string& endpoint,
                         const std::string& tag) {
  PipelineRun r;
  r.out = work / tag;
  fs::create_directories(r.out);
  auto step = [&](const std::string& name, std::vector<std::string> args) {
    const auto report = r.out / (name + ".report.json");
    args.insert(args.begin(), {"--config", ini.string(), "--run-report", report.string()});
    const int code = cli(args);
    INFO(name << ": " << read_file(report));
    REQUIRE(code == 0);
    r.reports[name] = report_at(report);
  };
  const auto o = [&](const std::string& f) { return (r.out / f).string(); };
  step("ingest", {"ingest", "--topics", (hopqa::testing::fixtures_dir() / "e2e" / "topics.txt").string(), "--endpoint",
                  endpoint, "--out", o("corpus.jsonl")});
  step("synthesize", {"synthesize", "--corpus", o("corpus.jsonl"), "--qtype", "both", "--out", o("dataset.jsonl")});
  step("pvi", {"pvi", "--dataset", o("dataset.jsonl"), "--scorer", "mock", "--out", o("pvi.jsonl"), "--dataset-out",
               o("dataset.scored.jsonl")});
  step("curriculum", {"curriculum", "--dataset", o("dataset.jsonl"), "--pvi", o("pvi.jsonl"), "--strategy",
                      "pvi_ascending", "--seed", "7", "--fraction", "1.0", "--out", o("manifest.jsonl")});
  step("eval", {"eval", "--dataset", o("dataset.jsonl"), "--model", "mock", "--mode", "zs", "--pvi", o("pvi.jsonl"),
                "--report", o("report.json")});
  return r;
}

}  // namespace

TEST_CASE("cli: scripted end-to-end pipeline") {
  TempDir dir("hopqa-e2e");
  const auto ini = hopqa::testing::write_e2e_config(dir.path());
  hopqa::testing::WikiServer wiki(json::parse(read_file(hopqa::testing::fixtures_dir() / "e2e" / "pages.json")));

  auto first = run_pipeline(dir.path(), ini, wiki.endpoint(), "cold");

  SUBCASE("corpus") {
    auto docs = corpus::read_corpus(first.out / "corpus.jsonl");
    CHECK(docs.size() == 10);
    for (const auto& d : docs) CHECK(d.sanitized_text.find("editor@example.org") == std::string::npos);
    CHECK(first.reports["ingest"]["counts"]["kept"] == 10);
  }

  SUBCASE("dataset lines are schema-valid and reproduce the table rows") {
    const auto rows = read_jsonl(first.out / "dataset.jsonl");
    CHECK(rows.size() == 20);
    for (const auto& row : rows) CHECK(synthesis::validate_item_json(row).empty());
    CHECK(first.reports["synthesize"]["counts"]["skipped"] == 0);

    const auto expected = json::parse(read_file(hopqa::testing::fixtures_dir() / "e2e" / "expected_rows.json"));
    const auto find = [&](const json& want) -> const json* {
      for (const auto& row : rows) {
        if (row["question"] == want["question"]) return &row;
      }
      return nullptr;
    };
    const json* mc = find(expected["mc"]);
    REQUIRE(mc != nullptr);
    CHECK((*mc)["type"] == "multiple_choice");
    CHECK((*mc)["q1"] == expected["mc"]["q1"]);
    CHECK((*mc)["s2"] == expected["mc"]["s2"]);
    CHECK((*mc)["entity"] == "NOMA");
    CHECK((*mc)["answer"] == "A");
    std::vector<std::string> options;
    for (const auto& o : (*mc)["options"]) options.push_back(o["text"]);
    CHECK(options == expected["mc"]["options"].get<std::vector<std::string>>());

    const json* tf = find(expected["tf"]);
    REQUIRE(tf != nullptr);
    CHECK((*tf)["type"] == "true_false");
    CHECK((*tf)["q1"] == expected["tf"]["q1"]);
    CHECK((*tf)["s2"] == expected["tf"]["s2"]);
    CHECK((*tf)["answer"] == true);
  }

  SUBCASE("pvi, manifest and report") {
    auto records = pvi::read_records(first.out / "pvi.jsonl");
    CHECK(records.size() == 20);
    std::set<std::string> levels;
    for (const auto& r : records) levels.insert(r.difficulty);
    CHECK(levels == std::set<std::string>{"easy", "hard", "medium"});
    for (const auto& row : read_jsonl(first.out / "dataset.scored.jsonl")) {
      CHECK(synthesis::validate_item_json(row).empty());
      CHECK(row["pvi"].is_number());
    }

    auto m = curriculum::import_manifest(first.out / "manifest.jsonl");
    CHECK(m.train_order.size() + m.test_ids.size() == 20);
    CHECK(m.test_ids.size() == 4);
    CHECK(curriculum::check_manifest(m).empty());

    auto report = report_at(first.out / "report.json");
    CHECK(report["denominator"] == 20);
    CHECK(report["correct"] == 18);
    CHECK(report["overall"].get<double>() == doctest::Approx(0.9));
  }

  SUBCASE("warm-cache rerun is byte-identical and served from cache") {
    auto second = run_pipeline(dir.path(), ini, wiki.endpoint(), "warm");
    for (const auto* f : {"corpus.jsonl", "dataset.jsonl", "dataset.jsonl.provenance.jsonl", "pvi.jsonl",
                          "dataset.scored.jsonl", "manifest.jsonl", "report.records.jsonl"}) {
      INFO(f);
      CHECK(read_file(first.out / f) == read_file(second.out / f));
    }
    for (const auto* step : {"synthesize", "pvi", "eval"}) {
      INFO(step);
      const auto& gw = second.reports[step]["gateway"];
      CHECK(gw["requests"].get<int>() > 0);
      CHECK(gw["cache_hits"] == gw["requests"]);
      CHECK(gw["backend_calls"] == 0);
    }
    const auto& ingest = second.reports["ingest"]["counts"];
    CHECK(ingest["fetch_requests"] == 0);
    CHECK(ingest["fetch_cache_hits"].get<int>() > 0);
  }
}
