#include "hopqa/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <set>
#include <sstream>

#include "hopqa/error.hpp"

namespace hopqa::config {

namespace pt = boost::property_tree;

namespace {

using Keys = std::set<std::string>;

const std::map<std::string, Keys> kSections = {
    {"run", {"seed", "cache_dir", "parallelism", "max_in_flight"}},
    {"topics", {"list"}},
    {"minhash", {"num_hashes", "shingle_len", "threshold"}},
    {"corpus", {"pii_model", "limit"}},
    {"synthesis", {"retries", "max_tokens", "temperature", "bias_check"}},
    {"pvi", {"include_options", "k"}},
    {"curriculum", {"strategy", "ratio", "fraction"}},
    {"eval", {"mode", "token_budget", "max_tokens", "json_question"}},
    {"retry", {"attempts", "base_delay_ms", "jitter"}},
    {"mathgen", {"max_rounds", "enhance", "similarity_threshold"}},
    {"review", {"token_env", "static_dir"}},
};

const Keys kBackendKeys = {"kind",    "script", "endpoint", "score_endpoint", "model",
                           "key_env", "chat",   "scoring",  "timeout_seconds"};

class Reader {
 public:
  Reader(const pt::ptree& tree, std::string section) : tree_(tree), section_(std::move(section)) {}

  std::optional<std::string> str(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <typename T>
  void number(const std::string& key, T& out) const {
    auto v = str(key);
    if (!v) return;
    std::istringstream in(*v);
    T parsed{};
    in >> parsed;
    if (in.fail() || !in.eof()) throw ConfigError(field(key), "expected a number, got '" + *v + "'");
    out = parsed;
  }

  void boolean(const std::string& key, bool& out) const {
    auto v = str(key);
    if (!v) return;
    const auto s = to_lower(*v);
    if (s == "true" || s == "yes" || s == "1" || s == "on") {
      out = true;
    } else if (s == "false" || s == "no" || s == "0" || s == "off") {
      out = false;
    } else {
      throw ConfigError(field(key), "expected a boolean, got '" + *v + "'");
    }
  }

  std::string field(const std::string& key) const { return section_ + "." + key; }

 private:
  const pt::ptree& tree_;
  std::string section_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

void check_range(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw ConfigError(field, what);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", "line " + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg;
  cfg.base_dir = base_dir;

  for (const auto& [name, section] : tree) {
    if (name.rfind("backend.", 0) == 0) {
      BackendSpec spec;
      spec.id = name.substr(8);
      if (spec.id.empty()) throw ConfigError(name, "backend id is empty");
      for (const auto& [key, _] : section) {
        if (!kBackendKeys.count(key)) throw ConfigError(name + "." + key, "unknown key");
      }
      Reader r(section, name);
      spec.kind = r.str("kind").value_or("");
      if (spec.kind != "mock" && spec.kind != "http") throw ConfigError(name + ".kind", "must be mock or http");
      if (auto s = r.str("script")) spec.script = resolve(base_dir, *s);
      spec.endpoint = r.str("endpoint").value_or("");
      spec.score_endpoint = r.str("score_endpoint").value_or("");
      spec.model = r.str("model").value_or(spec.id);
      spec.key_env = r.str("key_env").value_or("");
      r.boolean("chat", spec.chat);
      r.boolean("scoring", spec.scoring);
      r.number("timeout_seconds", spec.timeout_seconds);
      if (spec.kind == "mock" && spec.script.empty()) throw ConfigError(name + ".script", "mock backend needs a script");
      if (spec.kind == "http" && spec.endpoint.empty()) throw ConfigError(name + ".endpoint", "http backend needs an endpoint");
      cfg.backends[spec.id] = spec;
      continue;
    }
    if (name == "backends") {
      for (const auto& [role, value] : section) cfg.roles[role] = trim(value.get_value<std::string>());
      continue;
    }
    auto known = kSections.find(name);
    if (known == kSections.end()) throw ConfigError(name, "unknown section");
    for (const auto& [key, _] : section) {
      if (!known->second.count(key)) throw ConfigError(name + "." + key, "unknown key");
    }
  }

  auto section = [&](const char* name) -> const pt::ptree& {
    static const pt::ptree empty;
    auto it = tree.find(name);
    return it == tree.not_found() ? empty : it->second;
  };

  Reader run(section("run"), "run");
  if (run.str("seed")) {
    std::uint64_t seed = 0;
    run.number("seed", seed);
    cfg.seed = seed;
  }
  if (auto c = run.str("cache_dir")) cfg.cache_dir = resolve(base_dir, *c);
  run.number("parallelism", cfg.parallelism);
  run.number("max_in_flight", cfg.max_in_flight);
  check_range(cfg.parallelism >= 1, "run.parallelism", "must be >= 1");
  check_range(cfg.max_in_flight >= 1 && cfg.max_in_flight <= 1024, "run.max_in_flight", "must be in [1, 1024]");

  if (auto list = Reader(section("topics"), "topics").str("list")) {
    std::stringstream ss(*list);
    std::string t;
    while (std::getline(ss, t, ',')) {
      if (!trim(t).empty()) cfg.topics.push_back(trim(t));
    }
  }

  Reader mh(section("minhash"), "minhash");
  mh.number("num_hashes", cfg.minhash.num_hashes);
  mh.number("shingle_len", cfg.minhash.shingle_len);
  mh.number("threshold", cfg.dedup_threshold);
  check_range(cfg.minhash.num_hashes >= 16, "minhash.num_hashes", "must be >= 16");
  check_range(cfg.minhash.shingle_len >= 2, "minhash.shingle_len", "must be >= 2");
  check_range(cfg.dedup_threshold > 0 && cfg.dedup_threshold <= 1, "minhash.threshold", "must be in (0, 1]");

  Reader co(section("corpus"), "corpus");
  co.boolean("pii_model", cfg.pii_model);
  co.number("limit", cfg.fetch_limit);
  check_range(cfg.fetch_limit >= 1, "corpus.limit", "must be >= 1");

  Reader sy(section("synthesis"), "synthesis");
  sy.number("retries", cfg.retries);
  sy.number("max_tokens", cfg.max_tokens);
  sy.number("temperature", cfg.temperature);
  sy.boolean("bias_check", cfg.bias_check);
  check_range(cfg.retries >= 0, "synthesis.retries", "must be >= 0");
  check_range(cfg.max_tokens >= 1, "synthesis.max_tokens", "must be >= 1");

  Reader pv(section("pvi"), "pvi");
  pv.boolean("include_options", cfg.include_options);
  pv.number("k", cfg.k);
  check_range(cfg.k >= 1, "pvi.k", "must be >= 1");

  Reader cu(section("curriculum"), "curriculum");
  cfg.strategy = cu.str("strategy").value_or(cfg.strategy);
  cu.number("ratio", cfg.ratio);
  cu.number("fraction", cfg.fraction);
  check_range(cfg.ratio > 0 && cfg.ratio < 1, "curriculum.ratio", "must be in (0, 1)");
  check_range(cfg.fraction > 0 && cfg.fraction <= 1, "curriculum.fraction", "must be in (0, 1]");

  Reader ev(section("eval"), "eval");
  cfg.mode = ev.str("mode").value_or(cfg.mode);
  ev.number("token_budget", cfg.token_budget);
  ev.number("max_tokens", cfg.eval_max_tokens);
  ev.boolean("json_question", cfg.json_question);
  check_range(cfg.token_budget >= 1, "eval.token_budget", "must be >= 1");

  Reader re(section("retry"), "retry");
  re.number("attempts", cfg.retry.attempts);
  long long delay = cfg.retry.base_delay.count();
  re.number("base_delay_ms", delay);
  cfg.retry.base_delay = std::chrono::milliseconds(delay);
  re.number("jitter", cfg.retry.jitter);
  check_range(cfg.retry.attempts >= 1, "retry.attempts", "must be >= 1");
  check_range(delay >= 0, "retry.base_delay_ms", "must be >= 0");
  check_range(cfg.retry.jitter >= 0 && cfg.retry.jitter < 1, "retry.jitter", "must be in [0, 1)");

  Reader ma(section("mathgen"), "mathgen");
  ma.number("max_rounds", cfg.max_rounds);
  ma.boolean("enhance", cfg.enhance);
  ma.number("similarity_threshold", cfg.similarity_threshold);
  check_range(cfg.max_rounds >= 1, "mathgen.max_rounds", "must be >= 1");
  check_range(cfg.similarity_threshold > 0 && cfg.similarity_threshold <= 1, "mathgen.similarity_threshold",
              "must be in (0, 1]");

  Reader rv(section("review"), "review");
  cfg.token_env = rv.str("token_env").value_or("");
  if (auto d = rv.str("static_dir")) cfg.static_dir = resolve(base_dir, *d);

  for (const auto& [role, id] : cfg.roles) {
    if (!cfg.backends.count(id)) throw ConfigError("backends." + role, "backend '" + id + "' is not defined");
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError("config", e.what());
  }
  auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  return parse_config(text, base);
}

const BackendSpec& backend_for_role(const RunConfig& cfg, const std::string& role) {
  auto it = cfg.roles.find(role);
  if (it == cfg.roles.end() || it->second.empty()) throw ConfigError("backends." + role, "no backend assigned");
  auto b = cfg.backends.find(it->second);
  if (b == cfg.backends.end()) throw ConfigError("backends." + role, "backend '" + it->second + "' is not defined");
  return b->second;
}

std::string backend_id_for_role(const RunConfig& cfg, const std::string& role) {
  return backend_for_role(cfg, role).id;
}

std::unique_ptr<gateway::Gateway> make_gateway(const RunConfig& cfg, const std::vector<std::string>& backend_ids) {
  auto cache = cfg.cache_dir.empty() ? gateway::ResponseCache() : gateway::ResponseCache(cfg.cache_dir / "responses");
  auto gw = std::make_unique<gateway::Gateway>(std::move(cache), cfg.retry,
                                               static_cast<std::ptrdiff_t>(cfg.max_in_flight));
  for (const auto& id : backend_ids) {
    auto found = cfg.backends.find(id);
    if (found == cfg.backends.end()) throw ConfigError("backend." + id, "backend '" + id + "' is not defined");
    const auto& spec = found->second;
    if (gw->has_backend(spec.id)) continue;
    if (spec.kind == "mock") {
      // The section name is the backend id the rest of the config refers to.
      try {
        auto script = json::parse(read_file(spec.script));
        script["id"] = spec.id;
        if (!script.contains("model")) script["model"] = spec.model;
        gw->add_backend(gateway::MockBackend::from_json(script));
      } catch (const json::exception& e) {
        throw ConfigError("backend." + spec.id + ".script", e.what());
      } catch (const Error& e) {
        throw ConfigError("backend." + spec.id + ".script", e.what());
      }
    } else {
      gateway::HttpBackendConfig hc;
      hc.id = spec.id;
      hc.endpoint = spec.endpoint;
      hc.score_endpoint = spec.score_endpoint;
      hc.model = spec.model;
      hc.chat = spec.chat;
      hc.scoring = spec.scoring;
      hc.timeout_seconds = spec.timeout_seconds;
      if (!spec.key_env.empty()) {
        const char* key = std::getenv(spec.key_env.c_str());
        if (!key) throw ConfigError("backend." + spec.id + ".key_env", "environment variable " + spec.key_env + " is unset");
        hc.api_key = key;
      }
      gw->add_backend(std::make_shared<gateway::HttpBackend>(hc));
    }
  }
  return gw;
}

std::uint64_t require_seed(const RunConfig& cfg, std::optional<std::uint64_t> override_seed) {
  if (override_seed) return *override_seed;
  if (cfg.seed) return *cfg.seed;
  throw ConfigError("run.seed", "no seed given (set run.seed or pass --seed)");
}

}  // namespace hopqa::config
