#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "hopqa/util.hpp"

namespace hopqa::gateway {

using Bindings = std::map<std::string, std::string, std::less<>>;

// A prompt as sent to a backend. Completion-style backends see text();
// chat-style backends send system and user as separate messages.
struct Prompt {
  std::string system;
  std::string user;

  Prompt() = default;
  Prompt(std::string text) : user(std::move(text)) {}  // NOLINT(google-explicit-constructor)
  Prompt(std::string sys, std::string usr) : system(std::move(sys)), user(std::move(usr)) {}

  std::string text() const { return system.empty() ? user : system + "\n\n" + user; }
};

struct PromptTemplate {
  std::string id;
  std::string body;
  // Optional system/user split. When set, body is ignored by render_split().
  std::optional<std::pair<std::string, std::string>> role_split;
};

// Replaces every {{name}} in `body` with bindings[name]. Throws TemplateError
// naming the first unbound placeholder.
std::string render_template(std::string_view body, const Bindings& bindings);
std::vector<std::string> placeholders(std::string_view body);

class PromptRegistry {
 public:
  // Registry preloaded with every template the pipeline uses.
  static PromptRegistry defaults();

  void add(PromptTemplate t);
  bool contains(std::string_view id) const;
  const PromptTemplate& get(std::string_view id) const;
  std::vector<std::string> ids() const;

  std::string render(std::string_view id, const Bindings& bindings) const;
  Prompt render_split(std::string_view id, const Bindings& bindings) const;

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

struct GenerateParams {
  int max_tokens = 256;
  double temperature = 0.0;
  std::vector<std::string> stop;
  // Distinguishes retries of the same prompt so they are cached separately.
  int sample_index = 0;
  std::optional<std::uint64_t> seed;

  json to_json() const;
};

struct Completion {
  std::string text;
  int tokens_used = 0;
};

struct TokenLogprob {
  std::string text;
  double logprob_nat = 0.0;
};

struct ScoreResult {
  std::vector<TokenLogprob> tokens;

  double total_nat() const;
  std::string joined_text() const;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual const std::string& id() const = 0;
  virtual const std::string& model() const = 0;
  virtual bool supports_scoring() const = 0;
  virtual Completion generate(const Prompt& prompt, const GenerateParams& params) = 0;
  // Per-token log-probabilities of `target` given `context` (may be empty).
  virtual ScoreResult score(std::string_view context, std::string_view target) = 0;
};

// Content-addressed response store: one JSON file per request under `dir`,
// named by the SHA-256 of the canonical request. With an empty dir the
// entries live in memory for the lifetime of the cache.
class ResponseCache {
 public:
  ResponseCache() = default;
  explicit ResponseCache(std::filesystem::path dir);
  ResponseCache(ResponseCache&& other) noexcept : dir_(std::move(other.dir_)), memory_(std::move(other.memory_)) {}

  bool on_disk() const { return !dir_.empty(); }
  std::optional<json> get(const std::string& key) const;
  void put(const std::string& key, const json& request, const json& response);
  std::filesystem::path path_for(const std::string& key) const;

 private:
  std::filesystem::path dir_;
  std::map<std::string, json> memory_;
  mutable std::shared_mutex mu_;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  double jitter = 0.2;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;
  std::size_t retries = 0;

  json to_json() const;
};

// Thread-safe front for all backends: caching, retries with exponential
// backoff, bounded in-flight requests, and response integrity checks.
class Gateway {
 public:
  explicit Gateway(ResponseCache cache = {}, RetryPolicy retry = {}, std::ptrdiff_t max_in_flight = 8);

  void add_backend(std::shared_ptr<Backend> backend);
  bool has_backend(std::string_view id) const;
  Backend& backend(std::string_view id) const;

  Completion generate(std::string_view backend_id, const Prompt& prompt, const GenerateParams& params);
  ScoreResult score(std::string_view backend_id, std::string_view context, std::string_view target);

  GatewayStats stats() const;
  void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

  static std::string request_key(const json& request);

 private:
  template <typename Fn>
  json call_with_retry(const std::string& what, Fn&& fn);
  json cached_call(const json& request, const std::function<json()>& call);

  std::map<std::string, std::shared_ptr<Backend>, std::less<>> backends_;
  ResponseCache cache_;
  RetryPolicy retry_;
  std::counting_semaphore<1024> in_flight_;
  std::function<void(std::chrono::milliseconds)> sleeper_;
  std::atomic<std::size_t> requests_{0}, cache_hits_{0}, backend_calls_{0}, retries_{0};
  std::mutex jitter_mu_;
  SeededRng jitter_rng_{0x5eed};
};

// Splits text the way the mock backend tokenizes it: each token is a run of
// leading whitespace plus at most three non-whitespace characters.
std::vector<std::string> mock_tokenize(std::string_view text);

// Deterministic scripted backend. See README for the script format.
class MockBackend : public Backend {
 public:
  struct GenerateRule {
    std::optional<std::string> prompt_sha256;
    std::vector<std::string> contains;
    std::vector<std::string> responses;
    std::optional<int> tokens_used;
    std::optional<std::string> refuse;
    int fail_times = 0;
  };
  struct ScoreRule {
    std::string target;
    std::vector<std::string> tokens;
    std::vector<double> unconditional;
    std::vector<double> conditional;
    std::map<std::string, std::vector<double>> contexts;
  };

  MockBackend(std::string id, std::string model = "mock");
  static std::shared_ptr<MockBackend> from_json(const json& script);
  static std::shared_ptr<MockBackend> from_file(const std::filesystem::path& path);

  void add_rule(GenerateRule rule);
  void add_score_rule(ScoreRule rule);
  // Maps SHA-256(prompt text) to a fixed completion.
  void add_exact(std::string_view prompt_text, std::string response);
  void set_scoring(bool enabled) { scoring_ = enabled; }
  // Unscripted scoring targets get deterministic hash-derived logprobs.
  void set_hash_scoring(bool enabled) { hash_scoring_ = enabled; }
  void set_default_response(std::optional<std::string> r) { default_response_ = std::move(r); }

  const std::string& id() const override { return id_; }
  const std::string& model() const override { return model_; }
  bool supports_scoring() const override { return scoring_; }
  Completion generate(const Prompt& prompt, const GenerateParams& params) override;
  ScoreResult score(std::string_view context, std::string_view target) override;

  std::size_t generate_calls() const { return generate_calls_.load(); }

 private:
  std::string id_, model_;
  std::vector<GenerateRule> rules_;
  std::vector<int> failures_left_;
  std::vector<ScoreRule> score_rules_;
  std::optional<std::string> default_response_;
  bool scoring_ = true;
  bool hash_scoring_ = false;
  std::mutex mu_;
  std::atomic<std::size_t> generate_calls_{0};
};

struct HttpBackendConfig {
  std::string id;
  std::string endpoint;        // generation URL, e.g. http://host:8080/v1/completions
  std::string score_endpoint;  // defaults to endpoint
  std::string model;
  std::string api_key;
  bool chat = false;
  bool scoring = true;
  int timeout_seconds = 120;
};

// OpenAI-compatible completion client. Scoring uses echo + logprobs.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  const std::string& id() const override { return config_.id; }
  const std::string& model() const override { return config_.model; }
  bool supports_scoring() const override { return config_.scoring; }
  Completion generate(const Prompt& prompt, const GenerateParams& params) override;
  ScoreResult score(std::string_view context, std::string_view target) override;

 private:
  json post(const std::string& url, const json& body) const;
  HttpBackendConfig config_;
};

}  // namespace hopqa::gateway
