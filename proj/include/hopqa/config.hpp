#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hopqa/corpus.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::config {

struct BackendSpec {
  std::string id;
  std::string kind;  // mock | http
  std::filesystem::path script;
  std::string endpoint;
  std::string score_endpoint;
  std::string model;
  std::string key_env;
  bool chat = false;
  bool scoring = true;
  int timeout_seconds = 120;
};

// Every key of the INI file, with the defaults used when a key is absent.
// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::filesystem::path base_dir = ".";

  // [run]
  std::optional<std::uint64_t> seed;
  std::filesystem::path cache_dir;
  std::size_t parallelism = 4;
  std::size_t max_in_flight = 8;

  // [topics]
  std::vector<std::string> topics;

  // [backends] role -> backend id; [backend.<id>]
  std::map<std::string, std::string> roles;
  std::map<std::string, BackendSpec> backends;

  // [minhash]
  corpus::MinHashParams minhash;
  double dedup_threshold = 0.85;

  // [corpus]
  bool pii_model = false;
  std::size_t fetch_limit = 5;

  // [synthesis]
  int retries = 2;
  int max_tokens = 256;
  double temperature = 0.0;
  bool bias_check = true;

  // [pvi]
  bool include_options = true;
  std::size_t k = 3;

  // [curriculum]
  std::string strategy = "pvi_ascending";
  double ratio = 0.8;
  double fraction = 1.0;

  // [eval]
  std::string mode = "zero_shot";
  int token_budget = 30;
  int eval_max_tokens = 256;
  bool json_question = false;

  // [retry]
  gateway::RetryPolicy retry;

  // [mathgen]
  int max_rounds = 3;
  bool enhance = false;
  double similarity_threshold = 0.7;

  // [review]
  std::string token_env;
  std::filesystem::path static_dir;
};

// Throws ConfigError naming "section.key" for malformed or unknown entries.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Backend id for `role`; throws ConfigError("backends.<role>") when the role
// is unassigned or names an undefined backend.
const BackendSpec& backend_for_role(const RunConfig& cfg, const std::string& role);

// Id of the backend assigned to `role`.
std::string backend_id_for_role(const RunConfig& cfg, const std::string& role);

// Gateway holding the named backends, with the configured cache and retry
// policy. Throws ConfigError for ids without a [backend.<id>] section.
std::unique_ptr<gateway::Gateway> make_gateway(const RunConfig& cfg, const std::vector<std::string>& backend_ids);

std::uint64_t require_seed(const RunConfig& cfg, std::optional<std::uint64_t> override_seed);

}  // namespace hopqa::config
