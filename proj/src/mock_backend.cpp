#include <algorithm>
#include <cctype>

#include "hopqa/error.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::gateway {

std::vector<std::string> mock_tokenize(std::string_view text) {
  auto space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i;
    while (j < text.size() && space(text[j])) ++j;
    std::size_t k = j;
    while (k < text.size() && !space(text[k]) && k - j < 3) ++k;
    if (k == j) k = text.size();  // trailing whitespace
    out.emplace_back(text.substr(i, k - i));
    i = k;
  }
  return out;
}

MockBackend::MockBackend(std::string id, std::string model) : id_(std::move(id)), model_(std::move(model)) {}

std::shared_ptr<MockBackend> MockBackend::from_json(const json& script) {
  auto mock = std::make_shared<MockBackend>(script.value("id", "mock"), script.value("model", "mock"));
  mock->scoring_ = script.value("scoring", true);
  mock->hash_scoring_ = script.value("hash_scoring", false);
  if (script.contains("default_response") && !script["default_response"].is_null()) {
    mock->default_response_ = script["default_response"].get<std::string>();
  }
  for (const auto& r : script.value("generate", json::array())) {
    GenerateRule rule;
    if (r.contains("prompt_sha256")) rule.prompt_sha256 = r["prompt_sha256"].get<std::string>();
    if (r.contains("contains")) rule.contains = r["contains"].get<std::vector<std::string>>();
    if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
    if (r.contains("responses")) {
      for (const auto& s : r["responses"]) rule.responses.push_back(s.get<std::string>());
    }
    if (r.contains("tokens_used")) rule.tokens_used = r["tokens_used"].get<int>();
    if (r.contains("refuse")) rule.refuse = r["refuse"].get<std::string>();
    rule.fail_times = r.value("fail_times", 0);
    if (rule.responses.empty() && !rule.refuse) throw ConfigError("mock.generate", "rule has no responses");
    mock->add_rule(std::move(rule));
  }
  for (const auto& r : script.value("score", json::array())) {
    ScoreRule rule;
    rule.target = r.at("target").get<std::string>();
    rule.tokens = r.value("tokens", std::vector<std::string>{});
    rule.unconditional = r.at("unconditional").get<std::vector<double>>();
    rule.conditional = r.value("conditional", rule.unconditional);
    if (r.contains("contexts")) rule.contexts = r["contexts"].get<std::map<std::string, std::vector<double>>>();
    mock->add_score_rule(std::move(rule));
  }
  return mock;
}

std::shared_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ConfigError(path.string(), std::string("malformed mock script: ") + e.what());
  }
}

void MockBackend::add_rule(GenerateRule rule) {
  std::lock_guard lock(mu_);
  failures_left_.push_back(rule.fail_times);
  rules_.push_back(std::move(rule));
}

void MockBackend::add_score_rule(ScoreRule rule) {
  if (rule.tokens.empty()) rule.tokens = mock_tokenize(rule.target);
  std::string joined;
  for (const auto& t : rule.tokens) joined += t;
  if (joined != rule.target) throw ConfigError("mock.score", "tokens do not reconstruct target");
  auto check = [&](const std::vector<double>& row) {
    if (row.size() != rule.tokens.size()) throw ConfigError("mock.score", "row length differs from token count");
  };
  check(rule.unconditional);
  check(rule.conditional);
  for (const auto& [_, row] : rule.contexts) check(row);
  std::lock_guard lock(mu_);
  score_rules_.push_back(std::move(rule));
}

void MockBackend::add_exact(std::string_view prompt_text, std::string response) {
  GenerateRule rule;
  rule.prompt_sha256 = sha256_hex(prompt_text);
  rule.responses.push_back(std::move(response));
  add_rule(std::move(rule));
}

Completion MockBackend::generate(const Prompt& prompt, const GenerateParams& params) {
  ++generate_calls_;
  const std::string text = prompt.text();
  const std::string hash = sha256_hex(text);

  std::optional<GenerateRule> match;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
      const auto& r = rules_[i];
      bool ok = r.prompt_sha256 ? *r.prompt_sha256 == hash : !r.contains.empty();
      if (ok && !r.prompt_sha256) {
        ok = std::all_of(r.contains.begin(), r.contains.end(),
                         [&](const std::string& s) { return text.find(s) != std::string::npos; });
      }
      if (!ok) continue;
      if (failures_left_[i] > 0) {
        --failures_left_[i];
        throw TransportError("mock: scripted transport failure");
      }
      match = r;
      break;
    }
  }

  std::string full;
  int tokens_used = -1;
  if (match) {
    if (match->refuse) throw RefusalError("mock refused: " + *match->refuse);
    auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(0, params.sample_index)),
                                     match->responses.size() - 1);
    full = match->responses[idx];
    tokens_used = match->tokens_used.value_or(-1);
  } else if (default_response_) {
    full = *default_response_;
  } else {
    throw RefusalError("mock: no script for prompt " + hash.substr(0, 12));
  }

  for (const auto& s : params.stop) {
    if (s.empty()) continue;
    auto pos = full.find(s);
    if (pos != std::string::npos) full.resize(pos);
  }
  auto tokens = mock_tokenize(full);
  if (static_cast<int>(tokens.size()) > params.max_tokens) {
    tokens.resize(static_cast<std::size_t>(params.max_tokens));
    full.clear();
    for (const auto& t : tokens) full += t;
    tokens_used = -1;
  }
  return Completion{full, tokens_used >= 0 ? tokens_used : static_cast<int>(tokens.size())};
}

ScoreResult MockBackend::score(std::string_view context, std::string_view target) {
  if (!scoring_) throw CapabilityError("mock backend '" + id_ + "' has scoring disabled");
  ScoreResult result;
  {
    std::lock_guard lock(mu_);
    for (const auto& r : score_rules_) {
      if (r.target != target) continue;
      const std::vector<double>* row = &r.conditional;
      if (context.empty()) {
        row = &r.unconditional;
      } else if (auto it = r.contexts.find(std::string(context)); it != r.contexts.end()) {
        row = &it->second;
      }
      for (std::size_t i = 0; i < r.tokens.size(); ++i) result.tokens.push_back({r.tokens[i], (*row)[i]});
      return result;
    }
  }
  if (!hash_scoring_) throw CapabilityError("mock: no scoring table for target");

  // Tokens whose word appears in the context become more likely, which gives
  // question-relevant explanations positive information gain.
  const auto tokens = mock_tokenize(target);
  const std::uint64_t ctx_hash = fnv1a64(context);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string word = to_lower(trim(tokens[i]));
    const std::uint64_t h = splitmix64(fnv1a64(word) ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    double lp = -(0.1 + 5.0 * u);
    if (!context.empty()) {
      const double u2 = static_cast<double>(splitmix64(h ^ ctx_hash) >> 11) * 0x1.0p-53;
      bool seen = word.size() >= 2 && contains_icase(context, word);
      lp *= seen ? 0.3 : 0.9 + 0.2 * u2;
    }
    result.tokens.push_back({tokens[i], lp});
  }
  return result;
}

}  // namespace hopqa::gateway
