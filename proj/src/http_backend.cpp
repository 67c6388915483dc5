#include <httplib.h>

#include "hopqa/error.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::gateway {

namespace {

struct Url {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint", "missing scheme in URL '" + url + "'");
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.score_endpoint.empty()) config_.score_endpoint = config_.endpoint;
  split_url(config_.endpoint);
}

json HttpBackend::post(const std::string& url, const json& body) const {
  auto [base, path] = split_url(url);
  httplib::Client client(base);
  client.set_connection_timeout(config_.timeout_seconds);
  client.set_read_timeout(config_.timeout_seconds);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw TransportError("POST " + url + ": " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500) {
    throw TransportError("POST " + url + ": HTTP " + std::to_string(res->status));
  }
  json parsed;
  try {
    parsed = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw TransportError("POST " + url + ": response is not JSON");
  }
  if (res->status != 200) {
    std::string message = res->body;
    if (parsed.contains("error")) {
      const auto& e = parsed["error"];
      message = e.is_object() ? e.value("message", e.dump()) : e.dump();
    }
    throw RefusalError(config_.id + " refused (HTTP " + std::to_string(res->status) + "): " + message);
  }
  return parsed;
}

Completion HttpBackend::generate(const Prompt& prompt, const GenerateParams& params) {
  json body = {{"model", config_.model}, {"max_tokens", params.max_tokens}, {"temperature", params.temperature}};
  if (!params.stop.empty()) body["stop"] = params.stop;
  if (params.seed) body["seed"] = *params.seed + static_cast<std::uint64_t>(params.sample_index);
  if (config_.chat) {
    json messages = json::array();
    if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
    messages.push_back({{"role", "user"}, {"content", prompt.user}});
    body["messages"] = messages;
  } else {
    body["prompt"] = prompt.text();
  }

  json res = post(config_.endpoint, body);
  try {
    const auto& choice = res.at("choices").at(0);
    std::string text = config_.chat ? choice.at("message").at("content").get<std::string>()
                                    : choice.at("text").get<std::string>();
    int used = 0;
    if (res.contains("usage") && res["usage"].contains("completion_tokens")) {
      used = res["usage"]["completion_tokens"].get<int>();
    } else {
      used = static_cast<int>(split_whitespace(text).size());
    }
    return Completion{std::move(text), used};
  } catch (const json::exception& e) {
    throw TransportError(config_.id + ": malformed completion response: " + e.what());
  }
}

ScoreResult HttpBackend::score(std::string_view context, std::string_view target) {
  if (!config_.scoring) throw CapabilityError("backend '" + config_.id + "' does not support logprob scoring");
  const std::string full = std::string(context) + std::string(target);
  json body = {{"model", config_.model}, {"prompt", full}, {"max_tokens", 0},
               {"echo", true},           {"logprobs", 0},  {"temperature", 0.0}};
  json res = post(config_.score_endpoint, body);

  json lp;
  try {
    lp = res.at("choices").at(0).at("logprobs");
  } catch (const json::exception&) {
    throw CapabilityError("backend '" + config_.id + "' returned no logprobs");
  }
  const auto& tokens = lp.at("tokens");
  const auto& logprobs = lp.at("token_logprobs");
  std::vector<std::size_t> offsets;
  if (lp.contains("text_offset")) {
    offsets = lp["text_offset"].get<std::vector<std::size_t>>();
  } else {
    std::size_t pos = 0;
    for (const auto& t : tokens) {
      offsets.push_back(pos);
      pos += t.get<std::string>().size();
    }
  }
  if (tokens.size() != logprobs.size() || tokens.size() != offsets.size()) {
    throw IntegrityError("backend '" + config_.id + "' returned ragged logprob arrays");
  }

  ScoreResult result;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto text = tokens[i].get<std::string>();
    const std::size_t begin = offsets[i], end = begin + text.size();
    if (end <= context.size()) continue;
    if (begin < context.size()) {
      throw IntegrityError("token '" + text + "' straddles the context/target boundary");
    }
    if (logprobs[i].is_null()) {
      throw IntegrityError("backend '" + config_.id + "' returned no logprob for target token " + std::to_string(i));
    }
    result.tokens.push_back({text, logprobs[i].get<double>()});
  }
  return result;
}

}  // namespace hopqa::gateway
