#include "hopqa/gateway.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <thread>

#include "hopqa/error.hpp"

namespace hopqa::gateway {

namespace {

// Calls fn(name) for each {{name}}; fn returns the replacement.
template <typename Fn>
std::string substitute(std::string_view body, Fn&& fn) {
  std::string out;
  out.reserve(body.size());
  std::size_t i = 0;
  while (i < body.size()) {
    auto open = body.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(body.substr(i));
      break;
    }
    auto close = body.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(body.substr(i));
      break;
    }
    out.append(body.substr(i, open - i));
    out.append(fn(trim(body.substr(open + 2, close - open - 2))));
    i = close + 2;
  }
  return out;
}

}  // namespace

std::string render_template(std::string_view body, const Bindings& bindings) {
  return substitute(body, [&](const std::string& name) -> std::string {
    auto it = bindings.find(name);
    if (it == bindings.end()) throw TemplateError("unbound placeholder: " + name);
    return it->second;
  });
}

std::vector<std::string> placeholders(std::string_view body) {
  std::vector<std::string> names;
  substitute(body, [&](const std::string& name) {
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    return std::string();
  });
  return names;
}

void PromptRegistry::add(PromptTemplate t) {
  if (t.id.empty()) throw TemplateError("template id must be non-empty");
  if (templates_.contains(t.id)) throw TemplateError("duplicate template id: " + t.id);
  std::string id = t.id;
  templates_.emplace(std::move(id), std::move(t));
}

bool PromptRegistry::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const PromptTemplate& PromptRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw TemplateError("unknown template id: " + std::string(id));
  return it->second;
}

std::vector<std::string> PromptRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

std::string PromptRegistry::render(std::string_view id, const Bindings& bindings) const {
  return render_split(id, bindings).text();
}

Prompt PromptRegistry::render_split(std::string_view id, const Bindings& bindings) const {
  const auto& t = get(id);
  if (t.role_split) {
    return Prompt(render_template(t.role_split->first, bindings), render_template(t.role_split->second, bindings));
  }
  return Prompt(render_template(t.body, bindings));
}

json GenerateParams::to_json() const {
  json j = {{"max_tokens", max_tokens}, {"temperature", temperature}, {"stop", stop}, {"sample_index", sample_index}};
  if (seed) j["seed"] = *seed;
  return j;
}

double ScoreResult::total_nat() const {
  double s = 0.0;
  for (const auto& t : tokens) s += t.logprob_nat;
  return s;
}

std::string ScoreResult::joined_text() const {
  std::string s;
  for (const auto& t : tokens) s += t.text;
  return s;
}

json GatewayStats::to_json() const {
  return {{"requests", requests}, {"cache_hits", cache_hits}, {"backend_calls", backend_calls}, {"retries", retries}};
}

// ---------------------------------------------------------------------------
// ResponseCache

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!dir_.empty()) std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mu_);
  if (!on_disk()) {
    auto it = memory_.find(key);
    if (it == memory_.end()) return std::nullopt;
    return std::optional<json>(std::in_place, it->second);
  }
  auto p = path_for(key);
  if (!std::filesystem::exists(p)) return std::nullopt;
  try {
    auto entry = json::parse(read_file(p));
    return std::optional<json>(std::in_place, entry.at("response"));
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache entry {}: {}", p.string(), e.what());
    return std::nullopt;
  }
}

void ResponseCache::put(const std::string& key, const json& request, const json& response) {
  std::unique_lock lock(mu_);
  if (!on_disk()) {
    memory_[key] = response;
    return;
  }
  json entry = {{"request", request}, {"response", response}};
  write_file_atomic(path_for(key), entry.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Gateway

Gateway::Gateway(ResponseCache cache, RetryPolicy retry, std::ptrdiff_t max_in_flight)
    : cache_(std::move(cache)),
      retry_(retry),
      in_flight_(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

void Gateway::add_backend(std::shared_ptr<Backend> backend) {
  std::string id = backend->id();
  if (backends_.contains(id)) throw ConfigError("backends." + id, "duplicate backend id");
  backends_.emplace(std::move(id), std::move(backend));
}

bool Gateway::has_backend(std::string_view id) const { return backends_.find(id) != backends_.end(); }

Backend& Gateway::backend(std::string_view id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw ConfigError("backends", "unknown backend id '" + std::string(id) + "'");
  return *it->second;
}

std::string Gateway::request_key(const json& request) {
  // nlohmann::json objects keep keys sorted, so dump() is canonical.
  return sha256_hex(request.dump());
}

template <typename Fn>
json Gateway::call_with_retry(const std::string& what, Fn&& fn) {
  const int attempts = std::max(1, retry_.attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      in_flight_.acquire();
      struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
      } release{in_flight_};
      ++backend_calls_;
      return fn();
    } catch (const TransportError& e) {
      if (attempt >= attempts) {
        throw TransportError(what + " failed after " + std::to_string(attempts) + " attempts: " + e.what());
      }
      ++retries_;
      double factor = 1.0;
      {
        std::lock_guard lock(jitter_mu_);
        factor = 1.0 + retry_.jitter * (2.0 * jitter_rng_.unit() - 1.0);
      }
      auto base = retry_.base_delay.count() * (1LL << (attempt - 1));
      auto delay = std::chrono::milliseconds(static_cast<long long>(std::llround(base * factor)));
      spdlog::warn("{}: transport error ({}), retry {}/{} in {} ms", what, e.what(), attempt, attempts - 1,
                   delay.count());
      sleeper_(delay);
    }
  }
}

json Gateway::cached_call(const json& request, const std::function<json()>& call) {
  ++requests_;
  const std::string key = request_key(request);
  if (auto hit = cache_.get(key)) {
    ++cache_hits_;
    return *hit;
  }
  json response = call_with_retry(request.value("kind", "call") + " on " + request.value("backend", "?"), call);
  cache_.put(key, request, response);
  return response;
}

namespace {

std::string apply_stop(std::string text, const std::vector<std::string>& stop) {
  std::size_t cut = text.size();
  for (const auto& s : stop) {
    if (s.empty()) continue;
    auto pos = text.find(s);
    if (pos != std::string::npos) cut = std::min(cut, pos);
  }
  text.resize(cut);
  return text;
}

}  // namespace

Completion Gateway::generate(std::string_view backend_id, const Prompt& prompt, const GenerateParams& params) {
  if (params.max_tokens < 1) throw Error("max_tokens must be >= 1");
  Backend& b = backend(backend_id);
  json request = {{"kind", "generate"},
                  {"backend", b.id()},
                  {"model", b.model()},
                  {"system", prompt.system},
                  {"prompt", prompt.user},
                  {"params", params.to_json()}};
  json response = cached_call(request, [&] {
    Completion c = b.generate(prompt, params);
    return json{{"text", apply_stop(c.text, params.stop)}, {"tokens_used", c.tokens_used}};
  });
  return Completion{response.at("text").get<std::string>(), response.at("tokens_used").get<int>()};
}

ScoreResult Gateway::score(std::string_view backend_id, std::string_view context, std::string_view target) {
  if (target.empty()) throw Error("score target must be non-empty");
  Backend& b = backend(backend_id);
  if (!b.supports_scoring()) throw CapabilityError("backend '" + b.id() + "' does not support logprob scoring");
  json request = {{"kind", "score"}, {"backend", b.id()}, {"model", b.model()}, {"context", context}, {"target", target}};
  json response = cached_call(request, [&] {
    ScoreResult r = b.score(context, target);
    json toks = json::array();
    for (const auto& t : r.tokens) toks.push_back({{"text", t.text}, {"logprob", t.logprob_nat}});
    return json{{"tokens", toks}};
  });

  ScoreResult result;
  for (const auto& t : response.at("tokens")) {
    result.tokens.push_back({t.at("text").get<std::string>(), t.at("logprob").get<double>()});
  }
  if (result.joined_text() != target) {
    throw IntegrityError("scored tokens do not reconstruct the target on backend '" + b.id() + "'");
  }
  for (const auto& t : result.tokens) {
    if (!(t.logprob_nat <= 0.0) || !std::isfinite(t.logprob_nat)) {
      throw IntegrityError("backend '" + b.id() + "' returned invalid logprob for token '" + t.text + "'");
    }
  }
  return result;
}

GatewayStats Gateway::stats() const {
  return GatewayStats{requests_.load(), cache_hits_.load(), backend_calls_.load(), retries_.load()};
}

}  // namespace hopqa::gateway
