#include "hopqa/corpus.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <limits>
#include <set>
#include <thread>

#include "hopqa/error.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::corpus {

json to_json(const Document& d) {
  return {{"id", d.id},
          {"topic", d.topic},
          {"source_url", d.source_url},
          {"retrieved_at", d.retrieved_at},
          {"raw_text", d.raw_text},
          {"sanitized_text", d.sanitized_text},
          {"signature", d.signature}};
}

Document document_from_json(const json& j) {
  Document d;
  d.id = j.at("id").get<std::string>();
  d.topic = j.at("topic").get<std::string>();
  d.source_url = j.at("source_url").get<std::string>();
  d.retrieved_at = j.at("retrieved_at").get<std::string>();
  d.raw_text = j.at("raw_text").get<std::string>();
  d.sanitized_text = j.at("sanitized_text").get<std::string>();
  d.signature = j.at("signature").get<Signature>();
  return d;
}

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for (const auto& row : read_jsonl(path)) docs.push_back(document_from_json(row));
  return docs;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::vector<json> rows;
  rows.reserve(docs.size());
  for (const auto& d : docs) rows.push_back(to_json(d));
  write_file_atomic(path, to_jsonl(rows));
}

std::string document_id(std::string_view source_url, std::string_view sanitized_text) {
  std::string key(source_url);
  key.push_back('\n');
  key.append(sanitized_text);
  return short_hash(key);
}

// ---------------------------------------------------------------------------
// PII

PiiRuleSet default_pii_rules() {
  const auto flags = std::regex::ECMAScript | std::regex::optimize;
  return {
      {"email", std::regex(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,})", flags)},
      {"phone_intl", std::regex(R"(\+\d{1,3}[\s.\-]?\(?\d{1,4}\)?([\s.\-]?\d{2,4}){2,4})", flags)},
      {"phone", std::regex(R"(\(?\b\d{3}\)?[\s.\-]\d{3}[\s.\-]\d{4}\b)", flags)},
      {"handle", std::regex(R"(\B@[A-Za-z_][A-Za-z0-9_]{1,30})", flags)},
      {"ipv4", std::regex(R"(\b(\d{1,3}\.){3}\d{1,3}\b)", flags)},
  };
}

bool matches_any(std::string_view text, const PiiRuleSet& rules) {
  const std::string s(text);
  return std::any_of(rules.begin(), rules.end(), [&](const PiiRule& r) { return std::regex_search(s, r.pattern); });
}

std::string sanitize(std::string_view raw_text, const PiiRuleSet& rules) {
  std::string text(raw_text);
  // Redaction can expose a new match at a seam, so iterate to a fixed point.
  for (int pass = 0; pass < 8; ++pass) {
    std::string before = text;
    for (const auto& r : rules) text = std::regex_replace(text, r.pattern, std::string(kRedacted));
    if (text == before) break;
  }
  return text;
}

std::string sanitize_with_model(std::string_view text, const PiiRuleSet& rules, gateway::Gateway& gw,
                                std::string_view backend_id) {
  std::string out = sanitize(text, rules);
  static const auto registry = gateway::PromptRegistry::defaults();
  gateway::GenerateParams params;
  params.max_tokens = 256;
  auto reply = gw.generate(backend_id, registry.render_split("pii.detect", {{"text", out}}), params);
  for (const auto& line : split_lines(reply.text)) {
    std::string span = trim(line);
    if (span.empty() || span == "NONE" || span.size() < 3) continue;
    for (auto pos = out.find(span); pos != std::string::npos; pos = out.find(span, pos + kRedacted.size())) {
      out.replace(pos, span.size(), kRedacted);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// MinHash

std::vector<std::string> shingles(std::string_view text, int shingle_len) {
  if (shingle_len < 1) throw Error("shingle_len must be >= 1");
  const std::string norm = to_lower(collapse_whitespace(text));
  const auto n = static_cast<std::size_t>(shingle_len);
  std::set<std::string> out;
  if (norm.size() < n) {
    out.insert(norm);
  } else {
    for (std::size_t i = 0; i + n <= norm.size(); ++i) out.insert(norm.substr(i, n));
  }
  return {out.begin(), out.end()};
}

Signature minhash_of_shingles(const std::vector<std::string>& shingle_set, int num_hashes) {
  if (num_hashes < 1) throw Error("num_hashes must be >= 1");
  Signature sig(static_cast<std::size_t>(num_hashes), std::numeric_limits<std::uint64_t>::max());
  std::vector<std::uint64_t> seeds(sig.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = splitmix64(0x6d696e68617368ULL + i);
  for (const auto& s : shingle_set) {
    const std::uint64_t base = fnv1a64(s);
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = std::min(sig[i], splitmix64(base ^ seeds[i]));
  }
  return sig;
}

Signature minhash_signature(std::string_view text, const MinHashParams& params) {
  if (params.num_hashes < 16) throw Error("k_h must be >= 16");
  if (params.shingle_len < 2) throw Error("shingle_len must be >= 2");
  return minhash_of_shingles(shingles(text, params.shingle_len), params.num_hashes);
}

double estimated_jaccard(const Signature& a, const Signature& b) {
  if (a.size() != b.size() || a.empty()) throw Error("signature lengths differ or are empty");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

void finalize(Document& doc, const MinHashParams& params) {
  doc.id = document_id(doc.source_url, doc.sanitized_text);
  doc.signature = minhash_signature(doc.sanitized_text, params);
}

std::vector<Document> dedup(std::vector<Document> corpus, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("dedup threshold must be in (0, 1]");
  auto newer = [](const Document& a, const Document& b) {
    return std::tie(a.retrieved_at, a.id) > std::tie(b.retrieved_at, b.id);
  };
  std::sort(corpus.begin(), corpus.end(), newer);

  std::set<std::string> seen_urls;
  std::vector<Document> kept;
  for (auto& doc : corpus) {
    if (!seen_urls.insert(doc.source_url).second) continue;
    bool near_dup = std::any_of(kept.begin(), kept.end(), [&](const Document& k) {
      return estimated_jaccard(k.signature, doc.signature) >= threshold;
    });
    if (!near_dup) kept.push_back(std::move(doc));
  }
  std::sort(kept.begin(), kept.end(),
            [](const Document& a, const Document& b) { return std::tie(a.topic, a.id) < std::tie(b.topic, b.id); });
  return kept;
}

// ---------------------------------------------------------------------------
// Retrieval

namespace {

struct Endpoint {
  std::string base;
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint", "missing scheme in '" + url + "'");
  auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class RawFetcher {
 public:
  RawFetcher(const std::string& endpoint, const FetchOptions& opts, FetchReport& report)
      : ep_(parse_endpoint(endpoint)), endpoint_(endpoint), opts_(opts), report_(report) {}

  struct Raw {
    std::string body;
    std::string retrieved_at;
  };

  Raw get(const httplib::Params& params) {
    std::string canonical = endpoint_ + "?";
    for (const auto& [k, v] : params) canonical += k + "=" + v + "&";
    const std::string key = sha256_hex(canonical);
    const auto cache_file = opts_.cache_dir.empty() ? std::filesystem::path{}
                                                    : opts_.cache_dir / "fetch" / (key + ".json");
    if (!cache_file.empty() && std::filesystem::exists(cache_file)) {
      auto entry = json::parse(read_file(cache_file));
      ++report_.cache_hits;
      return {entry.at("body").get<std::string>(), entry.at("retrieved_at").get<std::string>()};
    }

    const int attempts = std::max(1, opts_.attempts);
    for (int attempt = 1;; ++attempt) {
      ++report_.requests;
      httplib::Client client(ep_.base);
      client.set_connection_timeout(opts_.timeout_seconds);
      client.set_read_timeout(opts_.timeout_seconds);
      auto res = client.Get(ep_.path, params, httplib::Headers{{"User-Agent", "hopqa-ingest/1.0"}});
      std::string failure;
      if (!res) {
        failure = httplib::to_string(res.error());
      } else if (res->status == 429 || res->status >= 500) {
        failure = "HTTP " + std::to_string(res->status);
      } else if (res->status != 200) {
        throw RefusalError("GET " + canonical + ": HTTP " + std::to_string(res->status));
      } else {
        Raw raw{res->body, opts_.clock()};
        if (!cache_file.empty()) {
          json entry = {{"url", canonical}, {"body", raw.body}, {"retrieved_at", raw.retrieved_at}};
          write_file_atomic(cache_file, entry.dump() + "\n");
        }
        return raw;
      }
      if (attempt >= attempts) {
        throw TransportError("GET " + canonical + " failed after " + std::to_string(attempts) +
                             " attempts: " + failure);
      }
      spdlog::warn("GET {}: {}, retrying", canonical, failure);
      std::this_thread::sleep_for(opts_.base_delay * (1 << (attempt - 1)));
    }
  }

 private:
  Endpoint ep_;
  std::string endpoint_;
  const FetchOptions& opts_;
  FetchReport& report_;
};

}  // namespace

std::vector<Document> fetch_topic(const std::string& topic, const std::string& endpoint, const FetchOptions& options,
                                  FetchReport* report) {
  if (options.limit < 1) throw Error("limit must be >= 1");
  FetchReport local;
  FetchReport& rep = report ? *report : local;
  RawFetcher fetcher(endpoint, options, rep);
  const PiiRuleSet defaults = options.rules ? PiiRuleSet{} : default_pii_rules();
  const PiiRuleSet& rules = options.rules ? *options.rules : defaults;

  auto search = fetcher.get({{"action", "query"},
                             {"list", "search"},
                             {"srsearch", topic},
                             {"srlimit", std::to_string(options.limit)},
                             {"format", "json"}});
  std::vector<std::string> titles;
  try {
    const auto parsed = json::parse(search.body);
    for (const auto& hit : parsed.at("query").at("search")) {
      titles.push_back(hit.at("title").get<std::string>());
      if (titles.size() >= options.limit) break;
    }
  } catch (const json::exception& e) {
    spdlog::warn("topic '{}': malformed search response skipped ({})", topic, e.what());
    ++rep.skipped;
    return {};
  }

  std::vector<Document> docs;
  for (const auto& title : titles) {
    auto page = fetcher.get({{"action", "query"},
                             {"prop", "extracts|info"},
                             {"inprop", "url"},
                             {"explaintext", "1"},
                             {"titles", title},
                             {"format", "json"}});
    try {
      const auto pages = json::parse(page.body).at("query").at("pages");
      if (pages.empty()) throw std::runtime_error("no pages");
      const auto& p = pages.begin().value();
      Document d;
      d.topic = topic;
      d.raw_text = p.at("extract").get<std::string>();
      d.source_url = p.contains("fullurl") ? p["fullurl"].get<std::string>() : endpoint + "#" + title;
      d.retrieved_at = page.retrieved_at;
      if (trim(d.raw_text).empty()) throw std::runtime_error("empty extract");
      d.sanitized_text = sanitize(d.raw_text, rules);
      finalize(d, options.minhash);
      docs.push_back(std::move(d));
    } catch (const std::exception& e) {
      spdlog::warn("topic '{}': page '{}' skipped ({})", topic, title, e.what());
      ++rep.skipped;
    }
  }
  return docs;
}

}  // namespace hopqa::corpus
