#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "hopqa/util.hpp"

namespace hopqa::gateway {
class Gateway;
}

namespace hopqa::corpus {

using Signature = std::vector<std::uint64_t>;

struct Document {
  std::string id;
  std::string topic;
  std::string source_url;
  std::string retrieved_at;  // UTC, "YYYY-MM-DDTHH:MM:SSZ"; sorts chronologically
  std::string raw_text;
  std::string sanitized_text;
  Signature signature;

  friend bool operator==(const Document&, const Document&) = default;
};

json to_json(const Document& d);
Document document_from_json(const json& j);
std::vector<Document> read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const std::vector<Document>& docs);

// Deterministic id over (source_url, sanitized_text).
std::string document_id(std::string_view source_url, std::string_view sanitized_text);

// --- PII removal ------------------------------------------------------------

inline constexpr std::string_view kRedacted = "[REDACTED]";

struct PiiRule {
  std::string name;
  std::regex pattern;
};

using PiiRuleSet = std::vector<PiiRule>;

// E-mail addresses, phone numbers, @handles, IPv4 addresses.
PiiRuleSet default_pii_rules();

// Replaces every rule match with "[REDACTED]". Rules are applied in order.
std::string sanitize(std::string_view raw_text, const PiiRuleSet& rules);
bool matches_any(std::string_view text, const PiiRuleSet& rules);

// Optional model-assisted pass: asks `backend_id` for PII spans and redacts
// each verbatim occurrence. Runs after the regex pass.
std::string sanitize_with_model(std::string_view text, const PiiRuleSet& rules, gateway::Gateway& gw,
                                std::string_view backend_id);

// --- MinHash ----------------------------------------------------------------

struct MinHashParams {
  int num_hashes = 128;  // k_h
  int shingle_len = 5;
};

// Character shingles over lowercased, whitespace-collapsed text. Text shorter
// than shingle_len yields the single whole-text shingle.
std::vector<std::string> shingles(std::string_view text, int shingle_len);

Signature minhash_of_shingles(const std::vector<std::string>& shingle_set, int num_hashes);
Signature minhash_signature(std::string_view text, const MinHashParams& params);
// Fraction of agreeing slots.
double estimated_jaccard(const Signature& a, const Signature& b);

// Populates id and signature from sanitized_text.
void finalize(Document& doc, const MinHashParams& params);

// Keeps the newest document per URL, then drops the earlier-retrieved member
// of every pair whose estimated Jaccard is >= threshold. Output sorted by
// (topic, id).
std::vector<Document> dedup(std::vector<Document> corpus, double threshold);

// --- Retrieval ----------------------------------------------------------------

struct FetchOptions {
  std::size_t limit = 5;
  MinHashParams minhash;
  const PiiRuleSet* rules = nullptr;  // defaults when null
  std::filesystem::path cache_dir;    // raw responses; empty = no cache
  int attempts = 3;
  std::chrono::milliseconds base_delay{1000};
  int timeout_seconds = 30;
  std::function<std::string()> clock = utc_now_iso;
};

struct FetchReport {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t skipped = 0;
};

// Searches a MediaWiki-style endpoint for `topic` and fetches plain-text page
// extracts:
//   GET <endpoint>?action=query&list=search&srsearch=<topic>&srlimit=<n>&format=json
//   GET <endpoint>?action=query&prop=extracts|info&inprop=url&explaintext=1&titles=<t>&format=json
std::vector<Document> fetch_topic(const std::string& topic, const std::string& endpoint, const FetchOptions& options,
                                  FetchReport* report = nullptr);

}  // namespace hopqa::corpus
