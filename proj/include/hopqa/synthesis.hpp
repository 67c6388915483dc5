#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hopqa/corpus.hpp"
#include "hopqa/error.hpp"
#include "hopqa/util.hpp"

namespace hopqa::gateway {
class Gateway;
}

namespace hopqa::synthesis {

enum class QuestionType { multiple_choice, true_false };

std::string to_string(QuestionType t);
QuestionType question_type_from_string(std::string_view s);  // accepts "mc"/"tf" too

struct Option {
  std::string label;
  std::string text;
  friend bool operator==(const Option&, const Option&) = default;
};

struct ProvenanceEntry {
  std::string model;
  std::string prompt_sha256;
  friend bool operator==(const ProvenanceEntry&, const ProvenanceEntry&) = default;
};

inline const std::vector<std::string> kBiasClasses = {"selection", "contextual", "order"};
inline const std::vector<std::string> kDifficulties = {"unset", "easy", "medium", "hard"};
inline const std::vector<std::string> kReviewStatuses = {"pending", "accepted", "rejected", "edited"};

struct QaItem {
  std::string id;
  QuestionType type = QuestionType::multiple_choice;
  std::string context_a;
  std::string context_b;
  std::string entity;
  std::string q1;
  std::string s2;
  std::string question;
  std::vector<Option> options;  // A-D for multiple choice, empty for true/false
  std::string answer;           // option label, or "true"/"false"
  std::string explanation;
  std::vector<std::string> chain;
  std::vector<std::string> bias_flags;  // sorted subset of kBiasClasses
  std::string difficulty = "unset";
  std::optional<double> pvi;
  std::string review = "pending";
  // Not part of the dataset line; written to the provenance sidecar.
  std::map<std::string, ProvenanceEntry> provenance;

  friend bool operator==(const QaItem&, const QaItem&) = default;
};

// Dataset line. Field names: id, type, context_a, context_b, entity, q1, s2,
// question, options, answer, explanation, chain, bias_flags, difficulty, pvi,
// review.
json to_json(const QaItem& item);
// Throws ValidationError listing every offending field.
QaItem item_from_json(const json& j);

// Schema and content checks. Returns offending field names, empty when valid.
// With `context_a_text` the entity-in-context rule is checked as well.
std::vector<std::string> validate_item_json(const json& j);
std::vector<std::string> validate_item(const QaItem& item, const std::string* context_a_text = nullptr);

std::vector<QaItem> read_dataset(const std::filesystem::path& path);
void write_dataset(const std::filesystem::path& path, const std::vector<QaItem>& items);
std::filesystem::path provenance_path(const std::filesystem::path& dataset_path);
void write_provenance(const std::filesystem::path& path, const std::vector<QaItem>& items);

std::string item_id(const std::string& context_a, const std::string& context_b, QuestionType type,
                    const std::string& question);

// The option text of the answer for multiple choice, the boolean otherwise.
std::string answer_text(const QaItem& item);
// Strings any of which may appear in the final reasoning step.
std::vector<std::string> answer_aliases(const QaItem& item);

// --- Reasoning chains -------------------------------------------------------

struct ChainVerdict {
  bool valid = false;
  std::vector<std::size_t> gaps;  // 1-based step positions
};

// Valid iff the chain is non-empty, no step is empty, no step repeats its
// predecessor, and the last step mentions one of `aliases` as a whole word.
ChainVerdict validate_chain(const std::vector<std::string>& chain, const std::vector<std::string>& aliases);

// --- Stage failures ---------------------------------------------------------

class StageFailed : public Error {
 public:
  StageFailed(std::string stage, const std::string& message) : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

class ExtractionFailed : public StageFailed {
 public:
  explicit ExtractionFailed(const std::string& m) : StageFailed("extraction", m) {}
};
class SubquestionFailed : public StageFailed {
 public:
  explicit SubquestionFailed(const std::string& m) : StageFailed("subquestion", m) {}
};
class IntegrationFailed : public StageFailed {
 public:
  explicit IntegrationFailed(const std::string& m) : StageFailed("integration", m) {}
};
class AnswerFailed : public StageFailed {
 public:
  explicit AnswerFailed(const std::string& m) : StageFailed("answer", m) {}
};

// --- Pipeline ---------------------------------------------------------------

struct SynthesisConfig {
  // Backend id per pipeline role.
  std::string entity_backend;
  std::string question_backend;
  std::string answer_backend;
  std::string bias_backend;
  int retries = 2;  // extra attempts per stage
  int max_tokens = 256;
  double temperature = 0.0;
  std::uint64_t seed = 0;
  bool bias_check = true;
  double pair_threshold = 0.85;
  std::size_t parallelism = 4;
};

struct AnswerParts {
  std::string answer;
  std::string explanation;
  std::vector<std::string> chain;
};

// Parses "Answer: ... / Explanation: ... / Reasoning: 1. ... 2. ..." replies.
std::optional<AnswerParts> parse_answer_reply(const std::string& reply);
// Parses "A. text" lines. Returns nothing unless exactly labels A-D appear.
std::optional<std::vector<Option>> parse_options(const std::string& reply);

class Synthesizer {
 public:
  Synthesizer(gateway::Gateway& gw, SynthesisConfig config);

  std::string extract_entity(const corpus::Document& doc, QaItem* record = nullptr);
  std::pair<std::string, std::string> generate_subquestions(const corpus::Document& a, const corpus::Document& b,
                                                            const std::string& entity, QuestionType type,
                                                            QaItem* record = nullptr);
  std::string integrate_questions(const std::string& q1, const std::string& s2, const corpus::Document& a,
                                  const corpus::Document& b, QuestionType type, QaItem* record = nullptr);
  // Fills options (multiple choice), answer, explanation and chain.
  void derive_answer(QaItem& item, const corpus::Document& a, const corpus::Document& b);
  std::vector<std::string> detect_bias(const QaItem& item, const corpus::Document& a, const corpus::Document& b);
  QaItem assemble(const corpus::Document& a, const corpus::Document& b, QuestionType type);

  const SynthesisConfig& config() const { return config_; }

 private:
  std::string call(const std::string& role, const std::string& backend, const std::string& template_id,
                   const std::map<std::string, std::string, std::less<>>& bindings, int attempt, QaItem* record);

  gateway::Gateway& gw_;
  SynthesisConfig config_;
};

// For each document, the same-topic partner with the highest estimated
// Jaccard strictly below `threshold` (ties: smaller id). Documents without a
// partner are omitted. Returned as index pairs into `docs`.
std::vector<std::pair<std::size_t, std::size_t>> pair_contexts(const std::vector<corpus::Document>& docs,
                                                               double threshold);

struct SkipRecord {
  std::string context_a;
  std::string context_b;
  std::string stage;
  std::string reason;
};

struct SynthesisReport {
  std::vector<QaItem> items;  // sorted by id
  std::vector<SkipRecord> skipped;
  std::size_t pairs = 0;
  std::size_t unpaired = 0;
  json to_json() const;  // counts and skips, not items
};

SynthesisReport run_synthesis(const std::vector<corpus::Document>& docs, QuestionType type, gateway::Gateway& gw,
                              const SynthesisConfig& config);

}  // namespace hopqa::synthesis
