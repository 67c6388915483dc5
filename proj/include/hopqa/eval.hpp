#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hopqa/synthesis.hpp"
#include "hopqa/util.hpp"

namespace hopqa::gateway {
class Gateway;
}

namespace hopqa::eval {

enum class PromptMode { zero_shot, zero_shot_cot };

std::string to_string(PromptMode m);
PromptMode prompt_mode_from_string(std::string_view s);  // accepts "zs"/"cot" too

inline constexpr std::string_view kCotLine = "Let's think step by step.";

// `json_question` embeds the question block as a JSON object, for models that
// follow free-form instructions poorly.
std::string build_prompt(const synthesis::QaItem& item, PromptMode mode, bool json_question = false);

// "A".."D" for multiple choice, "true"/"false" for true/false, or nothing.
// Only the first `token_budget` whitespace tokens are inspected. In CoT mode
// the window starts at the first answer-marker line when there is one.
std::optional<std::string> parse_answer(std::string_view completion, synthesis::QuestionType type,
                                        int token_budget = 30, PromptMode mode = PromptMode::zero_shot);

struct EvalRecord {
  std::string item_id;
  PromptMode prompt_mode = PromptMode::zero_shot;
  std::string raw_completion;
  std::optional<std::string> parsed_answer;
  bool correct = false;
  int tokens_used = 0;
  std::string difficulty = "unset";
  std::optional<std::string> error;  // set when the model call failed

  json to_json() const;
};

struct LevelStats {
  std::size_t total = 0;  // non-errored
  std::size_t correct = 0;
  std::size_t errored = 0;
  std::optional<double> accuracy() const;
};

struct EvalReport {
  std::string model;
  PromptMode mode = PromptMode::zero_shot;
  std::vector<EvalRecord> records;  // input order
  LevelStats overall;
  std::map<std::string, LevelStats> per_level;  // easy, medium, hard, unset

  json to_json() const;  // summary only
};

struct EvalOptions {
  int token_budget = 30;
  int max_tokens = 256;
  bool json_question = false;
  std::size_t parallelism = 4;
};

// Aggregates records into overall and per-level statistics.
EvalReport summarize(std::string model, PromptMode mode, std::vector<EvalRecord> records);

EvalReport evaluate(const std::vector<synthesis::QaItem>& items, gateway::Gateway& gw, const std::string& model,
                    PromptMode mode, const EvalOptions& options = {});

// --- ROUGE --------------------------------------------------------------------

enum class RougeVariant { rouge1, rouge2, rougeL };

struct RougeScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Lowercase; punctuation characters become their own tokens; no stemming.
std::vector<std::string> rouge_tokens(std::string_view text);
RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant);
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// --- NOMA oracle ----------------------------------------------------------------

struct NomaScenario {
  double bandwidth = 1.0;  // B, normalized
  double g1 = 0.0;         // strong user's power-gain product
  double g2 = 0.0;         // weak user's power-gain product
  double r_min = 0.0;
};

struct NomaRates {
  double r1 = 0.0;
  double r2 = 0.0;
};

// r1 = B log2(1 + g1 / (g2 + 1)), r2 = B log2(1 + g2). Throws on g1 < g2 or
// negative inputs.
NomaRates noma_rates(const NomaScenario& s);

struct NomaOptimum {
  double beta = 0.0;
  double sum_rate = 0.0;
  NomaRates rates;
};

// Grid search over beta in [0.5, 1] with g1 = beta G, g2 = (1 - beta) G,
// maximizing r1 + r2 subject to r2 >= r_min. Sum rates within 1e-12 count as
// tied and the smaller beta wins. Returns nothing when infeasible.
std::optional<NomaOptimum> noma_optimize(double total_gain, double r_min, std::size_t grid, double bandwidth = 1.0);

}  // namespace hopqa::eval
