#include "hopqa/eval.hpp"

#include <algorithm>
#include <atomic>
#include <regex>
#include <thread>

#include "hopqa/error.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::eval {

using synthesis::QuestionType;

std::string to_string(PromptMode m) { return m == PromptMode::zero_shot ? "zero_shot" : "zero_shot_cot"; }

PromptMode prompt_mode_from_string(std::string_view s) {
  if (s == "zero_shot" || s == "zs") return PromptMode::zero_shot;
  if (s == "zero_shot_cot" || s == "cot") return PromptMode::zero_shot_cot;
  throw Error("unknown prompt mode '" + std::string(s) + "'");
}

std::string build_prompt(const synthesis::QaItem& item, PromptMode mode, bool json_question) {
  const bool mc = item.type == QuestionType::multiple_choice;
  std::string out = mc ? "Answer the following multiple-choice question about wireless communication.\n\n"
                       : "Decide whether the following statement about wireless communication is true or false.\n\n";
  if (json_question) {
    json block = {{mc ? "question" : "statement", item.question}};
    if (mc) {
      json options = json::object();
      for (const auto& o : item.options) options[o.label] = o.text;
      block["options"] = options;
    }
    out += block.dump(2) + "\n\n";
  } else {
    out += (mc ? "Question: " : "Statement: ") + item.question + "\n";
    for (const auto& o : item.options) out += o.label + ". " + o.text + "\n";
    out += "\n";
  }
  if (mode == PromptMode::zero_shot_cot) out += std::string(kCotLine) + "\n";
  out += mc ? "Give the letter of the correct option on a line starting with \"Answer:\".\n"
            : "Give True or False on a line starting with \"Answer:\".\n";
  return out;
}

namespace {

bool is_marker_line(std::string_view line) {
  std::string t = to_lower(trim(line));
  while (!t.empty() && (t.front() == '*' || t.front() == '#' || t.front() == '>')) t.erase(t.begin());
  t = trim(t);
  return t.rfind("answer", 0) == 0 || t.rfind("final answer", 0) == 0 || t.find("the answer is") != std::string::npos;
}

std::string strip_punct(std::string_view tok) {
  std::size_t b = 0, e = tok.size();
  auto punct = [](char c) { return std::string_view("()[]{}.,:;!?*\"'`").find(c) != std::string_view::npos; };
  while (b < e && punct(tok[b])) ++b;
  while (e > b && punct(tok[e - 1])) --e;
  return std::string(tok.substr(b, e - b));
}

std::optional<std::string> parse_mc(const std::vector<std::string>& tokens) {
  const std::string window = [&] {
    std::string w;
    for (const auto& t : tokens) w += (w.empty() ? "" : " ") + t;
    return w;
  }();

  // Explicit markers first: "answer is B", "Answer: B", "option B", "(B)".
  static const std::regex kMarkers[] = {
      std::regex(R"(\banswer\s*(?:is|:)?\s*:?\s*(?:option\s+)?\(?([A-Da-d])\b)", std::regex::icase),
      std::regex(R"(\b(?:option|choice)\s+\(?([A-Da-d])\b)", std::regex::icase),
      std::regex(R"(\(([A-Da-d])\))"),
  };
  std::optional<std::pair<std::size_t, char>> best;
  for (const auto& re : kMarkers) {
    for (std::sregex_iterator it(window.begin(), window.end(), re), end; it != end; ++it) {
      const auto pos = static_cast<std::size_t>(it->position(1));
      const char letter = window[pos];
      // "the answer is a technique that..." uses the article, not option A.
      if (letter == 'a') {
        const auto next = pos + 1;
        if (next + 1 < window.size() && window[next] == ' ' && std::isalpha(static_cast<unsigned char>(window[next + 1]))) {
          continue;
        }
      }
      if (!best || pos < best->first) best = std::make_pair(pos, letter);
      break;
    }
  }
  if (best) return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(best->second))));

  for (const auto& tok : tokens) {
    const std::string core = strip_punct(tok);
    if (core.size() != 1) continue;
    const char c = core[0];
    if (c >= 'A' && c <= 'D') return core;
    if (c >= 'b' && c <= 'd') return std::string(1, static_cast<char>(std::toupper(c)));
    if (c == 'a' && (tok != core || tokens.size() == 1)) return "A";
  }
  return std::nullopt;
}

std::optional<std::string> parse_tf(const std::vector<std::string>& tokens) {
  for (const auto& tok : tokens) {
    const std::string core = to_lower(strip_punct(tok));
    auto colon = core.rfind(':');
    const std::string word = colon == std::string::npos ? core : core.substr(colon + 1);
    if (word == "true" || word == "yes") return "true";
    if (word == "false" || word == "no") return "false";
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> parse_answer(std::string_view completion, QuestionType type, int token_budget,
                                        PromptMode mode) {
  if (token_budget < 1) throw Error("token_budget must be >= 1");
  std::string_view text = completion;
  if (mode == PromptMode::zero_shot_cot) {
    std::size_t start = 0;
    while (start <= completion.size()) {
      auto nl = completion.find('\n', start);
      auto line = completion.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
      if (is_marker_line(line)) {
        text = completion.substr(start);
        break;
      }
      if (nl == std::string_view::npos) break;
      start = nl + 1;
    }
  }
  auto tokens = split_whitespace(text);
  if (tokens.size() > static_cast<std::size_t>(token_budget)) tokens.resize(static_cast<std::size_t>(token_budget));
  return type == QuestionType::multiple_choice ? parse_mc(tokens) : parse_tf(tokens);
}

json EvalRecord::to_json() const {
  return {{"item_id", item_id},
          {"prompt_mode", eval::to_string(prompt_mode)},
          {"raw_completion", raw_completion},
          {"parsed_answer", parsed_answer ? json(*parsed_answer) : json(nullptr)},
          {"correct", correct},
          {"tokens_used", tokens_used},
          {"difficulty", difficulty},
          {"error", error ? json(*error) : json(nullptr)}};
}

std::optional<double> LevelStats::accuracy() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

json stats_json(const LevelStats& s) {
  auto acc = s.accuracy();
  return {{"accuracy", acc ? json(*acc) : json(nullptr)},
          {"correct", s.correct},
          {"total", s.total},
          {"errored", s.errored}};
}

}  // namespace

json EvalReport::to_json() const {
  json levels = json::object();
  for (const char* l : {"easy", "medium", "hard"}) levels[l] = stats_json(per_level.count(l) ? per_level.at(l) : LevelStats{});
  if (per_level.count("unset")) levels["unset"] = stats_json(per_level.at("unset"));
  auto acc = overall.accuracy();
  json j = {{"model", model},
            {"mode", eval::to_string(mode)},
            {"overall", acc ? json(*acc) : json(nullptr)},
            {"denominator", overall.total},
            {"correct", overall.correct},
            {"errored", overall.errored},
            {"items", records.size()},
            {"per_level", levels}};
  if (overall.total == 0) j["no_data"] = true;
  return j;
}

EvalReport summarize(std::string model, PromptMode mode, std::vector<EvalRecord> records) {
  EvalReport report;
  report.model = std::move(model);
  report.mode = mode;
  for (const auto& r : records) {
    for (LevelStats* s : {&report.overall, &report.per_level[r.difficulty]}) {
      if (r.error) {
        ++s->errored;
      } else {
        ++s->total;
        if (r.correct) ++s->correct;
      }
    }
  }
  report.records = std::move(records);
  return report;
}

EvalReport evaluate(const std::vector<synthesis::QaItem>& items, gateway::Gateway& gw, const std::string& model,
                    PromptMode mode, const EvalOptions& options) {
  std::vector<EvalRecord> records(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < items.size(); i = next++) {
      const auto& item = items[i];
      EvalRecord& r = records[i];
      r.item_id = item.id;
      r.prompt_mode = mode;
      r.difficulty = item.difficulty;
      gateway::GenerateParams params;
      params.max_tokens = options.max_tokens;
      try {
        auto c = gw.generate(model, build_prompt(item, mode, options.json_question), params);
        r.raw_completion = c.text;
        r.tokens_used = c.tokens_used;
        r.parsed_answer = parse_answer(c.text, item.type, options.token_budget, mode);
        r.correct = r.parsed_answer && *r.parsed_answer == item.answer;
      } catch (const Error& e) {
        r.error = e.what();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.parallelism, items.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  return summarize(model, mode, std::move(records));
}

}  // namespace hopqa::eval
