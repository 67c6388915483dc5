#include "hopqa/synthesis.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "hopqa/gateway.hpp"

namespace hopqa::synthesis {

std::string to_string(QuestionType t) {
  return t == QuestionType::multiple_choice ? "multiple_choice" : "true_false";
}

QuestionType question_type_from_string(std::string_view s) {
  if (s == "multiple_choice" || s == "mc") return QuestionType::multiple_choice;
  if (s == "true_false" || s == "tf") return QuestionType::true_false;
  throw Error("unknown question type '" + std::string(s) + "'");
}

namespace {

const std::vector<std::string> kLabels = {"A", "B", "C", "D"};

// Case- and whitespace-insensitive comparison key; trailing punctuation is
// ignored so "NOMA." matches "NOMA".
std::string norm(std::string_view s) {
  std::string out = to_lower(collapse_whitespace(s));
  while (!out.empty() && std::string_view(".,;:!?").find(out.back()) != std::string_view::npos) out.pop_back();
  return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Serialization and schema

json to_json(const QaItem& item) {
  json options = json::array();
  for (const auto& o : item.options) options.push_back({{"label", o.label}, {"text", o.text}});
  json answer = item.type == QuestionType::true_false ? json(item.answer == "true") : json(item.answer);
  return {{"id", item.id},
          {"type", to_string(item.type)},
          {"context_a", item.context_a},
          {"context_b", item.context_b},
          {"entity", item.entity},
          {"q1", item.q1},
          {"s2", item.s2},
          {"question", item.question},
          {"options", options},
          {"answer", answer},
          {"explanation", item.explanation},
          {"chain", item.chain},
          {"bias_flags", item.bias_flags},
          {"difficulty", item.difficulty},
          {"pvi", item.pvi ? json(*item.pvi) : json(nullptr)},
          {"review", item.review}};
}

namespace {

const std::vector<std::string> kFields = {"id",       "type",     "context_a", "context_b", "entity",     "q1",
                                          "s2",       "question", "options",   "answer",    "explanation", "chain",
                                          "bias_flags", "difficulty", "pvi",    "review"};

// Structural checks that must pass before the record can be decoded.
std::vector<std::string> structural_errors(const json& j) {
  std::vector<std::string> bad;
  if (!j.is_object()) return {"record"};
  for (const auto& [key, _] : j.items()) {
    if (!contains(kFields, key)) bad.push_back(key);
  }
  auto need_string = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_string()) bad.push_back(f);
  };
  for (const char* f : {"id", "type", "context_a", "context_b", "entity", "q1", "s2", "question", "explanation",
                        "difficulty", "review"}) {
    need_string(f);
  }
  if (j.contains("type") && j["type"].is_string()) {
    const auto t = j["type"].get<std::string>();
    if (t != "multiple_choice" && t != "true_false") bad.push_back("type");
  }
  if (!j.contains("options") || !j["options"].is_array()) {
    bad.push_back("options");
  } else {
    for (const auto& o : j["options"]) {
      if (!o.is_object() || !o.contains("label") || !o["label"].is_string() || !o.contains("text") ||
          !o["text"].is_string() || o.size() != 2) {
        bad.push_back("options");
        break;
      }
    }
  }
  if (!j.contains("answer") || !(j["answer"].is_string() || j["answer"].is_boolean())) bad.push_back("answer");
  auto need_string_array = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_array() ||
        !std::all_of(j[f].begin(), j[f].end(), [](const json& e) { return e.is_string(); })) {
      bad.push_back(f);
    }
  };
  need_string_array("chain");
  need_string_array("bias_flags");
  if (!j.contains("pvi") || !(j["pvi"].is_null() || j["pvi"].is_number())) bad.push_back("pvi");
  return bad;
}

QaItem decode(const json& j) {
  QaItem item;
  item.id = j["id"].get<std::string>();
  item.type = question_type_from_string(j["type"].get<std::string>());
  item.context_a = j["context_a"].get<std::string>();
  item.context_b = j["context_b"].get<std::string>();
  item.entity = j["entity"].get<std::string>();
  item.q1 = j["q1"].get<std::string>();
  item.s2 = j["s2"].get<std::string>();
  item.question = j["question"].get<std::string>();
  for (const auto& o : j["options"]) item.options.push_back({o["label"].get<std::string>(), o["text"].get<std::string>()});
  if (j["answer"].is_boolean()) {
    item.answer = j["answer"].get<bool>() ? "true" : "false";
  } else {
    item.answer = j["answer"].get<std::string>();
  }
  item.explanation = j["explanation"].get<std::string>();
  item.chain = j["chain"].get<std::vector<std::string>>();
  item.bias_flags = j["bias_flags"].get<std::vector<std::string>>();
  item.difficulty = j["difficulty"].get<std::string>();
  if (!j["pvi"].is_null()) item.pvi = j["pvi"].get<double>();
  item.review = j["review"].get<std::string>();
  return item;
}

}  // namespace

std::vector<std::string> validate_item_json(const json& j) {
  auto bad = structural_errors(j);
  if (!bad.empty()) return bad;
  QaItem item = decode(j);
  bad = validate_item(item);
  // A true/false record must carry a JSON boolean, not the string.
  if (item.type == QuestionType::true_false && !j["answer"].is_boolean() && !contains(bad, "answer")) {
    bad.push_back("answer");
  }
  if (item.type == QuestionType::multiple_choice && !j["answer"].is_string() && !contains(bad, "answer")) {
    bad.push_back("answer");
  }
  return bad;
}

std::vector<std::string> validate_item(const QaItem& item, const std::string* context_a_text) {
  std::vector<std::string> bad;
  auto flag = [&](const std::string& f) {
    if (!contains(bad, f)) bad.push_back(f);
  };
  if (trim(item.id).empty()) flag("id");
  if (trim(item.context_a).empty()) flag("context_a");
  if (trim(item.context_b).empty()) flag("context_b");
  if (trim(item.entity).empty()) flag("entity");
  if (context_a_text && !contains_icase(*context_a_text, item.entity)) flag("entity");
  if (trim(item.q1).empty()) flag("q1");
  if (trim(item.s2).empty()) flag("s2");
  if (trim(item.question).empty() || norm(item.question) == norm(item.q1) || norm(item.question) == norm(item.s2)) {
    flag("question");
  }

  if (item.type == QuestionType::multiple_choice) {
    bool ok = item.options.size() == 4;
    std::set<std::string> texts;
    for (std::size_t i = 0; ok && i < item.options.size(); ++i) {
      const auto& o = item.options[i];
      ok = o.label == kLabels[i] && !trim(o.text).empty() && texts.insert(norm(o.text)).second;
    }
    if (!ok) flag("options");
    const auto matches = std::count_if(item.options.begin(), item.options.end(),
                                       [&](const Option& o) { return o.label == item.answer; });
    if (matches != 1) flag("answer");
  } else {
    if (!item.options.empty()) flag("options");
    if (item.answer != "true" && item.answer != "false") flag("answer");
  }

  if (trim(item.explanation).empty()) flag("explanation");
  if (item.chain.size() < 2 || !validate_chain(item.chain, answer_aliases(item)).valid) flag("chain");

  std::set<std::string> flags;
  for (const auto& f : item.bias_flags) {
    if (!contains(kBiasClasses, f) || !flags.insert(f).second) flag("bias_flags");
  }
  if (!std::is_sorted(item.bias_flags.begin(), item.bias_flags.end())) flag("bias_flags");
  if (!contains(kDifficulties, item.difficulty)) flag("difficulty");
  if (!contains(kReviewStatuses, item.review)) flag("review");
  return bad;
}

QaItem item_from_json(const json& j) {
  auto bad = validate_item_json(j);
  if (!bad.empty()) throw ValidationError(std::move(bad));
  return decode(j);
}

std::vector<QaItem> read_dataset(const std::filesystem::path& path) {
  std::vector<QaItem> items;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(path)) {
    ++line;
    try {
      items.push_back(item_from_json(row));
    } catch (const ValidationError& e) {
      throw Error(path.string() + ": record " + std::to_string(line) + ": " + e.what());
    }
  }
  return items;
}

void write_dataset(const std::filesystem::path& path, const std::vector<QaItem>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& item : items) rows.push_back(to_json(item));
  write_file_atomic(path, to_jsonl(rows));
}

std::filesystem::path provenance_path(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".provenance.jsonl";
  return p;
}

void write_provenance(const std::filesystem::path& path, const std::vector<QaItem>& items) {
  std::vector<json> rows;
  for (const auto& item : items) {
    json roles = json::object();
    for (const auto& [role, e] : item.provenance) roles[role] = {{"model", e.model}, {"prompt_sha256", e.prompt_sha256}};
    rows.push_back({{"id", item.id}, {"provenance", roles}});
  }
  write_file_atomic(path, to_jsonl(rows));
}

std::string item_id(const std::string& context_a, const std::string& context_b, QuestionType type,
                    const std::string& question) {
  return short_hash(context_a + "\n" + context_b + "\n" + to_string(type) + "\n" + question);
}

std::string answer_text(const QaItem& item) {
  if (item.type == QuestionType::true_false) return item.answer;
  for (const auto& o : item.options) {
    if (o.label == item.answer) return o.text;
  }
  return {};
}

std::vector<std::string> answer_aliases(const QaItem& item) {
  if (item.type == QuestionType::true_false) {
    if (item.answer == "true") return {"true", "correct"};
    if (item.answer == "false") return {"false", "incorrect"};
    return {};
  }
  std::vector<std::string> out;
  const auto text = answer_text(item);
  if (!text.empty()) out.push_back(text);
  if (!item.entity.empty() && norm(item.entity) == norm(text)) out.push_back(item.entity);
  if (!item.answer.empty()) {
    out.push_back("option " + item.answer);
    out.push_back("(" + item.answer + ")");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chains

ChainVerdict validate_chain(const std::vector<std::string>& chain, const std::vector<std::string>& aliases) {
  ChainVerdict v;
  if (chain.empty()) {
    v.gaps = {1};
    return v;
  }
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const bool empty = trim(chain[i]).empty();
    const bool repeat = i > 0 && !empty && norm(chain[i]) == norm(chain[i - 1]);
    if (empty || repeat) v.gaps.push_back(i + 1);
  }
  const auto& last = chain.back();
  const bool mentions = std::any_of(aliases.begin(), aliases.end(), [&](const std::string& a) {
    return !trim(a).empty() && contains_word_icase(last, trim(a));
  });
  if (!mentions && (v.gaps.empty() || v.gaps.back() != chain.size())) v.gaps.push_back(chain.size());
  v.valid = v.gaps.empty();
  return v;
}

// ---------------------------------------------------------------------------
// Reply parsing

namespace {

std::string clean_line(std::string_view s) {
  std::string out = trim(collapse_whitespace(s));
  auto strip = [&](char c) {
    while (out.size() >= 2 && out.front() == c && out.back() == c) out = trim(out.substr(1, out.size() - 2));
  };
  strip('"');
  strip('*');
  return out;
}

std::string first_line(const std::string& text) {
  for (const auto& line : split_lines(text)) {
    auto t = trim(line);
    if (!t.empty()) return t;
  }
  return {};
}

}  // namespace

std::optional<AnswerParts> parse_answer_reply(const std::string& reply) {
  static const std::regex kStep(R"(^\s*(\d+)\s*[.)]\s?(.*)$)");
  AnswerParts parts;
  enum { kNone, kExplanation, kReasoning } section = kNone;
  bool have_answer = false;
  for (const auto& raw : split_lines(reply)) {
    const std::string line = trim(raw);
    if (starts_with_icase(line, "answer:")) {
      parts.answer = clean_line(line.substr(7));
      have_answer = true;
      section = kNone;
    } else if (starts_with_icase(line, "explanation:")) {
      parts.explanation = trim(line.substr(12));
      section = kExplanation;
    } else if (starts_with_icase(line, "reasoning:")) {
      section = kReasoning;
      auto rest = trim(line.substr(10));
      if (!rest.empty()) parts.chain.push_back(rest);
    } else if (section == kExplanation && !line.empty()) {
      parts.explanation += (parts.explanation.empty() ? "" : " ") + line;
    } else if (section == kReasoning) {
      std::smatch m;
      if (std::regex_match(raw, m, kStep)) parts.chain.push_back(trim(m[2].str()));
    }
  }
  if (!have_answer) return std::nullopt;
  return parts;
}

std::optional<std::vector<Option>> parse_options(const std::string& reply) {
  static const std::regex kOption(R"(^\s*\(?([A-Da-d])[.):]\s*(.+?)\s*$)");
  std::map<std::string, std::string> found;
  for (const auto& line : split_lines(reply)) {
    std::smatch m;
    if (!std::regex_match(line, m, kOption)) continue;
    std::string label(1, static_cast<char>(std::toupper(static_cast<unsigned char>(m[1].str()[0]))));
    if (found.count(label)) return std::nullopt;
    found[label] = clean_line(m[2].str());
  }
  if (found.size() != 4) return std::nullopt;
  std::vector<Option> out;
  for (const auto& l : kLabels) out.push_back({l, found[l]});
  return out;
}

// ---------------------------------------------------------------------------
// Stages

Synthesizer::Synthesizer(gateway::Gateway& gw, SynthesisConfig config) : gw_(gw), config_(std::move(config)) {}

std::string Synthesizer::call(const std::string& role, const std::string& backend, const std::string& template_id,
                              const gateway::Bindings& bindings, int attempt, QaItem* record) {
  static const auto registry = gateway::PromptRegistry::defaults();
  const auto prompt = registry.render_split(template_id, bindings);
  gateway::GenerateParams params;
  params.max_tokens = config_.max_tokens;
  params.temperature = config_.temperature;
  params.sample_index = attempt;
  params.seed = config_.seed;
  auto completion = gw_.generate(backend, prompt, params);
  if (record) record->provenance[role] = {gw_.backend(backend).model(), sha256_hex(prompt.text())};
  return completion.text;
}

std::string Synthesizer::extract_entity(const corpus::Document& doc, QaItem* record) {
  if (trim(doc.sanitized_text).empty()) throw ExtractionFailed("document " + doc.id + " has no text");
  std::string last;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto reply = call("entity", config_.entity_backend, "entity.extract", {{"context", doc.sanitized_text}}, attempt,
                      record);
    std::string entity = clean_line(first_line(reply));
    while (!entity.empty() && std::string_view(".,;:").find(entity.back()) != std::string_view::npos) {
      entity.pop_back();
    }
    entity = trim(entity);
    if (!entity.empty() && contains_icase(doc.sanitized_text, entity)) return entity;
    last = entity;
  }
  throw ExtractionFailed(last.empty() ? "empty entity for " + doc.id
                                      : "entity '" + last + "' does not occur in " + doc.id);
}

std::pair<std::string, std::string> Synthesizer::generate_subquestions(const corpus::Document& a,
                                                                       const corpus::Document& b,
                                                                       const std::string& entity, QuestionType type,
                                                                       QaItem* record) {
  const bool mc = type == QuestionType::multiple_choice;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto q1 = clean_line(call("subq_primary", config_.question_backend, mc ? "subq.primary.mc" : "subq.primary.tf",
                              {{"context", a.sanitized_text}, {"entity", entity}}, attempt, record));
    auto s2 = clean_line(call("subq_secondary", config_.question_backend,
                              mc ? "subq.secondary.mc" : "subq.secondary.tf",
                              {{"context", b.sanitized_text}, {"entity", entity}}, attempt, record));
    if (!q1.empty() && !s2.empty() && norm(q1) != norm(s2)) return {q1, s2};
  }
  throw SubquestionFailed("degenerate subquestions for " + a.id + "/" + b.id);
}

std::string Synthesizer::integrate_questions(const std::string& q1, const std::string& s2, const corpus::Document& a,
                                             const corpus::Document& b, QuestionType type, QaItem* record) {
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    auto q = clean_line(call("integrate", config_.question_backend,
                             type == QuestionType::multiple_choice ? "integrate.mc" : "integrate.tf",
                             {{"context_a", a.sanitized_text}, {"context_b", b.sanitized_text}, {"q1", q1}, {"s2", s2}},
                             attempt, record));
    if (!q.empty() && norm(q) != norm(q1) && norm(q) != norm(s2)) return q;
  }
  throw IntegrationFailed("integrated question is empty or repeats a subquestion");
}

namespace {

std::string options_block(const std::vector<Option>& options) {
  std::string out;
  for (const auto& o : options) out += o.label + ". " + o.text + "\n";
  if (!out.empty()) out.pop_back();
  return out;
}

std::optional<std::string> normalize_tf(std::string_view s) {
  auto n = norm(s);
  if (n == "true") return "true";
  if (n == "false") return "false";
  return std::nullopt;
}

std::optional<std::string> to_upper_label(std::string_view s) {
  auto t = clean_line(s);
  while (!t.empty() && std::string_view(".):").find(t.back()) != std::string_view::npos) t.pop_back();
  if (!t.empty() && t.front() == '(') t.erase(t.begin());
  if (t.size() != 1) return std::nullopt;
  char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
  if (c < 'A' || c > 'D') return std::nullopt;
  return std::string(1, c);
}

}  // namespace

void Synthesizer::derive_answer(QaItem& item, const corpus::Document& a, const corpus::Document& b) {
  const bool mc = item.type == QuestionType::multiple_choice;
  if (mc) {
    std::optional<std::vector<Option>> options;
    for (int attempt = 0; attempt <= config_.retries && !options; ++attempt) {
      auto reply = call("options", config_.answer_backend, "options.mc",
                        {{"question", item.question}, {"entity", item.entity}}, attempt, &item);
      auto parsed = parse_options(reply);
      if (!parsed) continue;
      std::set<std::string> texts;
      std::size_t hits = 0;
      for (const auto& o : *parsed) {
        texts.insert(norm(o.text));
        if (norm(o.text) == norm(item.entity)) ++hits;
      }
      if (texts.size() == 4 && hits == 1) options = std::move(parsed);
    }
    if (!options) throw AnswerFailed("no valid option set for '" + item.question + "'");
    item.options = std::move(*options);
  } else {
    item.options.clear();
  }

  std::string expected;
  for (const auto& o : item.options) {
    if (norm(o.text) == norm(item.entity)) expected = o.label;
  }

  std::string last_problem = "no reply";
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    gateway::Bindings bindings{{"context_a", a.sanitized_text}, {"context_b", b.sanitized_text},
                               {"question", item.question}};
    if (mc) bindings["options"] = options_block(item.options);
    auto reply = call("answer", config_.answer_backend, mc ? "answer.mc" : "answer.tf", bindings, attempt, &item);
    auto parts = parse_answer_reply(reply);
    if (!parts) {
      last_problem = "reply has no answer line";
      continue;
    }
    std::string answer;
    if (mc) {
      auto label = to_upper_label(parts->answer);
      if (!label) {
        last_problem = "answer '" + parts->answer + "' is outside A-D";
        continue;
      }
      if (*label != expected) {
        last_problem = "answer " + *label + " disagrees with the entity option " + expected;
        continue;
      }
      answer = *label;
    } else {
      auto tf = normalize_tf(parts->answer);
      if (!tf) {
        last_problem = "answer '" + parts->answer + "' is not true/false";
        continue;
      }
      answer = *tf;
    }
    if (trim(parts->explanation).empty()) {
      last_problem = "empty explanation";
      continue;
    }
    item.answer = answer;
    auto verdict = validate_chain(parts->chain, answer_aliases(item));
    if (!verdict.valid || parts->chain.size() < 2) {
      last_problem = "reasoning chain has gaps";
      continue;
    }
    item.explanation = parts->explanation;
    item.chain = parts->chain;
    return;
  }
  item.answer.clear();
  throw AnswerFailed(last_problem);
}

namespace {

const std::map<std::string, std::string> kBiasDefinitions = {
    {"selection",
     "the integrated question leans on one context far more than the other, so facts from one source dominate and "
     "the other source is barely used"},
    {"contextual", "the integrated question depends on assumptions about the subject that neither context states"},
    {"order",
     "the answer or the wording depends on the order in which the subquestions or options are presented"},
};

std::optional<bool> parse_verdict(const std::string& reply) {
  static const std::regex kVerdict(R"(verdict\s*:\s*\**\s*(yes|no)\b)", std::regex::icase);
  std::optional<bool> out;
  for (std::sregex_iterator it(reply.begin(), reply.end(), kVerdict), end; it != end; ++it) {
    out = to_lower((*it)[1].str()) == "yes";
  }
  return out;
}

}  // namespace

std::vector<std::string> Synthesizer::detect_bias(const QaItem& item, const corpus::Document& a,
                                                  const corpus::Document& b) {
  std::set<std::string> flags;
  if (a.id == b.id) flags.insert("selection");
  try {
    for (const auto& name : kBiasClasses) {
      auto reply = call("bias_" + name, config_.bias_backend, "bias.check",
                        {{"bias_name", name + " bias"},
                         {"bias_definition", kBiasDefinitions.at(name)},
                         {"context_a", a.sanitized_text},
                         {"context_b", b.sanitized_text},
                         {"q1", item.q1},
                         {"s2", item.s2},
                         {"question", item.question},
                         {"explanation", item.explanation}},
                        0, nullptr);
      auto verdict = parse_verdict(reply);
      // An unreadable verdict counts as positive so a human looks at it.
      if (!verdict || *verdict) flags.insert(name);
    }
  } catch (const Error& e) {
    spdlog::warn("bias check failed for {}: {}", item.id, e.what());
    flags.insert("contextual");
  }
  return {flags.begin(), flags.end()};
}

QaItem Synthesizer::assemble(const corpus::Document& a, const corpus::Document& b, QuestionType type) {
  QaItem item;
  item.type = type;
  item.context_a = a.id;
  item.context_b = b.id;
  item.entity = extract_entity(a, &item);
  std::tie(item.q1, item.s2) = generate_subquestions(a, b, item.entity, type, &item);
  item.question = integrate_questions(item.q1, item.s2, a, b, type, &item);
  item.id = item_id(a.id, b.id, type, item.question);
  derive_answer(item, a, b);
  if (config_.bias_check) item.bias_flags = detect_bias(item, a, b);
  item.review = "pending";
  auto bad = validate_item(item, &a.sanitized_text);
  if (!bad.empty()) throw StageFailed("assemble", ValidationError(bad).what());
  return item;
}

// ---------------------------------------------------------------------------
// Pairing and the batch runner

std::vector<std::pair<std::size_t, std::size_t>> pair_contexts(const std::vector<corpus::Document>& docs,
                                                               double threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    std::optional<std::size_t> best;
    double best_sim = -1.0;
    for (std::size_t j = 0; j < docs.size(); ++j) {
      if (i == j || docs[j].topic != docs[i].topic || docs[j].id == docs[i].id) continue;
      const double sim = corpus::estimated_jaccard(docs[i].signature, docs[j].signature);
      if (sim >= threshold) continue;
      if (sim > best_sim || (sim == best_sim && docs[j].id < docs[*best].id)) {
        best = j;
        best_sim = sim;
      }
    }
    if (best) out.emplace_back(i, *best);
  }
  return out;
}

json SynthesisReport::to_json() const {
  json skips = json::array();
  for (const auto& s : skipped) {
    skips.push_back({{"context_a", s.context_a}, {"context_b", s.context_b}, {"stage", s.stage}, {"reason", s.reason}});
  }
  return {{"items", items.size()}, {"pairs", pairs}, {"unpaired", unpaired}, {"skipped", skipped.size()},
          {"skips", skips}};
}

SynthesisReport run_synthesis(const std::vector<corpus::Document>& docs, QuestionType type, gateway::Gateway& gw,
                              const SynthesisConfig& config) {
  auto sorted = docs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) {
    return std::tie(x.topic, x.id) < std::tie(y.topic, y.id);
  });
  const auto pairs = pair_contexts(sorted, config.pair_threshold);

  SynthesisReport report;
  report.pairs = pairs.size();
  std::set<std::size_t> paired;
  for (const auto& p : pairs) paired.insert(p.first);
  report.unpaired = sorted.size() - paired.size();

  std::vector<std::optional<QaItem>> results(pairs.size());
  std::vector<std::optional<SkipRecord>> skips(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    Synthesizer synth(gw, config);
    for (std::size_t k = next++; k < pairs.size(); k = next++) {
      const auto& a = sorted[pairs[k].first];
      const auto& b = sorted[pairs[k].second];
      try {
        results[k] = synth.assemble(a, b, type);
      } catch (const StageFailed& e) {
        skips[k] = SkipRecord{a.id, b.id, e.stage(), e.what()};
      } catch (const Error& e) {
        skips[k] = SkipRecord{a.id, b.id, "gateway", e.what()};
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(config.parallelism, pairs.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  std::set<std::string> seen;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (results[k] && seen.insert(results[k]->id).second) report.items.push_back(std::move(*results[k]));
    if (skips[k]) {
      spdlog::info("skipped pair {}/{} at {}: {}", skips[k]->context_a, skips[k]->context_b, skips[k]->stage,
                   skips[k]->reason);
      report.skipped.push_back(std::move(*skips[k]));
    }
  }
  std::sort(report.items.begin(), report.items.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  return report;
}

}  // namespace hopqa::synthesis
