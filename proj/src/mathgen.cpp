#include "hopqa/mathgen.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "hopqa/error.hpp"
#include "hopqa/eval.hpp"
#include "hopqa/gateway.hpp"

namespace hopqa::mathgen {

namespace {

std::string join_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) out += std::to_string(i + 1) + ". " + steps[i] + "\n";
  if (!out.empty()) out.pop_back();
  return out;
}

std::string answer_string(const std::optional<FinalAnswer>& a) {
  if (!a) return "(none)";
  return a->units.empty() ? format_number(a->value) : format_number(a->value) + " " + a->units;
}

}  // namespace

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) return fmt::format("{:.1f}", v);
  return fmt::format("{}", v);
}

std::string problem_id(const MathProblem& p) {
  return short_hash(p.statement + "\n" + join_steps(p.solution_steps) + "\n" + answer_string(p.final_answer));
}

std::vector<std::string> similarity_key(const MathProblem& p) {
  auto toks = word_tokens(p.statement);
  std::sort(toks.begin(), toks.end());
  toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
  return toks;
}

// ---------------------------------------------------------------------------
// Serialization

json to_json(const MathProblem& p) {
  json trace = json::array();
  for (const auto& t : p.agent_trace) {
    trace.push_back({{"role", t.role}, {"prompt_sha256", t.prompt_sha256}, {"output_sha256", t.output_sha256}});
  }
  return {{"id", p.id},
          {"statement", p.statement},
          {"solution_steps", p.solution_steps},
          {"final_answer", p.final_answer ? json{{"value", p.final_answer->value}, {"units", p.final_answer->units}}
                                          : json(nullptr)},
          {"topic_tags", p.topic_tags},
          {"validation_status", p.validation_status},
          {"agent_trace", trace},
          {"feedback", p.feedback},
          {"oracle_verified", p.oracle_verified},
          {"review", p.review}};
}

std::vector<std::string> validate_problem_json(const json& j) {
  std::vector<std::string> bad;
  if (!j.is_object()) return {"record"};
  auto str = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_string()) bad.push_back(f);
  };
  auto str_array = [&](const char* f) {
    if (!j.contains(f) || !j[f].is_array() ||
        !std::all_of(j[f].begin(), j[f].end(), [](const json& e) { return e.is_string(); })) {
      bad.push_back(f);
    }
  };
  str("id");
  str("statement");
  str("validation_status");
  str("review");
  str_array("solution_steps");
  str_array("topic_tags");
  str_array("feedback");
  if (!j.contains("oracle_verified") || !j["oracle_verified"].is_boolean()) bad.push_back("oracle_verified");
  bool has_answer = false;
  if (!j.contains("final_answer")) {
    bad.push_back("final_answer");
  } else if (!j["final_answer"].is_null()) {
    const auto& a = j["final_answer"];
    if (!a.is_object() || !a.contains("value") || !a["value"].is_number() || !a.contains("units") ||
        !a["units"].is_string()) {
      bad.push_back("final_answer");
    } else {
      has_answer = true;
    }
  }
  if (!j.contains("agent_trace") || !j["agent_trace"].is_array()) {
    bad.push_back("agent_trace");
  } else {
    for (const auto& t : j["agent_trace"]) {
      if (!t.is_object() || !t.contains("role") || !t["role"].is_string() ||
          std::find(kRoles.begin(), kRoles.end(), t["role"].get<std::string>()) == kRoles.end()) {
        bad.push_back("agent_trace");
        break;
      }
    }
  }
  if (!bad.empty()) return bad;
  if (trim(j["statement"].get<std::string>()).empty()) bad.push_back("statement");
  const auto status = j["validation_status"].get<std::string>();
  if (status != "unvalidated" && status != "valid" && status != "rejected") bad.push_back("validation_status");
  if (status == "valid") {
    if (j["solution_steps"].empty()) bad.push_back("solution_steps");
    if (!has_answer) bad.push_back("final_answer");
  }
  const auto review = j["review"].get<std::string>();
  if (review != "pending" && review != "accepted" && review != "rejected" && review != "edited") bad.push_back("review");
  return bad;
}

MathProblem problem_from_json(const json& j) {
  auto bad = validate_problem_json(j);
  if (!bad.empty()) throw ValidationError(std::move(bad));
  MathProblem p;
  p.id = j["id"].get<std::string>();
  p.statement = j["statement"].get<std::string>();
  p.solution_steps = j["solution_steps"].get<std::vector<std::string>>();
  if (!j["final_answer"].is_null()) {
    p.final_answer = FinalAnswer{j["final_answer"]["value"].get<double>(), j["final_answer"]["units"].get<std::string>()};
  }
  p.topic_tags = j["topic_tags"].get<std::vector<std::string>>();
  p.validation_status = j["validation_status"].get<std::string>();
  for (const auto& t : j["agent_trace"]) {
    p.agent_trace.push_back({t["role"].get<std::string>(), t.value("prompt_sha256", ""), t.value("output_sha256", "")});
  }
  p.feedback = j["feedback"].get<std::vector<std::string>>();
  p.oracle_verified = j["oracle_verified"].get<bool>();
  p.review = j["review"].get<std::string>();
  return p;
}

std::vector<MathProblem> read_problems(const std::filesystem::path& path) {
  std::vector<MathProblem> out;
  for (const auto& row : read_jsonl(path)) out.push_back(problem_from_json(row));
  return out;
}

void write_problems(const std::filesystem::path& path, const std::vector<MathProblem>& problems) {
  std::vector<json> rows;
  for (const auto& p : problems) rows.push_back(to_json(p));
  write_file_atomic(path, to_jsonl(rows));
}

// ---------------------------------------------------------------------------
// Reply parsing

std::optional<FinalAnswer> parse_final_answer(std::string_view text) {
  static const std::regex kFinal(R"(final answer\s*:?\s*\**\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(.*)$)",
                                 std::regex::icase);
  for (const auto& line : split_lines(text)) {
    std::smatch m;
    if (!std::regex_search(line, m, kFinal)) continue;
    FinalAnswer a;
    a.value = std::stod(m[1].str());
    a.units = trim(m[2].str());
    while (!a.units.empty() && (a.units.back() == '.' || a.units.back() == '*')) a.units.pop_back();
    a.units = trim(a.units);
    return a;
  }
  return std::nullopt;
}

Block parse_block(const std::string& reply) {
  static const std::regex kStep(R"(^\s*(\d+)\s*[.)]\s*(.*)$)");
  Block b;
  enum { kNone, kStatement, kSolution } section = kNone;
  for (const auto& raw : split_lines(reply)) {
    const std::string line = trim(raw);
    if (starts_with_icase(line, "statement:")) {
      b.statement = trim(line.substr(10));
      section = kStatement;
    } else if (starts_with_icase(line, "solution:")) {
      section = kSolution;
    } else if (starts_with_icase(line, "final answer")) {
      b.final_answer = parse_final_answer(line);
      section = kNone;
    } else if (section == kStatement && !line.empty()) {
      b.statement += (b.statement.empty() ? "" : " ") + line;
    } else if (section == kSolution) {
      std::smatch m;
      if (std::regex_match(raw, m, kStep) && !trim(m[2].str()).empty()) b.steps.push_back(trim(m[2].str()));
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Numeric oracle

namespace {

constexpr const char* kNum = R"(([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))";

std::optional<double> find_number(std::string_view text, const std::string& prefix, bool icase) {
  auto flags = std::regex::ECMAScript;
  if (icase) flags |= std::regex::icase;
  const std::regex re(prefix + R"(\s*(?:=|is|of)\s*)" + kNum, flags);
  std::string s(text);
  std::smatch m;
  if (!std::regex_search(s, m, re)) return std::nullopt;
  return std::stod(m[1].str());
}

}  // namespace

std::optional<OracleTemplate> parse_template(std::string_view statement) {
  OracleTemplate t;
  if (auto b = find_number(statement, R"((?:\bB\b|\bbandwidth\b))", false)) t.bandwidth = *b;
  t.g1 = find_number(statement, R"(\bg_?\{?1\}?)", false);
  t.g2 = find_number(statement, R"(\bg_?\{?2\}?)", false);
  t.total_gain = find_number(statement, R"(\bG\b)", false);
  t.r_min = find_number(statement, R"(\bR_?\{?min\}?)", true);

  const std::string s = to_lower(statement);
  static const std::regex kUser(R"((?:rate (?:of|for) (?:user|u)\s*([12]))|(?:user\s*([12])(?:'s)? (?:achievable )?(?:data )?rate))");
  std::smatch m;
  if (s.find("sum rate") != std::string::npos || s.find("sum-rate") != std::string::npos) {
    t.target = Target::sum_rate;
  } else if (std::regex_search(s, std::regex(R"(optimal (?:β|beta|power[- ]split))"))) {
    t.target = Target::optimal_beta;
  } else if (std::regex_search(s, m, kUser)) {
    const auto which = m[1].matched ? m[1].str() : m[2].str();
    t.target = which == "1" ? Target::user1_rate : Target::user2_rate;
  } else if (s.find("first user") != std::string::npos && s.find("rate") != std::string::npos) {
    t.target = Target::user1_rate;
  } else if (s.find("second user") != std::string::npos && s.find("rate") != std::string::npos) {
    t.target = Target::user2_rate;
  } else {
    return std::nullopt;
  }

  const bool explicit_pair = t.g1 && t.g2;
  const bool split = t.total_gain && t.r_min;
  if (t.target == Target::optimal_beta && !split) return std::nullopt;
  if (t.target != Target::optimal_beta && !explicit_pair && !split) return std::nullopt;
  if (explicit_pair && *t.g1 < *t.g2) return std::nullopt;
  return t;
}

std::optional<double> oracle_value(const OracleTemplate& t) {
  if (t.g1 && t.g2 && t.target != Target::optimal_beta) {
    auto r = eval::noma_rates({t.bandwidth, *t.g1, *t.g2, t.r_min.value_or(0.0)});
    switch (t.target) {
      case Target::user1_rate:
        return r.r1;
      case Target::user2_rate:
        return r.r2;
      case Target::sum_rate:
        return r.r1 + r.r2;
      default:
        break;
    }
  }
  if (t.total_gain && t.r_min) {
    auto opt = eval::noma_optimize(*t.total_gain, *t.r_min, 10001, t.bandwidth);
    if (!opt) return std::nullopt;
    switch (t.target) {
      case Target::optimal_beta:
        return opt->beta;
      case Target::sum_rate:
        return opt->sum_rate;
      case Target::user1_rate:
        return opt->rates.r1;
      case Target::user2_rate:
        return opt->rates.r2;
    }
  }
  return std::nullopt;
}

NumericCheck numeric_check(std::string_view statement, const std::optional<FinalAnswer>& answer) {
  NumericCheck c;
  auto t = parse_template(statement);
  std::optional<double> expected;
  if (t) expected = oracle_value(*t);
  if (!expected) {
    c.feedback = "oracle-unverified: no NOMA template matches the statement";
    return c;
  }
  c.applicable = true;
  c.expected = *expected;
  if (!answer) {
    c.feedback = "missing final answer; expected " + format_number(*expected);
    return c;
  }
  const double tol = kRelativeTolerance * std::max(std::abs(*expected), 1e-9);
  c.pass = std::abs(answer->value - *expected) <= tol;
  if (!c.pass) {
    c.feedback = "final answer " + format_number(answer->value) + " does not match the expected " +
                 format_number(*expected);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Workflow

std::string to_string(Mode m) { return m == Mode::direct ? "direct" : "solution_first"; }

Mode mode_from_string(std::string_view s) {
  if (s == "direct") return Mode::direct;
  if (s == "solution_first" || s == "solution-first") return Mode::solution_first;
  throw Error("unknown mathgen mode '" + std::string(s) + "'");
}

Workflow::Workflow(gateway::Gateway& gw, WorkflowOptions options) : gw_(gw), options_(std::move(options)) {
  if (options_.max_rounds < 1) throw Error("max_rounds must be >= 1");
}

std::string Workflow::backend_for(const std::string& role) const {
  auto it = options_.backends.find(role);
  if (it != options_.backends.end()) return it->second;
  if (options_.default_backend.empty()) throw ConfigError("backends.agents", "no backend for agent " + role);
  return options_.default_backend;
}

std::string Workflow::call(MathProblem& p, const std::string& role, const std::string& template_id,
                           const gateway::Bindings& bindings, int sample) {
  static const auto registry = gateway::PromptRegistry::defaults();
  const auto prompt = registry.render_split(template_id, bindings);
  gateway::GenerateParams params;
  params.max_tokens = options_.max_tokens;
  params.sample_index = sample;
  params.seed = options_.seed;
  auto c = gw_.generate(backend_for(role), prompt, params);
  p.agent_trace.push_back({role, sha256_hex(prompt.text()), sha256_hex(c.text)});
  return c.text;
}

Verdict Workflow::validate(MathProblem& p, int round) {
  Verdict v;
  std::vector<std::string> problems;
  if (p.solution_steps.empty()) problems.push_back("solution has no steps");
  if (!p.final_answer) problems.push_back("missing final answer");

  auto numeric = numeric_check(p.statement, p.final_answer);
  if (numeric.applicable && !numeric.pass) problems.push_back(numeric.feedback);
  v.oracle_verified = numeric.applicable && numeric.pass;

  auto reply = call(p, "Validata", "agent.validata",
                    {{"statement", p.statement},
                     {"solution", join_steps(p.solution_steps)},
                     {"final_answer", answer_string(p.final_answer)}},
                    round);
  static const std::regex kVerdict(R"(verdict\s*:\s*\**\s*(valid|invalid)\b)", std::regex::icase);
  std::smatch m;
  const bool judged_valid = std::regex_search(reply, m, kVerdict) && to_lower(m[1].str()) == "valid";
  if (!judged_valid) {
    auto pos = to_lower(reply).find("feedback:");
    std::string fb = pos == std::string::npos ? trim(reply) : trim(reply.substr(pos + 9));
    problems.push_back("Validata: " + (fb.empty() ? std::string("rejected without feedback") : fb));
  }

  v.valid = problems.empty();
  for (const auto& s : problems) v.feedback += (v.feedback.empty() ? "" : "; ") + s;
  if (!numeric.applicable && v.valid) v.feedback = numeric.feedback;
  return v;
}

MathProblem Workflow::run(Mode mode, const std::string& topic, int instance) {
  MathProblem p;
  p.topic_tags = {topic};
  const int sample = instance;
  auto apply = [&](const Block& b, bool need_statement) {
    if (need_statement || !b.statement.empty()) p.statement = b.statement;
    if (!b.steps.empty()) p.solution_steps = b.steps;
    if (b.final_answer) p.final_answer = b.final_answer;
  };

  if (mode == Mode::direct) {
    const std::string drafter = options_.probmaster_draft ? "ProbMaster" : "PrimeArchitect";
    auto draft = call(p, drafter, options_.probmaster_draft ? "agent.probmaster.draft" : "agent.primearchitect.draft",
                      {{"topic", topic}}, sample);
    p.statement = parse_block(draft).statement;
    auto solved = call(p, "Solvix", "agent.solvix.statement", {{"statement", p.statement}}, sample);
    auto b = parse_block(solved);
    p.solution_steps = b.steps;
    p.final_answer = b.final_answer;
  } else {
    auto solved = call(p, "Solvix", "agent.solvix.topic", {{"topic", topic}}, sample);
    auto b = parse_block(solved);
    p.solution_steps = b.steps;
    p.final_answer = b.final_answer;
    auto stated = call(p, "PrimeArchitect", "agent.primearchitect.from_solution",
                       {{"solution", join_steps(p.solution_steps)}, {"final_answer", answer_string(p.final_answer)}},
                       sample);
    p.statement = parse_block(stated).statement;
  }

  if (options_.enhance) {
    auto reply = call(p, "ExploreEnhancer", "agent.exploreenhancer",
                      {{"statement", p.statement},
                       {"solution", join_steps(p.solution_steps)},
                       {"final_answer", answer_string(p.final_answer)}},
                      sample);
    apply(parse_block(reply), false);
  }

  for (int round = 1; round <= options_.max_rounds; ++round) {
    auto v = validate(p, sample);
    p.oracle_verified = v.oracle_verified;
    if (v.valid) {
      p.validation_status = "valid";
      if (!v.feedback.empty()) p.feedback.push_back(v.feedback);
      break;
    }
    p.validation_status = "rejected";
    p.feedback.push_back(v.feedback);
    if (round == options_.max_rounds) break;
    auto reply = call(p, "RefineMaster", "agent.refinemaster",
                      {{"statement", p.statement},
                       {"solution", join_steps(p.solution_steps)},
                       {"final_answer", answer_string(p.final_answer)},
                       {"feedback", v.feedback}},
                      sample);
    apply(parse_block(reply), false);
  }
  p.id = problem_id(p);
  return p;
}

// ---------------------------------------------------------------------------
// Similarity filter

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : sa) inter += sb.count(x);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

std::vector<MathProblem> similarity_filter(std::vector<MathProblem> problems, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw Error("similarity threshold must be in (0, 1]");
  std::stable_sort(problems.begin(), problems.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<MathProblem> kept;
  std::vector<std::vector<std::string>> keys;
  for (auto& p : problems) {
    auto key = similarity_key(p);
    bool similar = std::any_of(keys.begin(), keys.end(), [&](const auto& k) { return jaccard(k, key) >= threshold; });
    if (similar) continue;
    keys.push_back(std::move(key));
    kept.push_back(std::move(p));
  }
  return kept;
}

}  // namespace hopqa::mathgen
