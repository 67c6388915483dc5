#include <doctest.h>

#include <cmath>
#include <set>

#include "hopqa/error.hpp"
#include "hopqa/eval.hpp"
#include "hopqa/mathgen.hpp"
#include "mathgen_fixtures.hpp"
#include "support.hpp"

using namespace hopqa;
using namespace hopqa::mathgen;
using hopqa::testing::kMathStatement;

namespace {

std::vector<std::string> roles(const MathProblem& p) {
  std::vector<std::string> out;
  for (const auto& t : p.agent_trace) out.push_back(t.role);
  return out;
}

struct Agents {
  gateway::Gateway gw;
  Agents(const std::string& answer, bool judge_valid = true) {
    gw.add_backend(hopqa::testing::math_agents(answer, judge_valid));
  }
  Workflow workflow(int max_rounds = 3, bool enhance = false) {
    WorkflowOptions o;
    o.default_backend = "agents";
    o.max_rounds = max_rounds;
    o.enhance = enhance;
    return Workflow(gw, o);
  }
};

// Independent pairwise oracle: set-based Jaccard over lowercased words.
double oracle_jaccard(const std::string& a, const std::string& b) {
  const auto words = [](const std::string& s) {
    std::set<std::string> out;
    std::string cur;
    for (char c : s + " ") {
      if (std::isalnum(static_cast<unsigned char>(c))) {
        cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      } else if (!cur.empty()) {
        out.insert(cur);
        cur.clear();
      }
    }
    return out;
  };
  const auto wa = words(a), wb = words(b);
  std::size_t inter = 0;
  for (const auto& w : wa) inter += wb.count(w);
  return static_cast<double>(inter) / static_cast<double>(wa.size() + wb.size() - inter);
}

}  // namespace

TEST_CASE("numeric oracle checks against the rate formulas") {
  const auto ok = numeric_check(kMathStatement, FinalAnswer{1.0, "bit/s/Hz"});
  CHECK(ok.applicable);
  CHECK(ok.pass);
  CHECK(ok.expected == 1.0);

  const auto bad = numeric_check(kMathStatement, FinalAnswer{1.5, "bit/s/Hz"});
  CHECK(bad.applicable);
  CHECK_FALSE(bad.pass);
  CHECK(bad.feedback.find("expected 1.0") != std::string::npos);

  const auto none = numeric_check("Explain why SIC matters in NOMA.", FinalAnswer{1.0, ""});
  CHECK_FALSE(none.applicable);
  CHECK(none.feedback.find("oracle-unverified") != std::string::npos);

  const auto t1 = parse_template("With B = 2, g_1 = 3 and g_2 = 1, what is the rate of user 1?");
  REQUIRE(t1.has_value());
  CHECK(oracle_value(*t1).value() == doctest::Approx(2 * std::log2(2.5)));
  const auto sum = parse_template("Given g1 = 7 and g2 = 0, compute the sum rate.");
  REQUIRE(sum.has_value());
  CHECK(oracle_value(*sum).value() == doctest::Approx(3.0));
  const auto beta = parse_template("Total gain G = 15 and R_min = 2. Find the optimal beta.");
  REQUIRE(beta.has_value());
  CHECK(oracle_value(*beta).value() == eval::noma_optimize(15, 2, 10001)->beta);
  CHECK_FALSE(parse_template("g1 = 1 and g2 = 3, user 2 rate?").has_value());

  // Relative tolerance 1e-6.
  CHECK(numeric_check(kMathStatement, FinalAnswer{1.0 + 5e-7, ""}).pass);
  CHECK_FALSE(numeric_check(kMathStatement, FinalAnswer{1.0 + 5e-6, ""}).pass);
}

TEST_CASE("reply blocks and number formatting") {
  const auto b = parse_block(hopqa::testing::math_block("1.0"));
  CHECK(b.statement == kMathStatement);
  CHECK(b.steps.size() == 3);
  REQUIRE(b.final_answer.has_value());
  CHECK(b.final_answer->value == 1.0);
  CHECK(b.final_answer->units == "bit/s/Hz");
  CHECK(parse_final_answer("Final answer: -2.5e-1 W.").value() == FinalAnswer{-0.25, "W"});
  CHECK_FALSE(parse_final_answer("unknown").has_value());
  CHECK(format_number(1.0) == "1.0");
  CHECK(format_number(1.3219280948873624) == "1.3219280948873624");
  CHECK(format_number(0.1) == "0.1");
}

TEST_CASE("solution-first run yields a valid, oracle-confirmed problem") {
  Agents a("1.0");
  auto p = a.workflow().run(Mode::solution_first, "noma");
  CHECK(p.validation_status == "valid");
  CHECK(p.oracle_verified);
  CHECK(p.statement == kMathStatement);
  REQUIRE(p.final_answer.has_value());
  const auto rates = eval::noma_rates({1.0, 3.0, 1.0, 0.0});
  CHECK(p.final_answer->value == rates.r2);
  CHECK(roles(p) == std::vector<std::string>{"Solvix", "PrimeArchitect", "Validata"});
  CHECK(validate_problem_json(to_json(p)).empty());
  CHECK(p.id == problem_id(p));
}

TEST_CASE("corrupted solution is rejected, then refined") {
  Agents a("1.5");
  auto p = a.workflow(3).run(Mode::solution_first, "noma");
  CHECK(p.validation_status == "valid");
  CHECK(p.final_answer->value == 1.0);
  REQUIRE(p.feedback.size() == 1);
  CHECK(p.feedback[0].find("expected 1.0") != std::string::npos);
  CHECK(roles(p) == std::vector<std::string>{"Solvix", "PrimeArchitect", "Validata", "RefineMaster", "Validata"});
}

TEST_CASE("loop budget and the conjunction rule") {
  Agents a("1.0", false);
  auto p = a.workflow(2).run(Mode::solution_first, "noma");
  CHECK(p.validation_status == "rejected");
  CHECK(p.feedback.size() == 2);
  CHECK(p.feedback[0].find("SIC order") != std::string::npos);
  CHECK(roles(p) == std::vector<std::string>{"Solvix", "PrimeArchitect", "Validata", "RefineMaster", "Validata"});
  CHECK_THROWS(a.workflow(0));
}

TEST_CASE("trace order for direct mode and enhancement") {
  Agents a("1.0");
  auto direct = a.workflow().run(Mode::direct, "noma");
  CHECK(roles(direct) == std::vector<std::string>{"PrimeArchitect", "Solvix", "Validata"});
  CHECK(direct.validation_status == "valid");
  auto enhanced = a.workflow(3, true).run(Mode::solution_first, "noma");
  CHECK(roles(enhanced) == std::vector<std::string>{"Solvix", "PrimeArchitect", "ExploreEnhancer", "Validata"});
  for (const auto& t : enhanced.agent_trace) {
    CHECK(std::find(kRoles.begin(), kRoles.end(), t.role) != kRoles.end());
    CHECK(t.prompt_sha256.size() == 64);
  }
}

TEST_CASE("similarity filter keeps exactly the 73 dissimilar clusters") {
  const auto problems = hopqa::testing::similarity_fixture();
  REQUIRE(problems.size() == 200);

  // Oracle: greedy retention in id order using an independent Jaccard.
  auto sorted = problems;
  std::sort(sorted.begin(), sorted.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  std::vector<std::string> expected;
  std::vector<const MathProblem*> kept;
  for (const auto& p : sorted) {
    bool similar = false;
    for (const auto* k : kept) similar = similar || oracle_jaccard(k->statement, p.statement) >= 0.7;
    if (!similar) {
      kept.push_back(&p);
      expected.push_back(p.id);
    }
  }
  CHECK(expected.size() == 73);

  const auto retained = similarity_filter(problems, 0.7);
  std::vector<std::string> got;
  for (const auto& p : retained) got.push_back(p.id);
  CHECK(got == expected);
  for (std::size_t i = 0; i < retained.size(); ++i) {
    for (std::size_t j = i + 1; j < retained.size(); ++j) {
      CHECK(oracle_jaccard(retained[i].statement, retained[j].statement) < 0.7);
    }
  }

  auto doubled = problems;
  doubled.insert(doubled.end(), problems.begin(), problems.begin() + 50);
  std::vector<std::string> got2;
  for (const auto& p : similarity_filter(doubled, 0.7)) got2.push_back(p.id);
  CHECK(got2 == got);

  CHECK(similarity_filter({problems[0], problems[0]}, 0.7).size() == 1);
  std::vector<MathProblem> distinct = {problems[0], problems[1], problems[2]};
  CHECK(similarity_filter(distinct, 1.0).size() == 3);
  CHECK_THROWS(similarity_filter(distinct, 0.0));
}

TEST_CASE("problem json round trip and schema") {
  hopqa::testing::TempDir dir;
  Agents a("1.0");
  auto p = a.workflow().run(Mode::solution_first, "noma");
  write_problems(dir / "p.jsonl", {p});
  CHECK(read_problems(dir / "p.jsonl") == std::vector<MathProblem>{p});
  auto j = to_json(p);
  j["validation_status"] = "maybe";
  CHECK_FALSE(validate_problem_json(j).empty());
  auto k = to_json(p);
  k["solution_steps"] = json::array();
  CHECK_FALSE(validate_problem_json(k).empty());
}
