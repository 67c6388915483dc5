#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hopqa/gateway.hpp"
#include "hopqa/mathgen.hpp"

namespace hopqa::testing {

inline const std::string kMathStatement =
    "In a two-user NOMA downlink with bandwidth B = 1, g1 = 3 and g2 = 1, find the achievable data rate of user 2.";

inline std::string math_block(const std::string& answer) {
  return "Statement: " + kMathStatement +
         "\nSolution:\n1. Take B = 1, g1 = 3 and g2 = 1.\n2. User 2 is decoded first and sees no interference.\n"
         "3. r2 = log2(1 + g2) = " +
         answer + ".\nFinal answer: " + answer + " bit/s/Hz";
}

inline gateway::MockBackend::GenerateRule math_rule(std::vector<std::string> contains,
                                                    std::vector<std::string> responses) {
  return {std::nullopt, std::move(contains), std::move(responses), std::nullopt, std::nullopt, 0};
}

// Scripted six-agent mock. Solvix reports `solvix_answer`, RefineMaster
// always returns the corrected block, and Validata judges per `judge_valid`.
inline std::shared_ptr<gateway::MockBackend> math_agents(const std::string& solvix_answer, bool judge_valid = true) {
  auto m = std::make_shared<gateway::MockBackend>("agents", "agents-mock");
  m->add_rule(math_rule({"Write a worked solution"},
                        {"Solution:\n1. Take B = 1, g1 = 3 and g2 = 1.\n2. User 2 sees no interference.\n"
                         "3. r2 = log2(1 + 1).\nFinal answer: " +
                         solvix_answer + " bit/s/Hz"}));
  m->add_rule(math_rule({"Write the problem statement that this"}, {"Statement: " + kMathStatement}));
  m->add_rule(math_rule({"Instruction: write a NOMA problem"}, {"Statement: " + kMathStatement}));
  m->add_rule(math_rule({"Write one two-user NOMA problem on this topic"}, {"Statement: " + kMathStatement}));
  m->add_rule(math_rule({"Problem: ", "Solve the problem step by step"}, {math_block(solvix_answer)}));
  m->add_rule(math_rule({"Add one advanced NOMA concept"}, {math_block(solvix_answer)}));
  m->add_rule(math_rule({"Reviewer feedback:"}, {math_block("1.0")}));
  m->add_rule(math_rule({"VERDICT: VALID"}, {judge_valid ? "VERDICT: VALID\nFEEDBACK: none"
                                                         : "VERDICT: INVALID\nFEEDBACK: the SIC order is not justified"}));
  return m;
}

// 200 problems in 73 clusters. Members of a cluster share all but one or
// two tokens (Jaccard >= 0.7); problems from different clusters share only
// three common words.
inline std::vector<mathgen::MathProblem> similarity_fixture() {
  std::vector<mathgen::MathProblem> out;
  auto make = [&](int cluster, int variant) {
    std::string s = "noma user power";
    for (int k = 0; k < 10; ++k) s += " t" + std::to_string(cluster * 100 + k);
    if (variant > 0) s += " v" + std::to_string(cluster * 10 + variant);
    mathgen::MathProblem p;
    p.statement = s;
    p.solution_steps = {"step"};
    p.final_answer = mathgen::FinalAnswer{1.0, "bit/s/Hz"};
    p.topic_tags = {"noma"};
    p.id = mathgen::problem_id(p);
    out.push_back(p);
  };
  for (int c = 0; c < 73; ++c) {
    make(c, 0);
    const int variants = c < 54 ? 2 : 1;
    for (int v = 1; v <= variants; ++v) make(c, v);
  }
  return out;
}

}  // namespace hopqa::testing
