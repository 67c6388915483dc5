#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hopqa/eval.hpp"

namespace hopqa::testing {

struct AnswerCase {
  std::string completion;
  synthesis::QuestionType type;
  eval::PromptMode mode;
  std::optional<std::string> expected;
};

inline std::string filler(int n) {
  std::string out;
  for (int i = 0; i < n; ++i) out += "filler ";
  return out;
}

// Hand-labeled completions for the answer parser.
inline std::vector<AnswerCase> answer_cases() {
  using synthesis::QuestionType;
  using eval::PromptMode;
  const auto mc = QuestionType::multiple_choice;
  const auto tf = QuestionType::true_false;
  const auto zs = PromptMode::zero_shot;
  const auto cot = PromptMode::zero_shot_cot;
  return {
      {"The answer is B.", mc, zs, "B"},
      {"B", mc, zs, "B"},
      {"(C) Successive interference cancellation", mc, zs, "C"},
      {"Answer: d", mc, zs, "D"},
      {"I think option A is right.", mc, zs, "A"},
      {"A. NOMA", mc, zs, "A"},
      {"The answer is a technique called NOMA.", mc, zs, std::nullopt},
      {"None of the options apply here.", mc, zs, std::nullopt},
      {"Final answer: (B)", mc, zs, "B"},
      {"Answer:\nC", mc, zs, "C"},
      {filler(30) + "A", mc, zs, std::nullopt},
      {filler(29) + "A", mc, zs, "A"},
      {"False, because interference remains.", tf, zs, "false"},
      {"True.", tf, zs, "true"},
      {"Yes, NOMA can serve both users.", tf, zs, "true"},
      {"Answer: false", tf, zs, "false"},
      {"It depends on the channel.", tf, zs, std::nullopt},
      {"The statement is TRUE", tf, zs, "true"},
      {"User 1 decodes first. " + filler(40) + "\nAnswer: B", mc, cot, "B"},
      {"User 1 decodes first. " + filler(40) + "\nAnswer: B", mc, zs, std::nullopt},
  };
}

}  // namespace hopqa::testing
