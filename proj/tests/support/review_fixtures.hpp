#pragma once

#include <string>
#include <vector>

#include "hopqa/synthesis.hpp"

namespace hopqa::testing {

// A schema-valid multiple-choice dataset line.
inline json qa_row(const std::string& id, std::vector<std::string> bias_flags = {},
                   const std::string& difficulty = "unset") {
  synthesis::QaItem it;
  it.id = id;
  it.type = synthesis::QuestionType::multiple_choice;
  it.context_a = "ctx-a-" + id;
  it.context_b = "ctx-b-" + id;
  it.entity = "NOMA";
  it.q1 = "Which technique lets users share time and frequency resources?";
  it.s2 = "Which technique allocates power by channel condition?";
  it.question = "Which technique shares resources and allocates power by channel (" + id + ")?";
  it.options = {{"A", "NOMA"}, {"B", "TDMA"}, {"C", "CDMA"}, {"D", "OFDM"}};
  it.answer = "A";
  it.explanation = "NOMA shares resources and splits power.";
  it.chain = {"Users share resources.", "Power is split, so the answer is NOMA."};
  it.bias_flags = std::move(bias_flags);
  it.difficulty = difficulty;
  return synthesis::to_json(it);
}

}  // namespace hopqa::testing
