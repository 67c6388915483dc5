#include "hopqa/gateway.hpp"

namespace hopqa::gateway {

namespace {

constexpr const char* kEntity = "{{context}} In the given context, the primary entity is";

constexpr const char* kSubqPrimaryMc =
    "Context A:\n{{context}}\n\n"
    "Write one primary question that can be answered from Context A alone and whose answer is the "
    "entity \"{{entity}}\". Do not name the entity in the question. Reply with the question only.\n"
    "Primary multiple-choice question:";

constexpr const char* kSubqSecondaryMc =
    "Context B:\n{{context}}\n\n"
    "Write one secondary question derived from a fact that Context B adds about the entity "
    "\"{{entity}}\". Its answer must also be the entity. Do not name the entity in the question. "
    "Reply with the question only.\n"
    "Secondary multiple-choice question:";

constexpr const char* kSubqPrimaryTf =
    "Context A:\n{{context}}\n\n"
    "Write one statement about \"{{entity}}\" that Context A supports. Reply with the statement only.\n"
    "Primary true/false statement:";

constexpr const char* kSubqSecondaryTf =
    "Context B:\n{{context}}\n\n"
    "Write one statement about \"{{entity}}\" that can be judged true or false from Context B. "
    "Reply with the statement only.\n"
    "Secondary true/false statement:";

constexpr const char* kIntegrateMc =
    "Context A:\n{{context_a}}\n\nContext B:\n{{context_b}}\n\n"
    "Subquestion 1: {{q1}}\nSubquestion 2: {{s2}}\n\n"
    "Combine both subquestions into a single multi-hop question that can only be answered by using "
    "the facts behind both of them. Reply with the question only.\n"
    "Integrated multiple-choice question:";

constexpr const char* kIntegrateTf =
    "Context A:\n{{context_a}}\n\nContext B:\n{{context_b}}\n\n"
    "Statement 1: {{q1}}\nStatement 2: {{s2}}\n\n"
    "Combine both statements into a single multi-hop statement whose truth can only be judged by "
    "using the facts behind both of them. Reply with the statement only.\n"
    "Integrated true/false statement:";

constexpr const char* kOptionsMc =
    "Question: {{question}}\nCorrect answer: {{entity}}\n\n"
    "Write four answer options labeled A, B, C and D, one per line, in the form \"A. text\". "
    "Exactly one option is the correct answer. The other three are plausible but wrong wireless "
    "communication terms. All four must be distinct.\n"
    "Options:";

constexpr const char* kAnswerMc =
    "Context A:\n{{context_a}}\n\nContext B:\n{{context_b}}\n\n"
    "Question: {{question}}\n{{options}}\n\n"
    "Choose the correct option using both contexts. Reply exactly in this format:\n"
    "Answer: <letter>\nExplanation: <one paragraph>\nReasoning:\n1. <step>\n2. <step>\n"
    "Multiple-choice answer:";

constexpr const char* kAnswerTf =
    "Context A:\n{{context_a}}\n\nContext B:\n{{context_b}}\n\n"
    "Statement: {{question}}\n\n"
    "Decide whether the statement is true using both contexts. Reply exactly in this format:\n"
    "Answer: <True or False>\nExplanation: <one paragraph>\nReasoning:\n1. <step>\n2. <step>\n"
    "True/false answer:";

constexpr const char* kBiasCheck =
    "You review generated multi-hop questions for {{bias_name}}.\n"
    "Definition: {{bias_definition}}\n\n"
    "Context A:\n{{context_a}}\n\nContext B:\n{{context_b}}\n\n"
    "Subquestion 1: {{q1}}\nSubquestion 2: {{s2}}\nIntegrated question: {{question}}\n"
    "Explanation: {{explanation}}\n\n"
    "Think through the subquestions and the integrated question step by step, then decide whether "
    "the integrated question shows {{bias_name}}. Finish with a line \"Verdict: YES\" or \"Verdict: NO\".\n"
    "Bias check ({{bias_name}}):";

constexpr const char* kPiiDetect =
    "List every span of personally identifiable information in the text below: names of private "
    "individuals, e-mail addresses, phone numbers, account handles, street addresses. Give one exact "
    "span per line, copied verbatim. Reply NONE if there is none.\n\n"
    "Text:\n{{text}}\n\nPII spans:";

// Multi-agent math problem generation. Each agent gets a role preamble in
// the system part.

constexpr const char* kSolvixRole =
    "You are Solvix. You write correct, complete, step-by-step solutions to NOMA (non-orthogonal "
    "multiple access) math problems.";
constexpr const char* kProbMasterRole =
    "You are ProbMaster. You turn instructions or worked solutions into clear, self-contained NOMA "
    "problem statements.";
constexpr const char* kPrimeArchitectRole =
    "You are PrimeArchitect. You design varied NOMA problems on topics such as power allocation, SINR "
    "and achievable rates.";
constexpr const char* kValidataRole =
    "You are Validata. You check NOMA problems and their solutions for mathematical correctness, "
    "consistency with NOMA principles and clarity, and you give precise feedback on every error.";
constexpr const char* kRefineMasterRole =
    "You are RefineMaster. You revise NOMA problems and solutions so that they address reviewer "
    "feedback while staying challenging and instructive.";
constexpr const char* kExploreEnhancerRole =
    "You are ExploreEnhancer. You extend NOMA problems with one advanced concept (for example "
    "imperfect SIC, user mobility or multi-cell interference) without making them unsolvable.";

constexpr const char* kBlockFormat =
    "Reply in this format:\nStatement: <problem statement>\nSolution:\n1. <step>\n2. <step>\n"
    "Final answer: <number> <units>";

}  // namespace

PromptRegistry PromptRegistry::defaults() {
  PromptRegistry r;
  r.add({"entity.extract", kEntity, std::nullopt});
  r.add({"subq.primary.mc", kSubqPrimaryMc, std::nullopt});
  r.add({"subq.secondary.mc", kSubqSecondaryMc, std::nullopt});
  r.add({"subq.primary.tf", kSubqPrimaryTf, std::nullopt});
  r.add({"subq.secondary.tf", kSubqSecondaryTf, std::nullopt});
  r.add({"integrate.mc", kIntegrateMc, std::nullopt});
  r.add({"integrate.tf", kIntegrateTf, std::nullopt});
  r.add({"options.mc", kOptionsMc, std::nullopt});
  r.add({"answer.mc", kAnswerMc, std::nullopt});
  r.add({"answer.tf", kAnswerTf, std::nullopt});
  r.add({"bias.check", kBiasCheck, std::nullopt});
  r.add({"pii.detect", kPiiDetect, std::nullopt});

  auto agent = [&](const char* id, const char* role, std::string user) {
    r.add({id, std::string(role) + "\n\n" + user, std::make_pair(std::string(role), std::move(user))});
  };
  agent("agent.solvix.topic", kSolvixRole,
        "Topic: {{topic}}\n\nWrite a worked solution to a two-user NOMA problem on this topic, with every "
        "parameter value stated in the first step.\n"
        "Reply in this format:\nSolution:\n1. <step>\n2. <step>\nFinal answer: <number> <units>");
  agent("agent.solvix.statement", kSolvixRole,
        "Problem: {{statement}}\n\nSolve the problem step by step.\n"
        "Reply in this format:\nSolution:\n1. <step>\n2. <step>\nFinal answer: <number> <units>");
  agent("agent.primearchitect.draft", kPrimeArchitectRole,
        "Topic: {{topic}}\n\nWrite one two-user NOMA problem on this topic with all parameter values "
        "given explicitly.\nReply in this format:\nStatement: <problem statement>");
  agent("agent.primearchitect.from_solution", kPrimeArchitectRole,
        "Solution:\n{{solution}}\nFinal answer: {{final_answer}}\n\nWrite the problem statement that this "
        "solution answers. State every parameter value the solution uses.\n"
        "Reply in this format:\nStatement: <problem statement>");
  agent("agent.probmaster.draft", kProbMasterRole,
        "Instruction: write a NOMA problem on {{topic}} with all parameter values given explicitly.\n"
        "Reply in this format:\nStatement: <problem statement>");
  agent("agent.exploreenhancer", kExploreEnhancerRole,
        "Statement: {{statement}}\nSolution:\n{{solution}}\nFinal answer: {{final_answer}}\n\n"
        "Add one advanced NOMA concept to the problem and update the solution accordingly.\n" +
            std::string(kBlockFormat));
  agent("agent.validata", kValidataRole,
        "Statement: {{statement}}\nSolution:\n{{solution}}\nFinal answer: {{final_answer}}\n\n"
        "Check the problem and solution. Reply with \"VERDICT: VALID\" or \"VERDICT: INVALID\" on the first "
        "line, then \"FEEDBACK: <what is wrong>\".");
  agent("agent.refinemaster", kRefineMasterRole,
        "Statement: {{statement}}\nSolution:\n{{solution}}\nFinal answer: {{final_answer}}\n\n"
        "Reviewer feedback: {{feedback}}\n\nRevise the problem and solution to fix every issue.\n" +
            std::string(kBlockFormat));
  return r;
}

}  // namespace hopqa::gateway
