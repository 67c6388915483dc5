#include <doctest.h>

#include <algorithm>

#include "hopqa/gateway.hpp"
#include "hopqa/synthesis.hpp"
#include "support.hpp"

using namespace hopqa;
using namespace hopqa::synthesis;
using gateway::MockBackend;

namespace {

const std::string kTextA =
    "NOMA is the technique that allows multiple users to share the same time and frequency resources.";
const std::string kTextB = "NOMA allocates different power to users based on the channel conditions of each user.";
const std::string kQ1 = "Which wireless communication technique allows multiple users to share time and frequency resources?";
const std::string kS2 =
    "Which wireless communication technique allocates different power to users based on the channel conditions?";
const std::string kQ = "Which telecommunications technique lets users share resources and splits power by channel?";
const std::string kAnswerReply =
    "Answer: A\nExplanation: NOMA shares resources and allocates power by channel quality.\n"
    "Reasoning:\n1. Context A: users share the same time and frequency resources.\n"
    "2. Context B: power differs per user.\n3. Therefore the technique is NOMA.";

corpus::Document doc(const std::string& url, const std::string& text, const std::string& topic = "NOMA") {
  corpus::Document d;
  d.topic = topic;
  d.source_url = url;
  d.retrieved_at = "2024-01-01T00:00:00Z";
  d.raw_text = text;
  d.sanitized_text = text;
  corpus::finalize(d, {});
  return d;
}

MockBackend::GenerateRule rule(std::vector<std::string> contains, std::vector<std::string> responses) {
  return {std::nullopt, std::move(contains), std::move(responses), std::nullopt, std::nullopt, 0};
}

struct Harness {
  gateway::Gateway gw;
  std::shared_ptr<MockBackend> mock = std::make_shared<MockBackend>("m", "mock-model");
  SynthesisConfig cfg;
  corpus::Document a = doc("https://w/a", kTextA);
  corpus::Document b = doc("https://w/b", kTextB);

  Harness() {
    gw.add_backend(mock);
    cfg.entity_backend = cfg.question_backend = cfg.answer_backend = cfg.bias_backend = "m";
  }
  // Rules added first win, so overrides go in before standard().
  void standard() {
    mock->add_rule(rule({"primary entity is"}, {"NOMA"}));
    mock->add_rule(rule({"Primary multiple-choice question:"}, {kQ1}));
    mock->add_rule(rule({"Secondary multiple-choice question:"}, {kS2}));
    mock->add_rule(rule({"Integrated multiple-choice question:"}, {kQ}));
    mock->add_rule(rule({"Options:"}, {"A. NOMA\nB. TDMA\nC. CDMA\nD. OFDM"}));
    mock->add_rule(rule({"Multiple-choice answer:"}, {kAnswerReply}));
    mock->add_rule(rule({"Bias check ("}, {"The question uses both contexts.\nVerdict: NO"}));
  }
  Synthesizer synth() { return Synthesizer(gw, cfg); }
};

}  // namespace

TEST_CASE("entity extraction") {
  Harness h;
  h.standard();
  auto s = h.synth();
  CHECK(s.extract_entity(h.a) == "NOMA");

  Harness wrong;
  wrong.mock->add_rule(rule({"primary entity is"}, {"OFDM"}));
  auto ws = wrong.synth();
  CHECK_THROWS_AS(ws.extract_entity(wrong.a), ExtractionFailed);
  CHECK(wrong.mock->generate_calls() == 3);

  Harness empty;
  empty.mock->add_rule(rule({"primary entity is"}, {""}));
  auto es = empty.synth();
  CHECK_THROWS_AS(es.extract_entity(empty.a), ExtractionFailed);

  Harness retry;
  retry.mock->add_rule(rule({"primary entity is"}, {"", "NOMA."}));
  auto rs = retry.synth();
  CHECK(rs.extract_entity(retry.a) == "NOMA");
}

TEST_CASE("subquestions and integration") {
  Harness h;
  h.standard();
  auto s = h.synth();
  QaItem record;
  const auto [q1, s2] = s.generate_subquestions(h.a, h.b, "NOMA", QuestionType::multiple_choice, &record);
  CHECK(q1 == kQ1);
  CHECK(s2 == kS2);
  CHECK(s.integrate_questions(q1, s2, h.a, h.b, QuestionType::multiple_choice) == kQ);
  CHECK(record.provenance.at("subq_primary").model == "mock-model");
  CHECK(record.provenance.at("subq_primary").prompt_sha256.size() == 64);

  Harness same;
  same.mock->add_rule(rule({"multiple-choice question:"}, {kQ1}));
  auto ss = same.synth();
  CHECK_THROWS_AS(ss.generate_subquestions(same.a, same.b, "NOMA", QuestionType::multiple_choice), SubquestionFailed);
  CHECK_THROWS_AS(ss.integrate_questions(kQ1, kS2, same.a, same.b, QuestionType::multiple_choice), IntegrationFailed);
}

TEST_CASE("answer derivation") {
  Harness h;
  h.standard();
  auto s = h.synth();
  QaItem item;
  item.type = QuestionType::multiple_choice;
  item.entity = "NOMA";
  item.question = kQ;
  s.derive_answer(item, h.a, h.b);
  CHECK(item.answer == "A");
  REQUIRE(item.options.size() == 4);
  CHECK(item.options[3].text == "OFDM");
  CHECK(item.chain.size() == 3);
  CHECK(item.explanation.find("allocates power") != std::string::npos);

  Harness bad;
  bad.mock->add_rule(rule({"Multiple-choice answer:"}, {"Answer: E\nExplanation: x\nReasoning:\n1. a\n2. NOMA"}));
  bad.standard();
  auto bs = bad.synth();
  QaItem it2 = item;
  try {
    bs.derive_answer(it2, bad.a, bad.b);
    FAIL("expected AnswerFailed");
  } catch (const AnswerFailed& e) {
    CHECK(std::string(e.what()).find("outside A-D") != std::string::npos);
  }

  Harness later;
  later.mock->add_rule(rule({"Multiple-choice answer:"}, {"Answer: B\nExplanation: x\nReasoning:\n1. a\n2. TDMA",
                                                         "no format at all", kAnswerReply}));
  later.standard();
  auto ls = later.synth();
  QaItem it3 = item;
  ls.derive_answer(it3, later.a, later.b);
  CHECK(it3.answer == "A");

  Harness dup;
  dup.mock->add_rule(rule({"Options:"}, {"A. NOMA\nB. NOMA\nC. CDMA\nD. OFDM"}));
  dup.standard();
  auto ds = dup.synth();
  QaItem it4 = item;
  CHECK_THROWS_AS(ds.derive_answer(it4, dup.a, dup.b), AnswerFailed);
}

TEST_CASE("true/false answers") {
  Harness h;
  h.mock->add_rule(rule({"True/false answer:"},
                        {"Answer: True\nExplanation: Power-domain NOMA assigns power.\nReasoning:\n"
                         "1. NOMA has power-domain and code-domain categories.\n2. Power assignment is optimized.\n"
                         "3. So the statement is true."}));
  auto s = h.synth();
  QaItem item;
  item.type = QuestionType::true_false;
  item.question = "Power-domain NOMA eliminates the interference by assigning different optimized power to users.";
  s.derive_answer(item, h.a, h.b);
  CHECK(item.answer == "true");
  CHECK(item.options.empty());
}

TEST_CASE("reasoning chain validation") {
  const std::vector<std::string> aliases = {"NOMA"};
  auto ok = validate_chain({"Users share resources.", "Power is split by channel.", "Therefore NOMA."}, aliases);
  CHECK(ok.valid);
  CHECK(ok.gaps.empty());
  CHECK(validate_chain({"Users share resources.", "", "Therefore NOMA."}, aliases).gaps == std::vector<std::size_t>{2});
  CHECK(validate_chain({"Users share.", "Power split.", "Therefore TDMA."}, aliases).gaps == std::vector<std::size_t>{3});
  CHECK(validate_chain({"a NOMA", "a NOMA"}, aliases).gaps == std::vector<std::size_t>{2});
  CHECK(validate_chain({}, aliases).gaps == std::vector<std::size_t>{1});
  CHECK_FALSE(validate_chain({"x", "the NOMAS"}, aliases).valid);
}

TEST_CASE("bias detection") {
  Harness clean;
  clean.standard();
  QaItem item;
  item.q1 = kQ1;
  item.s2 = kS2;
  item.question = kQ;
  item.explanation = "x";
  CHECK(clean.synth().detect_bias(item, clean.a, clean.b).empty());
  CHECK(clean.synth().detect_bias(item, clean.a, clean.a) == std::vector<std::string>{"selection"});

  Harness ctx;
  ctx.mock->add_rule(rule({"Bias check (contextual bias)"}, {"It assumes an unstated premise.\nVerdict: YES"}));
  ctx.standard();
  CHECK(ctx.synth().detect_bias(item, ctx.a, ctx.b) == std::vector<std::string>{"contextual"});

  Harness unreadable;
  unreadable.mock->add_rule(rule({"Bias check (order bias)"}, {"Hard to say."}));
  unreadable.standard();
  CHECK(unreadable.synth().detect_bias(item, unreadable.a, unreadable.b) == std::vector<std::string>{"order"});
}

TEST_CASE("reply parsers") {
  auto parts = parse_answer_reply(kAnswerReply);
  REQUIRE(parts.has_value());
  CHECK(parts->answer == "A");
  CHECK(parts->chain.size() == 3);
  CHECK(parts->chain[2] == "Therefore the technique is NOMA.");
  CHECK_FALSE(parse_answer_reply("Explanation: only").has_value());
  auto multi = parse_answer_reply("answer: **B**\nExplanation: first\ncontinued\nReasoning:\n1) one\n2) two");
  REQUIRE(multi.has_value());
  CHECK(multi->answer == "B");
  CHECK(multi->explanation == "first continued");
  CHECK(multi->chain == std::vector<std::string>{"one", "two"});

  auto opts = parse_options("Options:\nA. NOMA\n(B) TDMA\nc: CDMA\nD) OFDM");
  REQUIRE(opts.has_value());
  CHECK((*opts)[1] == Option{"B", "TDMA"});
  CHECK((*opts)[2] == Option{"C", "CDMA"});
  CHECK_FALSE(parse_options("A. x\nB. y\nC. z").has_value());
  CHECK_FALSE(parse_options("A. x\nA. y\nC. z\nD. w").has_value());
}

TEST_CASE("item schema validation") {
  Harness h;
  h.standard();
  auto item = h.synth().assemble(h.a, h.b, QuestionType::multiple_choice);
  CHECK(validate_item(item, &h.a.sanitized_text).empty());
  const auto j = to_json(item);
  CHECK(validate_item_json(j).empty());
  CHECK(item_from_json(j) == [&] {
    auto copy = item;
    copy.provenance.clear();
    return copy;
  }());

  auto dup = j;
  dup["options"][1]["text"] = "noma";
  CHECK(validate_item_json(dup) == std::vector<std::string>{"options"});
  auto wrong = j;
  wrong["answer"] = "E";
  const auto wrong_fields = validate_item_json(wrong);
  CHECK(std::find(wrong_fields.begin(), wrong_fields.end(), "answer") != wrong_fields.end());
  auto echo = j;
  echo["question"] = j["q1"];
  CHECK(validate_item_json(echo) == std::vector<std::string>{"question"});
  auto flags = j;
  flags["bias_flags"] = {"order", "contextual"};
  CHECK(validate_item_json(flags) == std::vector<std::string>{"bias_flags"});
  auto missing = j;
  missing.erase("explanation");
  CHECK_FALSE(validate_item_json(missing).empty());
  CHECK_THROWS_AS(item_from_json(wrong), ValidationError);

  QaItem tf = item;
  tf.type = QuestionType::true_false;
  tf.options.clear();
  tf.answer = "true";
  tf.chain = {"step one", "so it is true"};
  auto tj = to_json(tf);
  CHECK(tj["answer"] == true);
  CHECK(validate_item_json(tj).empty());
  tj["answer"] = "true";
  CHECK(validate_item_json(tj) == std::vector<std::string>{"answer"});

  const std::string other = "a context about OFDM only";
  CHECK(validate_item(item, &other) == std::vector<std::string>{"entity"});
}

TEST_CASE("pairing picks the most similar same-topic partner below the threshold") {
  std::vector<corpus::Document> docs = {
      doc("u1", "NOMA shares power between near and far users in one cell with SIC."),
      doc("u2", "NOMA shares power between near and far users in one cell using SIC decoding."),
      doc("u3", "Completely unrelated prose about cooking pasta."),
      doc("u4", "Only document in its topic.", "OFDM"),
  };
  const auto pairs = pair_contexts(docs, 0.99);
  std::map<std::size_t, std::size_t> partner(pairs.begin(), pairs.end());
  CHECK(partner.at(0) == 1);
  CHECK(partner.at(1) == 0);
  CHECK(partner.count(3) == 0);
  for (const auto& [i, j] : pairs) CHECK(docs[i].topic == docs[j].topic);
  const auto strict = pair_contexts(docs, 0.1);
  for (const auto& [i, j] : strict) CHECK(corpus::estimated_jaccard(docs[i].signature, docs[j].signature) < 0.1);
}

TEST_CASE("run_synthesis: ten scripted pairs, skips and determinism") {
  hopqa::testing::TempDir dir;
  std::vector<corpus::Document> docs;
  const std::vector<std::string> facts = {"cell edge", "SIC order", "power split", "user pairing", "fairness",
                                          "uplink",    "downlink",  "massive access", "latency", "energy"};
  for (std::size_t i = 0; i < facts.size(); ++i) {
    docs.push_back(doc("https://w/" + std::to_string(i),
                       "NOMA note " + std::to_string(i) + ": " + facts[i] + " matters for " + facts[(i + 3) % 10] +
                           " in deployments number " + std::to_string(i * 37)));
  }
  docs.push_back(doc("https://w/ofdm", "OFDM uses a cyclic prefix.", "OFDM"));

  auto run = [&](std::shared_ptr<MockBackend>& mock) {
    gateway::Gateway gw{gateway::ResponseCache(dir.path())};
    mock = std::make_shared<MockBackend>("m", "mock-model");
    mock->add_rule(rule({"primary entity is"}, {"NOMA"}));
    mock->add_rule(rule({"Primary multiple-choice question:"}, {kQ1}));
    mock->add_rule(rule({"Secondary multiple-choice question:"}, {kS2}));
    mock->add_rule(rule({"Integrated multiple-choice question:"}, {kQ}));
    mock->add_rule(rule({"Options:"}, {"A. NOMA\nB. TDMA\nC. CDMA\nD. OFDM"}));
    mock->add_rule(rule({"Multiple-choice answer:"}, {kAnswerReply}));
    mock->add_rule(rule({"Bias check ("}, {"Verdict: NO"}));
    gw.add_backend(mock);
    SynthesisConfig cfg;
    cfg.entity_backend = cfg.question_backend = cfg.answer_backend = cfg.bias_backend = "m";
    cfg.parallelism = 3;
    return run_synthesis(docs, QuestionType::multiple_choice, gw, cfg);
  };
  std::shared_ptr<MockBackend> first_mock, second_mock;
  const auto first = run(first_mock);
  CHECK(first.pairs == 10);
  CHECK(first.unpaired == 1);
  CHECK(first.items.size() == 10);
  CHECK(first.skipped.empty());
  for (const auto& it : first.items) CHECK(validate_item_json(to_json(it)).empty());

  const auto second = run(second_mock);
  CHECK(second_mock->generate_calls() == 0);
  REQUIRE(second.items.size() == first.items.size());
  for (std::size_t i = 0; i < first.items.size(); ++i) CHECK(to_json(first.items[i]) == to_json(second.items[i]));

  gateway::Gateway gw;
  auto refuse = std::make_shared<MockBackend>("m");
  refuse->add_rule(rule({"primary entity is"}, {"TDMA"}));
  gw.add_backend(refuse);
  SynthesisConfig cfg;
  cfg.entity_backend = cfg.question_backend = cfg.answer_backend = cfg.bias_backend = "m";
  const auto skipped = run_synthesis({docs[0], docs[1]}, QuestionType::multiple_choice, gw, cfg);
  CHECK(skipped.items.empty());
  REQUIRE(skipped.skipped.size() == 2);
  CHECK(skipped.skipped[0].stage == "extraction");
  CHECK(skipped.to_json()["skipped"] == 2);
}
