#include <doctest.h>

#include <httplib.h>

#include <algorithm>
#include <barrier>
#include <sstream>
#include <thread>

#include "hopqa/mathgen.hpp"
#include "hopqa/review.hpp"
#include "review_fixtures.hpp"
#include "support.hpp"

using namespace hopqa;
using namespace hopqa::review;
using hopqa::testing::qa_row;
using hopqa::testing::TempDir;

namespace {

std::function<std::string()> fixed_clock() {
  return [] { return std::string("2024-03-03T03:03:03Z"); };
}

std::vector<json> five_rows() {
  return {qa_row("q1", {"selection"}, "easy"), qa_row("q2"), qa_row("q3", {"order", "selection"}, "hard"),
          qa_row("q4"), qa_row("q5", {}, "easy")};
}

std::vector<json> read_jsonl_text(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

VerdictRequest verdict(std::string id, std::string decision, std::uint64_t version) {
  return {std::move(id), std::move(decision), std::nullopt, "rev-1", version};
}

struct Service {
  TempDir dir;
  Store store;
  Server server;
  int port;
  httplib::Client client;

  explicit Service(std::vector<json> rows, std::string token = "secret")
      : store(dir / "journal.log", std::move(rows), fixed_clock()),
        server(store, ServerOptions{std::move(token), {}}),
        port(server.start("127.0.0.1", 0)),
        client("127.0.0.1", port) {
    client.set_bearer_token_auth("secret");
  }
  httplib::Result post_verdict(const std::string& id, const json& body) {
    return client.Post("/items/" + id + "/verdict", body.dump(), "application/json");
  }
};

}  // namespace

TEST_CASE("store pagination and filters") {
  TempDir dir;
  Store store(dir / "j.log", five_rows(), fixed_clock());
  auto page = store.list({}, 0, 2);
  CHECK(page.total == 5);
  REQUIRE(page.items.size() == 2);
  CHECK(page.items[0].id == "q1");
  CHECK(page.items[1].id == "q2");
  CHECK(store.list({}, 2, 2).items.size() == 1);
  CHECK(store.list({}, 3, 2).items.empty());

  Filter sel;
  sel.bias_flag = "selection";
  auto flagged = store.list(sel, 0, 50);
  CHECK(flagged.total == 2);
  for (const auto& e : flagged.items) CHECK(e.payload["bias_flags"].dump().find("selection") != std::string::npos);
  Filter easy;
  easy.difficulty = "easy";
  CHECK(store.list(easy, 0, 50).total == 2);
  Filter tf;
  tf.type = "true_false";
  CHECK(store.list(tf, 0, 50).total == 0);
  CHECK_THROWS(store.list({}, 0, 0));
  CHECK_THROWS(store.list({}, 0, 201));

  Store empty(dir / "e.log", {}, fixed_clock());
  CHECK(empty.list({}, 0, 10).total == 0);
}

TEST_CASE("verdict state machine") {
  TempDir dir;
  Store store(dir / "j.log", five_rows(), fixed_clock());
  auto v = store.submit(verdict("q1", "accepted", 1));
  CHECK(v.version == 2);
  CHECK(store.get("q1")->status == "accepted");
  CHECK(store.list({}, 0, 50).total == 4);

  CHECK_THROWS_AS(store.submit(verdict("q1", "accepted", 1)), ConflictError);
  CHECK(store.submit(verdict("q1", "rejected", 2)).version == 3);
  CHECK(store.get("q1")->status == "rejected");
  try {
    store.submit(verdict("q1", "accepted", 3));
    FAIL("rejected items are final");
  } catch (const ConflictError& e) {
    CHECK(e.current_version() == 3);
  }
}

TEST_CASE("edits are validated and replace content") {
  TempDir dir;
  Store store(dir / "j.log", five_rows(), fixed_clock());

  auto edited = qa_row("q2");
  edited["explanation"] = "Edited explanation about NOMA power sharing.";
  VerdictRequest ok{"q2", "edited", edited, "rev-2", 1};
  CHECK(store.submit(ok).version == 2);
  CHECK(store.get("q2")->payload["explanation"] == "Edited explanation about NOMA power sharing.");
  CHECK(store.get("q2")->payload["review"] == "edited");

  auto dup = qa_row("q3");
  dup["options"][1]["text"] = "NOMA";
  try {
    store.submit({"q3", "edited", dup, "rev-2", 1});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.fields() == std::vector<std::string>{"edited_item.options"});
  }
  CHECK_THROWS_AS(store.submit({"q3", "edited", std::nullopt, "rev-2", 1}), ValidationError);
  CHECK_THROWS_AS(store.submit({"q3", "maybe", std::nullopt, "rev-2", 1}), ValidationError);
  CHECK_THROWS_AS(store.submit({"q3", "accepted", std::nullopt, " ", 1}), ValidationError);
  CHECK_THROWS_AS(store.submit(verdict("nope", "accepted", 1)), NotFoundError);

  store.submit(verdict("q4", "rejected", 1));
  CHECK_THROWS_AS(store.submit(verdict("q4", "accepted", 2)), ConflictError);
}

TEST_CASE("journal replay reconstructs the store") {
  TempDir dir;
  const auto journal = dir / "j.log";
  json before;
  {
    Store store(journal, five_rows(), fixed_clock());
    store.submit(verdict("q1", "accepted", 1));
    store.submit(verdict("q2", "rejected", 1));
    auto edited = qa_row("q3", {"order", "selection"}, "hard");
    edited["question"] = "Edited question about NOMA resource sharing?";
    store.submit({"q3", "edited", edited, "rev-9", 1});
    store.submit(verdict("q3", "accepted", 2));
    before = store.state();
    CHECK(store.journal_length() == 4);
  }
  Store replayed(journal, five_rows(), fixed_clock());
  CHECK(replayed.state() == before);
  CHECK(replayed.journal_length() == 4);

  // Versions per item increase by one with no gaps.
  std::map<std::string, std::uint64_t> last;
  for (const auto& row : read_jsonl(journal)) {
    const auto id = row["item_id"].get<std::string>();
    const auto v = row["version"].get<std::uint64_t>();
    CHECK(v == (last.count(id) ? last[id] : 1) + 1);
    last[id] = v;
  }

  write_file_atomic(dir / "bad.log", R"({"item_id":"q1","decision":"accepted","reviewer_id":"r","version":5,"recorded_at":"x"})"
                                     "\n");
  CHECK_THROWS(Store(dir / "bad.log", five_rows(), fixed_clock()));
}

TEST_CASE("export holds only accepted and edited content") {
  TempDir dir;
  auto rows = five_rows();
  rows.push_back(qa_row("q6"));
  Store store(dir / "j.log", rows, fixed_clock());
  CHECK(store.export_lines().empty());
  store.export_accepted(dir / "empty.jsonl");
  CHECK(read_file(dir / "empty.jsonl").empty());

  store.submit(verdict("q1", "accepted", 1));
  store.submit(verdict("q2", "accepted", 1));
  auto edited = qa_row("q3");
  edited["explanation"] = "Edited.";
  store.submit({"q3", "edited", edited, "r", 1});
  store.submit(verdict("q4", "rejected", 1));
  store.submit(verdict("q5", "rejected", 1));
  store.export_accepted(dir / "out.jsonl");
  const auto lines = read_jsonl(dir / "out.jsonl");
  REQUIRE(lines.size() == 3);
  CHECK(lines[0]["id"] == "q1");
  CHECK(lines[2]["explanation"] == "Edited.");
  for (const auto& l : lines) {
    CHECK(l["review"] != "rejected");
    CHECK(l["review"] != "pending");
  }
}

TEST_CASE("math problems share the queue") {
  TempDir dir;
  mathgen::MathProblem p;
  p.statement = "Find the rate of user 2 with g1 = 3 and g2 = 1.";
  p.solution_steps = {"r2 = log2(2) = 1"};
  p.final_answer = mathgen::FinalAnswer{1.0, "bit/s/Hz"};
  p.topic_tags = {"noma"};
  p.validation_status = "valid";
  p.id = mathgen::problem_id(p);
  Store store(dir / "j.log", {qa_row("q1"), mathgen::to_json(p)}, fixed_clock());
  Filter math;
  math.type = "math";
  REQUIRE(store.list(math, 0, 10).total == 1);
  CHECK(store.get(p.id)->kind == Kind::math);
  store.submit(verdict(p.id, "accepted", 1));
  CHECK(read_jsonl_text(store.export_lines()).size() == 1);
}

TEST_CASE("http: auth, listing, verdict codes and export") {
  Service svc(five_rows());

  httplib::Client anon("127.0.0.1", svc.port);
  CHECK(anon.Get("/healthz")->status == 200);
  CHECK(anon.Get("/items")->status == 401);
  httplib::Client wrong("127.0.0.1", svc.port);
  wrong.set_bearer_token_auth("nope");
  CHECK(wrong.Get("/export")->status == 401);

  auto list = svc.client.Get("/items?status=pending&page=0&page_size=2");
  REQUIRE(list->status == 200);
  auto body = json::parse(list->body);
  CHECK(body["total"] == 5);
  CHECK(body["items"].size() == 2);
  CHECK(body["items"][0]["version"] == 1);
  CHECK(body["items"][0]["item"]["id"] == "q1");
  CHECK(json::parse(svc.client.Get("/items?bias=order")->body)["total"] == 1);
  CHECK(svc.client.Get("/items?page_size=0")->status == 400);
  CHECK(svc.client.Get("/items?page=x")->status == 400);
  CHECK(svc.client.Get("/items/q2")->status == 200);
  CHECK(svc.client.Get("/items/none")->status == 404);

  CHECK(svc.post_verdict("none", {{"decision", "accepted"}, {"reviewer_id", "r"}, {"version", 1}})->status == 404);
  auto missing = svc.post_verdict("q1", {{"decision", "accepted"}});
  CHECK(missing->status == 422);
  CHECK(json::parse(missing->body)["fields"] == json({"reviewer_id", "version"}));
  CHECK(svc.client.Post("/items/q1/verdict", "{oops", "application/json")->status == 400);

  auto ok = svc.post_verdict("q1", {{"decision", "accepted"}, {"reviewer_id", "r"}, {"version", 1}});
  REQUIRE(ok->status == 200);
  CHECK(json::parse(ok->body)["version"] == 2);
  auto stale = svc.post_verdict("q1", {{"decision", "rejected"}, {"reviewer_id", "r"}, {"version", 1}});
  CHECK(stale->status == 409);
  CHECK(json::parse(stale->body)["current_version"] == 2);

  auto dup = qa_row("q2");
  dup["options"][2]["text"] = "TDMA";
  auto bad_edit = svc.post_verdict("q2", {{"decision", "edited"}, {"edited_item", dup}, {"reviewer_id", "r"}, {"version", 1}});
  CHECK(bad_edit->status == 422);
  CHECK(json::parse(bad_edit->body)["fields"] == json({"edited_item.options"}));

  auto exported = svc.client.Get("/export?status=accepted");
  REQUIRE(exported->status == 200);
  const auto lines = read_jsonl_text(exported->body);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0]["id"] == "q1");
  CHECK(svc.client.Get("/export?status=rejected")->status == 400);
}

TEST_CASE("http: concurrent verdict race yields one success and one conflict") {
  for (int round = 0; round < 10; ++round) {
    Service svc(five_rows());
    std::barrier sync(2);
    std::vector<int> codes(2);
    {
      std::vector<std::jthread> racers;
      for (int i = 0; i < 2; ++i) {
        racers.emplace_back([&, i] {
          httplib::Client c("127.0.0.1", svc.port);
          c.set_bearer_token_auth("secret");
          const json body = {{"decision", "accepted"}, {"reviewer_id", "r" + std::to_string(i)}, {"version", 1}};
          sync.arrive_and_wait();
          codes[static_cast<std::size_t>(i)] = c.Post("/items/q3/verdict", body.dump(), "application/json")->status;
        });
      }
    }
    std::sort(codes.begin(), codes.end());
    CHECK(codes == std::vector<int>{200, 409});
    CHECK(svc.store.journal_length() == 1);
  }
}

TEST_CASE("http: static assets for the browser client") {
  TempDir dir;
  write_file_atomic(dir / "ui" / "index.html", "<html>review</html>");
  Store store(dir / "j.log", five_rows(), fixed_clock());
  Server server(store, ServerOptions{"", dir / "ui"});
  const int port = server.start("127.0.0.1", 0);
  httplib::Client c("127.0.0.1", port);
  auto page = c.Get("/index.html");
  REQUIRE(page);
  CHECK(page->status == 200);
  CHECK(page->body == "<html>review</html>");
  CHECK(c.Get("/items")->status == 200);
  CHECK_THROWS(Server(store, ServerOptions{"", dir / "missing"}));
}
