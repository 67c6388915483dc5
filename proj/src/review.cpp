#include <fstream>
#include <mutex>

#include "hopqa/mathgen.hpp"
#include "hopqa/review.hpp"
#include "hopqa/synthesis.hpp"

namespace hopqa::review {

namespace {

const std::vector<std::string> kDecisions = {"accepted", "rejected", "edited"};

Kind kind_of(const json& row) { return row.is_object() && row.contains("statement") ? Kind::math : Kind::qa; }

std::string type_of(const Entry& e) {
  if (e.kind == Kind::math) return "math";
  return e.payload.value("type", "");
}

}  // namespace

json RecordedVerdict::to_json() const {
  json j = {{"item_id", item_id},
            {"decision", decision},
            {"reviewer_id", reviewer_id},
            {"version", version},
            {"recorded_at", recorded_at}};
  if (edited_item) j["edited_item"] = *edited_item;
  return j;
}

RecordedVerdict RecordedVerdict::from_json(const json& j) {
  RecordedVerdict v;
  v.item_id = j.at("item_id").get<std::string>();
  v.decision = j.at("decision").get<std::string>();
  v.reviewer_id = j.at("reviewer_id").get<std::string>();
  v.version = j.at("version").get<std::uint64_t>();
  v.recorded_at = j.at("recorded_at").get<std::string>();
  if (j.contains("edited_item")) v.edited_item = j["edited_item"];
  return v;
}

std::vector<std::string> validate_payload(Kind kind, const json& payload) {
  return kind == Kind::math ? mathgen::validate_problem_json(payload) : synthesis::validate_item_json(payload);
}

Store::Store(std::vector<std::filesystem::path> datasets, std::filesystem::path journal,
             std::function<std::string()> clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
  std::vector<json> rows;
  for (const auto& path : datasets) {
    for (auto& row : read_jsonl(path)) rows.push_back(std::move(row));
  }
  load_rows(rows);
  replay();
}

Store::Store(std::filesystem::path journal, std::vector<json> rows, std::function<std::string()> clock)
    : journal_(std::move(journal)), clock_(std::move(clock)) {
  load_rows(rows);
  replay();
}

void Store::load_rows(const std::vector<json>& rows) {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    Entry e;
    e.kind = kind_of(row);
    auto bad = validate_payload(e.kind, row);
    if (!bad.empty()) {
      throw Error("review seed record " + std::to_string(i + 1) + ": " + ValidationError(bad).what());
    }
    e.id = row["id"].get<std::string>();
    e.payload = row;
    e.status = row.value("review", "pending");
    e.payload["review"] = e.status;
    if (!entries_.emplace(e.id, e).second) throw Error("duplicate item id " + e.id + " in review seed");
  }
}

void Store::replay() {
  if (journal_.empty() || !std::filesystem::exists(journal_)) return;
  std::size_t line = 0;
  for (const auto& row : read_jsonl(journal_)) {
    ++line;
    RecordedVerdict v;
    try {
      v = RecordedVerdict::from_json(row);
    } catch (const json::exception& e) {
      throw Error(journal_.string() + ":" + std::to_string(line) + ": " + e.what());
    }
    auto it = entries_.find(v.item_id);
    if (it == entries_.end()) throw Error(journal_.string() + ":" + std::to_string(line) + ": unknown item " + v.item_id);
    if (v.version != it->second.version + 1) {
      throw Error(journal_.string() + ":" + std::to_string(line) + ": version gap for " + v.item_id);
    }
    apply(v);
    ++journal_length_;
  }
}

void Store::apply(const RecordedVerdict& v) {
  auto& e = entries_.at(v.item_id);
  if (v.decision == "edited" && v.edited_item) e.payload = *v.edited_item;
  e.status = v.decision;
  e.payload["review"] = v.decision;
  e.version = v.version;
}

Page Store::list(const Filter& filter, std::size_t page, std::size_t page_size) const {
  if (page_size < 1 || page_size > 200) throw Error("page_size must be in [1, 200]");
  std::shared_lock lock(mu_);
  Page out;
  const std::size_t first = page * page_size;
  for (const auto& [id, e] : entries_) {
    if (e.status != filter.status) continue;
    if (filter.type && type_of(e) != *filter.type) continue;
    if (filter.difficulty && e.payload.value("difficulty", "") != *filter.difficulty) continue;
    if (filter.bias_flag) {
      const auto flags = e.payload.value("bias_flags", json::array());
      if (std::find(flags.begin(), flags.end(), json(*filter.bias_flag)) == flags.end()) continue;
    }
    if (out.total >= first && out.items.size() < page_size) out.items.push_back(e);
    ++out.total;
  }
  return out;
}

std::optional<Entry> Store::get(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

RecordedVerdict Store::submit(const VerdictRequest& req) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(req.item_id);
  if (it == entries_.end()) throw NotFoundError("unknown item " + req.item_id);
  const Entry& e = it->second;

  std::vector<std::string> bad;
  if (std::find(kDecisions.begin(), kDecisions.end(), req.decision) == kDecisions.end()) bad.push_back("decision");
  if (trim(req.reviewer_id).empty()) bad.push_back("reviewer_id");
  std::optional<json> edited;
  if (req.decision == "edited") {
    if (!req.edited_item) {
      bad.push_back("edited_item");
    } else {
      json candidate = *req.edited_item;
      if (candidate.is_object()) candidate["review"] = "edited";
      for (auto& f : validate_payload(e.kind, candidate)) bad.push_back("edited_item." + f);
      if (candidate.is_object() && candidate.value("id", "") != req.item_id) bad.push_back("edited_item.id");
      edited = std::move(candidate);
    }
  }
  if (!bad.empty()) throw ValidationError(bad);

  if (req.version != e.version) {
    throw ConflictError("version " + std::to_string(req.version) + " is stale; current is " +
                            std::to_string(e.version),
                        e.version);
  }
  if (e.status == "rejected") throw ConflictError("item " + req.item_id + " was rejected and is final", e.version);

  RecordedVerdict v{req.item_id, req.decision, edited, req.reviewer_id, e.version + 1, clock_()};
  if (!journal_.empty()) {
    if (journal_.has_parent_path()) std::filesystem::create_directories(journal_.parent_path());
    std::ofstream out(journal_, std::ios::app | std::ios::binary);
    out << v.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error("cannot append to journal " + journal_.string());
  }
  apply(v);
  ++journal_length_;
  return v;
}

std::string Store::export_lines() const {
  std::shared_lock lock(mu_);
  std::string out;
  for (const auto& [id, e] : entries_) {
    if (e.status != "accepted" && e.status != "edited") continue;
    out += e.payload.dump();
    out.push_back('\n');
  }
  return out;
}

void Store::export_accepted(const std::filesystem::path& out) const { write_file_atomic(out, export_lines()); }

json Store::state() const {
  std::shared_lock lock(mu_);
  json out = json::array();
  for (const auto& [id, e] : entries_) {
    out.push_back({{"id", id}, {"status", e.status}, {"version", e.version}, {"payload", e.payload}});
  }
  return out;
}

std::size_t Store::journal_length() const {
  std::shared_lock lock(mu_);
  return journal_length_;
}

}  // namespace hopqa::review
