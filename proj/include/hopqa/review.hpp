#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "hopqa/error.hpp"
#include "hopqa/util.hpp"

namespace hopqa::review {

class ConflictError : public Error {
 public:
  ConflictError(const std::string& msg, std::uint64_t current) : Error(msg), current_(current) {}
  std::uint64_t current_version() const { return current_; }

 private:
  std::uint64_t current_;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

enum class Kind { qa, math };

struct Entry {
  std::string id;
  Kind kind = Kind::qa;
  json payload;  // dataset line; its "review" field tracks status
  std::string status = "pending";
  std::uint64_t version = 1;
};

struct VerdictRequest {
  std::string item_id;
  std::string decision;  // accepted, rejected, edited
  std::optional<json> edited_item;
  std::string reviewer_id;
  std::uint64_t version = 0;
};

struct RecordedVerdict {
  std::string item_id;
  std::string decision;
  std::optional<json> edited_item;
  std::string reviewer_id;
  std::uint64_t version = 0;  // version after the verdict
  std::string recorded_at;

  json to_json() const;
  static RecordedVerdict from_json(const json& j);
};

struct Filter {
  std::string status = "pending";
  std::optional<std::string> type;  // multiple_choice, true_false, math
  std::optional<std::string> bias_flag;
  std::optional<std::string> difficulty;
};

struct Page {
  std::vector<Entry> items;
  std::size_t total = 0;
};

// Item store backed by a dataset snapshot plus an append-only journal of
// verdicts. State is rebuilt by replaying the journal on open.
class Store {
 public:
  // `datasets` are dataset.jsonl / problems.jsonl files; `journal` is created
  // when missing.
  Store(std::vector<std::filesystem::path> datasets, std::filesystem::path journal,
        std::function<std::string()> clock = utc_now_iso);
  // In-memory seed rows, for tests and embedding.
  Store(std::filesystem::path journal, std::vector<json> rows, std::function<std::string()> clock = utc_now_iso);

  Page list(const Filter& filter, std::size_t page, std::size_t page_size) const;
  std::optional<Entry> get(const std::string& id) const;
  RecordedVerdict submit(const VerdictRequest& v);
  // Accepted and edited items, sorted by id, one dataset line each.
  std::string export_lines() const;
  void export_accepted(const std::filesystem::path& out) const;

  // Snapshot of every entry (id, status, version, payload), sorted by id.
  json state() const;
  std::size_t journal_length() const;

 private:
  void load_rows(const std::vector<json>& rows);
  void replay();
  // Applies a verdict without journaling. Caller holds the write lock.
  void apply(const RecordedVerdict& v);

  std::map<std::string, Entry> entries_;
  std::filesystem::path journal_;
  std::function<std::string()> clock_;
  std::size_t journal_length_ = 0;
  mutable std::shared_mutex mu_;
};

// Validates a replacement record for an item of the given kind. Returns the
// offending fields.
std::vector<std::string> validate_payload(Kind kind, const json& payload);

struct ServerOptions {
  std::string token;  // bearer token; empty disables auth
  std::filesystem::path static_dir;
};

// HTTP front end:
//   GET  /healthz
//   GET  /items?status=pending&type=&bias=&difficulty=&page=&page_size=
//   POST /items/{id}/verdict   {decision, edited_item?, reviewer_id, version}
//   GET  /export?status=accepted
class Server {
 public:
  Server(Store& store, ServerOptions options);
  ~Server();

  // Binds and serves on a background thread. Port 0 picks a free port.
  int start(const std::string& host, int port);
  // Blocks until stop() is called from another thread or a signal handler.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

}  // namespace hopqa::review
