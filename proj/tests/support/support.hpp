#pragma once

#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <thread>

#include "hopqa/util.hpp"

namespace hopqa::testing {

namespace fs = std::filesystem;

inline fs::path fixtures_dir() { return fs::path(HOPQA_FIXTURES_DIR); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "hopqa") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// MediaWiki-style fixture server. `pages` is an array of
// {topic, title, url, text}; a search for a topic lists that topic's pages.
class WikiServer {
 public:
  explicit WikiServer(json pages) : pages_(std::move(pages)) {
    server_.Get("/w/api.php", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      json body;
      if (req.get_param_value("list") == "search") {
        json hits = json::array();
        const auto topic = req.get_param_value("srsearch");
        const auto limit = std::stoul(req.get_param_value("srlimit"));
        for (const auto& p : pages_) {
          if (p["topic"] == topic && hits.size() < limit) hits.push_back({{"title", p["title"]}});
        }
        body = {{"query", {{"search", hits}}}};
      } else {
        json pages = json::object();
        const auto title = req.get_param_value("titles");
        for (std::size_t i = 0; i < pages_.size(); ++i) {
          const auto& p = pages_[i];
          if (p["title"] == title) {
            pages[std::to_string(i + 1)] = {{"title", p["title"]}, {"extract", p["text"]}, {"fullurl", p["url"]}};
          }
        }
        body = {{"query", {{"pages", pages}}}};
      }
      res.set_content(body.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~WikiServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/w/api.php"; }
  int hits() const { return hits_.load(); }

 private:
  json pages_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> hits_{0};
};

// Writes the e2e config into `dir` with the mock script path made absolute.
inline fs::path write_e2e_config(const fs::path& dir) {
  auto text = read_file(fixtures_dir() / "e2e" / "hopqa.ini");
  const std::string key = "script = mock.json";
  text.replace(text.find(key), key.size(), "script = " + (fixtures_dir() / "e2e" / "mock.json").string());
  const auto path = dir / "hopqa.ini";
  write_file_atomic(path, text);
  return path;
}

}  // namespace hopqa::testing
