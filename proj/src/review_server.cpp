#include <httplib.h>
#include <spdlog/spdlog.h>

#include "hopqa/review.hpp"

namespace hopqa::review {

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message,
                const std::vector<std::string>& fields = {}) {
  json body = {{"error", code}, {"message", message}};
  if (!fields.empty()) body["fields"] = fields;
  send_json(res, status, body);
}

std::optional<std::string> param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  auto v = req.get_param_value(name);
  if (v.empty()) return std::nullopt;
  return v;
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
  auto v = param(req, name);
  if (!v) return fallback;
  std::size_t pos = 0;
  const auto n = std::stoull(*v, &pos);
  if (pos != v->size()) throw std::invalid_argument(name);
  return n;
}

json entry_json(const Entry& e) {
  return {{"item", e.payload},
          {"version", e.version},
          {"status", e.status},
          {"kind", e.kind == Kind::math ? "math" : "qa"}};
}

}  // namespace

struct Server::Impl {
  Store& store;
  ServerOptions options;
  httplib::Server http;

  Impl(Store& s, ServerOptions o) : store(s), options(std::move(o)) {}

  bool authorized(const httplib::Request& req) const {
    if (options.token.empty()) return true;
    return req.get_header_value("Authorization") == "Bearer " + options.token;
  }

  void routes() {
    http.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      const bool api = req.path.rfind("/items", 0) == 0 || req.path.rfind("/export", 0) == 0;
      if (api && !authorized(req)) {
        send_error(res, 401, "unauthorized", "missing or invalid bearer token");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });

    http.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });

    http.Get("/items", [this](const httplib::Request& req, httplib::Response& res) {
      Filter f;
      f.status = param(req, "status").value_or("pending");
      f.type = param(req, "type");
      f.bias_flag = param(req, "bias");
      f.difficulty = param(req, "difficulty");
      std::size_t page = 0, page_size = 50;
      try {
        page = size_param(req, "page", 0);
        page_size = size_param(req, "page_size", 50);
      } catch (const std::exception&) {
        send_error(res, 400, "bad_request", "page and page_size must be non-negative integers");
        return;
      }
      if (page_size < 1 || page_size > 200) {
        send_error(res, 400, "bad_request", "page_size must be in [1, 200]");
        return;
      }
      auto result = store.list(f, page, page_size);
      json items = json::array();
      for (const auto& e : result.items) items.push_back(entry_json(e));
      send_json(res, 200, {{"items", items}, {"total", result.total}, {"page", page}, {"page_size", page_size}});
    });

    http.Get(R"(/items/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto e = store.get(req.matches[1]);
      if (!e) {
        send_error(res, 404, "not_found", "unknown item " + req.matches[1].str());
        return;
      }
      send_json(res, 200, entry_json(*e));
    });

    http.Post(R"(/items/([^/]+)/verdict)", [this](const httplib::Request& req, httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        send_error(res, 400, "bad_request", "body is not JSON");
        return;
      }
      std::vector<std::string> bad;
      if (!body.is_object()) bad.push_back("body");
      VerdictRequest v;
      v.item_id = req.matches[1];
      if (body.is_object()) {
        if (body.contains("decision") && body["decision"].is_string()) {
          v.decision = body["decision"];
        } else {
          bad.push_back("decision");
        }
        if (body.contains("reviewer_id") && body["reviewer_id"].is_string()) {
          v.reviewer_id = body["reviewer_id"];
        } else {
          bad.push_back("reviewer_id");
        }
        if (body.contains("version") && body["version"].is_number_unsigned()) {
          v.version = body["version"].get<std::uint64_t>();
        } else {
          bad.push_back("version");
        }
        if (body.contains("edited_item") && !body["edited_item"].is_null()) v.edited_item = body["edited_item"];
      }
      if (!store.get(v.item_id)) {
        send_error(res, 404, "not_found", "unknown item " + v.item_id);
        return;
      }
      if (!bad.empty()) {
        send_error(res, 422, "validation", "invalid verdict", bad);
        return;
      }
      try {
        auto recorded = store.submit(v);
        send_json(res, 200, recorded.to_json());
      } catch (const ConflictError& e) {
        send_json(res, 409, {{"error", "conflict"}, {"message", e.what()}, {"current_version", e.current_version()}});
      } catch (const NotFoundError& e) {
        send_error(res, 404, "not_found", e.what());
      } catch (const ValidationError& e) {
        send_error(res, 422, "validation", e.what(), e.fields());
      }
    });

    http.Get("/export", [this](const httplib::Request& req, httplib::Response& res) {
      const auto status = param(req, "status").value_or("accepted");
      if (status != "accepted") {
        send_error(res, 400, "bad_request", "only status=accepted can be exported");
        return;
      }
      res.status = 200;
      res.set_content(store.export_lines(), "application/x-ndjson");
    });

    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      spdlog::error("review server: {}", what);
      send_error(res, 500, "internal", what);
    });

    if (!options.static_dir.empty() && !http.set_mount_point("/", options.static_dir.string())) {
      throw Error("static directory " + options.static_dir.string() + " does not exist");
    }
  }
};

Server::Server(Store& store, ServerOptions options) : impl_(std::make_unique<Impl>(store, std::move(options))) {
  impl_->routes();
}

Server::~Server() { stop(); }

int Server::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->http.bind_to_any_port(host);
  } else if (!impl_->http.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return bound;
}

void Server::listen(const std::string& host, int port) {
  if (!impl_->http.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  spdlog::info("review service listening on {}:{}", host, port);
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (impl_) impl_->http.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace hopqa::review
