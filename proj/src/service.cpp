#include "notesearch/service.hpp"

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <shared_mutex>
#include <thread>

#include "notesearch/errors.hpp"

namespace notesearch::service {

std::optional<std::string> HeaderAuthenticator::authenticate(const HeaderLookup& headers) const {
  auto id = headers(header_);
  if (!id) return std::nullopt;
  const auto b = id->find_first_not_of(" \t");
  if (b == std::string::npos) return std::nullopt;
  const auto e = id->find_last_not_of(" \t");
  std::string user = id->substr(b, e - b + 1);
  if (!users_.empty() && !users_.contains(user)) return std::nullopt;
  return user;
}

namespace {

void reply(httplib::Response& res, int status, nlohmann::json body) {
  body["api_version"] = kApiVersion;
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void fail(httplib::Response& res, int status, const std::string& code, const std::string& message,
          const std::optional<std::string>& field = std::nullopt) {
  nlohmann::json err{{"code", code}, {"message", message}};
  if (field) err["field"] = *field;
  reply(res, status, {{"error", std::move(err)}});
}

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  std::shared_ptr<query::SearchEngine> engine;
  mutable std::shared_mutex engine_mutex;
  std::shared_ptr<query::WorkspaceStore> workspaces;
  query::Allowlist allowlist;
  std::shared_ptr<const Authenticator> auth;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint16_t> port{0};

  std::shared_ptr<query::SearchEngine> current_engine() const {
    std::shared_lock lock(engine_mutex);
    return engine;
  }

  std::optional<std::string> identify(const httplib::Request& req) const {
    return auth->authenticate([&](std::string_view name) -> std::optional<std::string> {
      const std::string key(name);
      if (!req.has_header(key)) return std::nullopt;
      return req.get_header_value(key);
    });
  }

  // Runs a handler that needs an authenticated user, mapping library errors to
  // status codes. Server-side failures carry generic messages only.
  template <typename F>
  void guarded(const httplib::Request& req, httplib::Response& res, F&& body) {
    const auto user = identify(req);
    if (!user) {
      fail(res, 401, "unauthenticated", "missing or rejected identity");
      return;
    }
    try {
      body(*user);
    } catch (const UnknownField& e) {
      fail(res, 400, "unknown_field", e.what(), e.field());
    } catch (const InvalidArgument& e) {
      fail(res, 400, "invalid_request", e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(res, 400, "malformed_json", e.what());
    } catch (const NotFound& e) {
      fail(res, 404, "not_found", e.what());
    } catch (const PermissionDenied&) {
      fail(res, 403, "forbidden", "access denied by allowlist");
    } catch (const StaleCursorError& e) {
      fail(res, 409, "stale_cursor", e.what());
    } catch (const EmbeddingError&) {
      fail(res, 502, "embedding_unavailable", "query embedding failed");
    } catch (const IndexError&) {
      fail(res, 503, "index_unavailable", "vector index unavailable");
    } catch (const StorageError&) {
      fail(res, 503, "store_unavailable", "note store unavailable");
    } catch (const std::exception&) {
      fail(res, 500, "internal", "internal error");
    }
  }

  std::shared_ptr<query::SearchEngine> require_engine() const {
    auto e = current_engine();
    if (!e) throw IndexError("no index loaded");
    return e;
  }

  query::WorkspaceStore& require_workspaces() const {
    if (!workspaces) throw NotFound("cohort workspaces are not configured");
    return *workspaces;
  }

  void routes() {
    server.Post("/search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& user) {
        auto engine = require_engine();
        query::SearchRequest request;
        try {
          request = query::search_request_from_json(nlohmann::json::parse(req.body));
        } catch (const std::exception& e) {
          query::AuditRecord audit;
          audit.user_identity = user;
          audit.action = "search";
          audit.error = std::string("rejected request: ") + e.what();
          engine->audit().append(std::move(audit));
          throw;
        }
        auto response = engine->execute_search(request, user, allowlist);
        reply(res, 200, query::to_json(response));
      });
    });

    server.Post("/search/more", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& user) {
        auto engine = require_engine();
        const auto body = nlohmann::json::parse(req.body);
        for (const auto& [key, value] : body.items()) {
          if (key != "cursor") throw UnknownField(key);
        }
        if (!body.contains("cursor") || !body["cursor"].is_string()) throw InvalidArgument("cursor is required");
        auto response = engine->search_more(body["cursor"].get<std::string>(), user, allowlist);
        reply(res, 200, query::to_json(response));
      });
    });

    server.Get(R"(/notes/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& user) {
        auto engine = require_engine();
        const std::string raw = req.matches[1];
        NoteId id = 0;
        auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), id);
        if (ec != std::errc() || ptr != raw.data() + raw.size()) throw InvalidArgument("note id must be an unsigned integer");
        query::AuditRecord audit;
        audit.user_identity = user;
        audit.action = "get_note";
        if (!allowlist.permits(id)) {
          audit.error = "permission denied";
          engine->audit().append(std::move(audit));
          throw PermissionDenied("note not allowlisted");
        }
        auto note = engine->store().get_note(id);
        if (!note) {
          audit.error = "not found";
          engine->audit().append(std::move(audit));
          throw NotFound("note not found");
        }
        audit.returned_note_ids = {id};
        audit.result_count = 1;
        engine->audit().append(std::move(audit));
        reply(res, 200, {{"note", nlohmann::json(*note)}});
      });
    });

    server.Get("/vocab", [this](const httplib::Request&, httplib::Response& res) {
      auto engine = current_engine();
      if (!engine) {
        fail(res, 503, "index_unavailable", "vector index unavailable");
        return;
      }
      reply(res, 200, {{"fields", index::to_json(engine->index().vocabulary())}});
    });

    server.Put(R"(/cohort/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        auto& ws = require_workspaces();
        const std::string id = req.matches[1];
        const bool existed = ws.get(id).has_value();
        reply(res, existed ? 200 : 201, {{"workspace", query::to_json(ws.create(id))}});
      });
    });

    server.Get(R"(/cohort/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        const std::string id = req.matches[1];
        const auto w = require_workspaces().get(id);
        if (!w) throw NotFound("unknown workspace: " + id);
        reply(res, 200, {{"workspace", query::to_json(*w)}});
      });
    });

    server.Get(R"(/cohort/([^/]+)/export)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        const std::string id = req.matches[1];
        const auto w = require_workspaces().get(id);
        if (!w) throw NotFound("unknown workspace: " + id);
        reply(res, 200, {{"workspace_id", id}, {"included_mrns", w->export_included()}});
      });
    });

    server.Post(R"(/cohort/([^/]+)/(include|exclude|remove))",
                [this](const httplib::Request& req, httplib::Response& res) {
                  guarded(req, res, [&](const std::string&) {
                    const std::string id = req.matches[1];
                    const auto action = query::parse_cohort_action(std::string(req.matches[2]));
                    const auto body = nlohmann::json::parse(req.body);
                    for (const auto& [key, value] : body.items()) {
                      if (key != "mrn") throw UnknownField(key);
                    }
                    if (!body.contains("mrn") || !body["mrn"].is_string()) throw InvalidArgument("mrn is required");
                    const auto w = require_workspaces().update(id, action, body["mrn"].get<std::string>());
                    reply(res, 200, {{"workspace", query::to_json(w)}});
                  });
                });

    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      auto engine = current_engine();
      nlohmann::json body{{"status", "ok"}, {"index_loaded", engine != nullptr}, {"project_id", options.project_id}};
      if (engine) {
        body["index_size"] = engine->index().size();
        body["index_generation"] = engine->index().generation();
      }
      reply(res, 200, std::move(body));
    });
  }
};

Service::Service(ServiceOptions options, std::shared_ptr<query::SearchEngine> engine,
                 std::shared_ptr<query::WorkspaceStore> workspaces, query::Allowlist allowlist,
                 std::shared_ptr<const Authenticator> auth)
    : impl_(std::make_unique<Impl>()) {
  if (!auth) throw InvalidArgument("service requires an authenticator");
  if (options.threads == 0) throw InvalidArgument("service needs at least one worker thread");
  impl_->options = std::move(options);
  impl_->engine = std::move(engine);
  impl_->workspaces = std::move(workspaces);
  impl_->allowlist = std::move(allowlist);
  impl_->auth = std::move(auth);
  const auto threads = impl_->options.threads;
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->routes();
}

Service::~Service() { stop(); }

std::uint16_t Service::start() {
  if (impl_->thread.joinable()) return impl_->port;
  int port = 0;
  if (impl_->options.port == 0) {
    port = impl_->server.bind_to_any_port(impl_->options.host);
  } else {
    port = impl_->server.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
  }
  if (port <= 0) throw StorageError("cannot bind " + impl_->options.host + ":" + std::to_string(impl_->options.port));
  impl_->port = static_cast<std::uint16_t>(port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void Service::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

std::uint16_t Service::port() const noexcept { return impl_->port; }

void Service::set_engine(std::shared_ptr<query::SearchEngine> engine) {
  std::unique_lock lock(impl_->engine_mutex);
  impl_->engine = std::move(engine);
}

}  // namespace notesearch::service
