#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "notesearch/governance.hpp"
#include "notesearch/query_engine.hpp"

namespace notesearch::service {

inline constexpr int kApiVersion = 1;

// Looks up a request header by name (case-insensitive).
using HeaderLookup = std::function<std::optional<std::string>(std::string_view name)>;

class Authenticator {
 public:
  virtual ~Authenticator() = default;
  // Returns the caller's identity, or nullopt to reject with 401.
  virtual std::optional<std::string> authenticate(const HeaderLookup& headers) const = 0;
};

// Trusts an identity header set by a fronting proxy. With a nonempty user set,
// only those identities are accepted.
class HeaderAuthenticator final : public Authenticator {
 public:
  static constexpr const char* kDefaultHeader = "X-User-Identity";

  explicit HeaderAuthenticator(std::string header = kDefaultHeader, std::set<std::string> users = {})
      : header_(std::move(header)), users_(std::move(users)) {}
  std::optional<std::string> authenticate(const HeaderLookup& headers) const override;

 private:
  std::string header_;
  std::set<std::string> users_;
};

struct ServiceOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 = pick a free port
  std::size_t threads = 8;
  std::string project_id;
};

// HTTP front end. Endpoints (JSON, "api_version": 1):
//   POST /search, POST /search/more, GET /notes/{id}, GET /vocab,
//   PUT /cohort/{ws}, GET /cohort/{ws}, GET /cohort/{ws}/export,
//   POST /cohort/{ws}/{include|exclude|remove}, GET /health
// See docs/wire_format.md.
class Service {
 public:
  Service(ServiceOptions options, std::shared_ptr<query::SearchEngine> engine,
          std::shared_ptr<query::WorkspaceStore> workspaces, query::Allowlist allowlist,
          std::shared_ptr<const Authenticator> auth = std::make_shared<HeaderAuthenticator>());
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  std::uint16_t start();
  // Stops accepting, drains in-flight requests and joins.
  void stop();
  std::uint16_t port() const noexcept;

  // Replaces the engine; nullptr makes search endpoints answer 503.
  void set_engine(std::shared_ptr<query::SearchEngine> engine);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace notesearch::service
