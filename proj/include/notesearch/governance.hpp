#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "notesearch/types.hpp"

namespace notesearch::query {

// Fail-closed set of note ids a deployment may display. Enforced with an empty
// approved set denies everything.
struct Allowlist {
  enum class Mode { kDisabled, kEnforced };

  Mode mode = Mode::kDisabled;
  std::unordered_set<NoteId> approved;

  static Allowlist disabled() { return {}; }
  static Allowlist enforced(std::unordered_set<NoteId> ids) { return {Mode::kEnforced, std::move(ids)}; }
  // One decimal note id per line; blank lines and '#' comments ignored.
  static Allowlist load(const std::filesystem::path& path);

  bool permits(NoteId id) const { return mode == Mode::kDisabled || approved.contains(id); }
};

// Order-preserving intersection under enforcement; identity when disabled.
std::vector<NoteId> apply_allowlist(std::span<const NoteId> ids, const Allowlist& allowlist);

struct StageLatency {
  double embed_ms = 0.0;
  double search_ms = 0.0;
  double hydrate_ms = 0.0;
  double total_ms = 0.0;
};

nlohmann::json to_json(const StageLatency& l);

struct AuditRecord {
  static constexpr int kSchemaVersion = 1;

  std::string timestamp;  // ISO-8601 UTC, filled by AuditLog::append if empty
  std::string user_identity;
  std::string action;  // search | search_more | get_note
  std::string query;
  nlohmann::json filters = nlohmann::json::object();
  std::vector<NoteId> returned_note_ids;
  std::size_t result_count = 0;
  StageLatency latency;
  std::optional<std::string> error;
};

nlohmann::json to_json(const AuditRecord& r);
AuditRecord audit_record_from_json(const nlohmann::json& j);

// Append-only, line-delimited audit trail. Appends are serialized and flushed
// before append() returns. Without a path records are kept in memory.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(const std::filesystem::path& path);

  void append(AuditRecord record);
  std::size_t count() const;
  // In-memory logs only.
  std::vector<AuditRecord> records() const;

  static std::vector<AuditRecord> read(const std::filesystem::path& path);

 private:
  mutable std::mutex mutex_;
  std::optional<std::ofstream> out_;
  std::vector<AuditRecord> memory_;
  std::size_t count_ = 0;
};

std::string utc_timestamp();

enum class CohortAction { kInclude, kExclude, kRemove };
CohortAction parse_cohort_action(std::string_view s);

// Patient cohort curated from search results. Included and excluded MRNs are
// disjoint ordered sets; the latest action on an MRN wins.
class CohortWorkspace {
 public:
  CohortWorkspace() = default;
  explicit CohortWorkspace(std::string id) : id_(std::move(id)) {}

  void apply(CohortAction action, const std::string& mrn);

  const std::string& id() const noexcept { return id_; }
  const std::vector<std::string>& included() const noexcept { return included_; }
  const std::vector<std::string>& excluded() const noexcept { return excluded_; }
  std::size_t total() const noexcept { return included_.size() + excluded_.size(); }
  // Included MRNs in insertion order.
  std::vector<std::string> export_included() const { return included_; }

  bool operator==(const CohortWorkspace&) const = default;

 private:
  std::string id_;
  std::vector<std::string> included_;
  std::vector<std::string> excluded_;
};

nlohmann::json to_json(const CohortWorkspace& w);
CohortWorkspace workspace_from_json(const nlohmann::json& j);

// Workspaces keyed by id, optionally persisted one JSON file per workspace.
// Updates are atomic read-modify-write.
class WorkspaceStore {
 public:
  WorkspaceStore() = default;
  explicit WorkspaceStore(const std::filesystem::path& dir);

  // Returns the existing workspace when the id is taken.
  CohortWorkspace create(const std::string& id);
  std::optional<CohortWorkspace> get(const std::string& id) const;
  // Throws NotFound for unknown workspaces.
  CohortWorkspace update(const std::string& id, CohortAction action, const std::string& mrn);
  std::vector<std::string> ids() const;

  // Ids are 1-64 characters of [A-Za-z0-9_-].
  static bool valid_id(std::string_view id);

 private:
  void persist(const CohortWorkspace& w) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, CohortWorkspace> workspaces_;
};

}  // namespace notesearch::query
