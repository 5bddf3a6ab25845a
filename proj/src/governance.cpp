#include "notesearch/governance.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>

#include "notesearch/errors.hpp"

namespace notesearch::query {

Allowlist Allowlist::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open allowlist " + path.string());
  Allowlist a{Mode::kEnforced, {}};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    NoteId id = 0;
    const char* first = line.data() + b;
    const char* last = line.data() + e + 1;
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || ptr != last) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": not a note id");
    }
    a.approved.insert(id);
  }
  return a;
}

std::vector<NoteId> apply_allowlist(std::span<const NoteId> ids, const Allowlist& allowlist) {
  std::vector<NoteId> out;
  out.reserve(ids.size());
  for (auto id : ids) {
    if (allowlist.permits(id)) out.push_back(id);
  }
  return out;
}

nlohmann::json to_json(const StageLatency& l) {
  return {{"embed_ms", l.embed_ms}, {"search_ms", l.search_ms}, {"hydrate_ms", l.hydrate_ms}, {"total_ms", l.total_ms}};
}

nlohmann::json to_json(const AuditRecord& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = AuditRecord::kSchemaVersion;
  j["timestamp"] = r.timestamp;
  j["user_identity"] = r.user_identity;
  j["action"] = r.action;
  j["query"] = r.query;
  j["filters"] = r.filters;
  j["returned_note_ids"] = r.returned_note_ids;
  j["result_count"] = r.result_count;
  j["latency"] = to_json(r.latency);
  j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
  return nlohmann::json(j);
}

AuditRecord audit_record_from_json(const nlohmann::json& j) {
  if (j.at("schema_version").get<int>() != AuditRecord::kSchemaVersion) {
    throw InvalidArgument("unsupported audit schema version");
  }
  AuditRecord r;
  r.timestamp = j.at("timestamp").get<std::string>();
  r.user_identity = j.at("user_identity").get<std::string>();
  r.action = j.at("action").get<std::string>();
  r.query = j.at("query").get<std::string>();
  r.filters = j.at("filters");
  r.returned_note_ids = j.at("returned_note_ids").get<std::vector<NoteId>>();
  r.result_count = j.at("result_count").get<std::size_t>();
  const auto& l = j.at("latency");
  r.latency = {l.at("embed_ms").get<double>(), l.at("search_ms").get<double>(), l.at("hydrate_ms").get<double>(),
               l.at("total_ms").get<double>()};
  if (!j.at("error").is_null()) r.error = j.at("error").get<std::string>();
  return r;
}

std::string utc_timestamp() {
  const auto now = std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now());
  const auto days = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::year_month_day ymd{days};
  const std::chrono::hh_mm_ss hms{now - days};
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
  return buf;
}

AuditLog::AuditLog(const std::filesystem::path& path) {
  out_.emplace(path, std::ios::app);
  if (!*out_) throw StorageError("cannot open audit log " + path.string());
}

void AuditLog::append(AuditRecord record) {
  if (record.timestamp.empty()) record.timestamp = utc_timestamp();
  std::scoped_lock lock(mutex_);
  if (out_) {
    *out_ << to_json(record).dump() << '\n';
    out_->flush();
    if (!*out_) throw StorageError("audit log write failed");
  } else {
    memory_.push_back(std::move(record));
  }
  ++count_;
}

std::size_t AuditLog::count() const {
  std::scoped_lock lock(mutex_);
  return count_;
}

std::vector<AuditRecord> AuditLog::records() const {
  std::scoped_lock lock(mutex_);
  return memory_;
}

std::vector<AuditRecord> AuditLog::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open audit log " + path.string());
  std::vector<AuditRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(audit_record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

CohortAction parse_cohort_action(std::string_view s) {
  if (s == "include") return CohortAction::kInclude;
  if (s == "exclude") return CohortAction::kExclude;
  if (s == "remove") return CohortAction::kRemove;
  throw InvalidArgument("unknown cohort action: " + std::string(s));
}

void CohortWorkspace::apply(CohortAction action, const std::string& mrn) {
  if (mrn.empty()) throw InvalidArgument("MRN must be nonempty");
  auto drop = [&](std::vector<std::string>& v) { v.erase(std::remove(v.begin(), v.end(), mrn), v.end()); };
  auto add = [&](std::vector<std::string>& v) {
    if (std::find(v.begin(), v.end(), mrn) == v.end()) v.push_back(mrn);
  };
  switch (action) {
    case CohortAction::kInclude:
      drop(excluded_);
      add(included_);
      break;
    case CohortAction::kExclude:
      drop(included_);
      add(excluded_);
      break;
    case CohortAction::kRemove:
      drop(included_);
      drop(excluded_);
      break;
  }
}

nlohmann::json to_json(const CohortWorkspace& w) {
  return {{"workspace_id", w.id()}, {"included_mrns", w.included()}, {"excluded_mrns", w.excluded()}, {"total", w.total()}};
}

CohortWorkspace workspace_from_json(const nlohmann::json& j) {
  CohortWorkspace w(j.at("workspace_id").get<std::string>());
  for (const auto& m : j.at("included_mrns")) w.apply(CohortAction::kInclude, m.get<std::string>());
  for (const auto& m : j.at("excluded_mrns")) w.apply(CohortAction::kExclude, m.get<std::string>());
  return w;
}

WorkspaceStore::WorkspaceStore(const std::filesystem::path& dir) : dir_(dir) {
  std::filesystem::create_directories(dir);
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    auto w = workspace_from_json(nlohmann::json::parse(in));
    workspaces_.emplace(w.id(), std::move(w));
  }
}

bool WorkspaceStore::valid_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

void WorkspaceStore::persist(const CohortWorkspace& w) const {
  if (!dir_) return;
  const auto path = *dir_ / (w.id() + ".json");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << to_json(w).dump(2) << '\n';
    if (!out) throw StorageError("cannot write workspace " + w.id());
  }
  std::filesystem::rename(tmp, path);
}

CohortWorkspace WorkspaceStore::create(const std::string& id) {
  if (!valid_id(id)) throw InvalidArgument("invalid workspace id");
  std::scoped_lock lock(mutex_);
  auto [it, inserted] = workspaces_.try_emplace(id, CohortWorkspace(id));
  if (inserted) persist(it->second);
  return it->second;
}

std::optional<CohortWorkspace> WorkspaceStore::get(const std::string& id) const {
  std::scoped_lock lock(mutex_);
  auto it = workspaces_.find(id);
  if (it == workspaces_.end()) return std::nullopt;
  return it->second;
}

CohortWorkspace WorkspaceStore::update(const std::string& id, CohortAction action, const std::string& mrn) {
  std::scoped_lock lock(mutex_);
  auto it = workspaces_.find(id);
  if (it == workspaces_.end()) throw NotFound("unknown workspace: " + id);
  auto updated = it->second;
  updated.apply(action, mrn);
  persist(updated);
  it->second = updated;
  return updated;
}

std::vector<std::string> WorkspaceStore::ids() const {
  std::scoped_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, w] : workspaces_) out.push_back(id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace notesearch::query
