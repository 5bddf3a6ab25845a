#include "notesearch/query_engine.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <set>

#include "notesearch/errors.hpp"

namespace notesearch::query {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* field) {
  if (!j.is_array()) throw InvalidArgument(std::string(field) + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw InvalidArgument(std::string(field) + " must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::size_t positive_count(const nlohmann::json& j, const char* field) {
  if (!j.is_number_integer()) throw InvalidArgument(std::string(field) + " must be an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 1) throw InvalidArgument(std::string(field) + " must be at least 1");
  return static_cast<std::size_t>(v);
}

}  // namespace

void SearchRequest::validate() const {
  if (question.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidArgument("question must be nonempty");
  if (notes_to_retrieve == 0) throw InvalidArgument("notes_to_retrieve must be at least 1");
  if (notes_per_patient && *notes_per_patient == 0) throw InvalidArgument("notes_per_patient must be at least 1");
  const std::set<std::string> inc(include_mrns.begin(), include_mrns.end());
  for (const auto& m : exclude_mrns) {
    if (inc.contains(m)) throw InvalidArgument("MRN " + m + " is both included and excluded");
  }
  filter.validate();
}

nlohmann::json to_json(const SearchRequest& r) {
  nlohmann::json j{{"question", r.question},
                   {"filters", index::to_json(r.filter)},
                   {"notes_to_retrieve", r.notes_to_retrieve},
                   {"include_mrns", r.include_mrns},
                   {"exclude_mrns", r.exclude_mrns}};
  j["notes_per_patient"] = r.notes_per_patient ? nlohmann::json(*r.notes_per_patient) : nlohmann::json(nullptr);
  j["workspace_id"] = r.workspace_id ? nlohmann::json(*r.workspace_id) : nlohmann::json(nullptr);
  return j;
}

SearchRequest search_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("request body must be a JSON object");
  SearchRequest r;
  bool has_question = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "question") {
      if (!value.is_string()) throw InvalidArgument("question must be a string");
      r.question = value.get<std::string>();
      has_question = true;
    } else if (key == "filters") {
      r.filter = index::filter_from_json(value);
    } else if (key == "notes_to_retrieve") {
      if (!value.is_number_integer()) throw InvalidArgument("notes_to_retrieve must be an integer");
      const auto k = value.get<std::int64_t>();
      if (k < 1) throw InvalidArgument("notes_to_retrieve must be at least 1");
      r.notes_to_retrieve = static_cast<std::size_t>(k);
    } else if (key == "notes_per_patient") {
      if (!value.is_null()) r.notes_per_patient = positive_count(value, "notes_per_patient");
    } else if (key == "include_mrns") {
      r.include_mrns = string_list(value, "include_mrns");
    } else if (key == "exclude_mrns") {
      r.exclude_mrns = string_list(value, "exclude_mrns");
    } else if (key == "workspace_id") {
      if (value.is_null()) continue;
      if (!value.is_string()) throw InvalidArgument("workspace_id must be a string");
      r.workspace_id = value.get<std::string>();
    } else {
      throw UnknownField(key);
    }
  }
  if (!has_question) throw InvalidArgument("question is required");
  r.validate();
  return r;
}

nlohmann::json to_json(const SearchHit& h) {
  const auto& n = h.note;
  return {
      {"rank", h.rank},
      {"score", h.score},
      {"note_id", n.note_id},
      {"patient", {{"mrn", n.patient.mrn}, {"name", n.patient.name}, {"birth_date", n.patient.birth_date}, {"sex", n.patient.sex}}},
      {"note_category", n.note_category},
      {"encounter_type", n.encounter_type},
      {"department", n.department},
      {"specialty", n.specialty},
      {"author", {{"name", n.author.name}, {"role", n.author.role}}},
      {"filed_time", n.filed_time},
      {"creation_time", n.creation_time},
      {"text", n.text},
      {"highlight",
       {{"chunk_ordinal", h.best_chunk.chunk_ordinal},
        {"char_start", h.best_chunk.char_start},
        {"char_end", h.best_chunk.char_end},
        {"text", h.best_chunk.text}}},
  };
}

nlohmann::json to_json(const SearchResponse& r) {
  nlohmann::json hits = nlohmann::json::array();
  for (const auto& h : r.hits) hits.push_back(to_json(h));
  return {{"hits", std::move(hits)},
          {"result_count", r.hits.size()},
          {"cursor", r.cursor},
          {"exhausted", r.exhausted},
          {"index_generation", r.index_generation},
          {"latency", to_json(r.latency)}};
}

SearchEngine::SearchEngine(std::shared_ptr<const embedding::Embedder> embedder,
                           std::shared_ptr<const index::AnnIndex> index, std::shared_ptr<const store::NoteStore> store,
                           std::shared_ptr<AuditLog> audit, std::shared_ptr<WorkspaceStore> workspaces,
                           EngineConfig config)
    : embedder_(std::move(embedder)),
      index_(std::move(index)),
      store_(std::move(store)),
      audit_(std::move(audit)),
      workspaces_(std::move(workspaces)),
      config_(config) {
  if (!embedder_ || !index_ || !store_ || !audit_) throw InvalidArgument("search engine requires embedder, index, store and audit log");
  if (config_.candidate_multiplier == 0) throw InvalidArgument("candidate multiplier must be positive");
  if (embedder_->dimension() != index_->dimension()) throw InvalidArgument("embedder and index dimensions differ");
  config_.chunking.validate();
}

std::optional<index::FilterSpec> SearchEngine::effective_filter(const SearchRequest& request) const {
  using index::CategoricalField;
  index::FilterSpec f = request.filter;
  auto& patient = f.clause(CategoricalField::kPatientId);

  std::set<std::string> excluded = patient.exclude;
  excluded.insert(request.exclude_mrns.begin(), request.exclude_mrns.end());
  if (request.workspace_id) {
    if (!workspaces_) throw NotFound("no workspace store configured");
    const auto ws = workspaces_->get(*request.workspace_id);
    if (!ws) throw NotFound("unknown workspace: " + *request.workspace_id);
    excluded.insert(ws->excluded().begin(), ws->excluded().end());
  }

  std::set<std::string> included = patient.include;
  if (!request.include_mrns.empty()) {
    const std::set<std::string> req(request.include_mrns.begin(), request.include_mrns.end());
    if (included.empty()) {
      included = req;
    } else {
      std::set<std::string> both;
      std::set_intersection(included.begin(), included.end(), req.begin(), req.end(),
                            std::inserter(both, both.end()));
      if (both.empty()) return std::nullopt;
      included = std::move(both);
    }
  }
  if (!included.empty()) {
    for (const auto& m : excluded) included.erase(m);
    if (included.empty()) return std::nullopt;
    excluded.clear();
  }
  patient.include = std::move(included);
  patient.exclude = std::move(excluded);
  return f;
}

std::vector<SearchEngine::Ranked> SearchEngine::rank_notes(const embedding::Embedding& query,
                                                           const SearchRequest& request,
                                                           const index::FilterSpec& filter,
                                                           const Allowlist& allowlist, std::size_t wanted,
                                                           bool& exhausted) const {
  const std::size_t total = std::max<std::size_t>(index_->size(), 1);
  std::size_t budget = std::min(config_.candidate_multiplier * wanted, total);
  budget = std::max(budget, wanted);
  std::vector<Ranked> out;
  for (;;) {
    const auto neighbors = index_->search(query, budget, filter, config_.search);
    out.clear();
    std::unordered_set<NoteId> seen;
    std::unordered_map<std::string, std::size_t> per_patient;
    for (const auto& nb : neighbors) {
      if (!seen.insert(nb.note_id).second) continue;
      if (request.notes_per_patient) {
        const auto attrs = index_->attributes(nb.chunk_id);
        const std::string mrn = attrs ? attrs->get(index::CategoricalField::kPatientId) : std::string();
        if (per_patient[mrn]++ >= *request.notes_per_patient) continue;
      }
      if (!allowlist.permits(nb.note_id)) continue;
      out.push_back({nb.note_id, nb.chunk_id, nb.score});
      if (out.size() == wanted) break;
    }
    if (out.size() >= wanted) {
      exhausted = false;
      return out;
    }
    if (neighbors.size() < budget || budget >= total) {
      exhausted = true;
      return out;
    }
    budget = std::min(budget * 2, total);
  }
}

std::vector<SearchHit> SearchEngine::hydrate(const std::vector<Ranked>& ranked, std::size_t first_rank) const {
  std::vector<SearchHit> hits;
  hits.reserve(ranked.size());
  const std::size_t cap = store_->batch_cap();
  for (std::size_t begin = 0; begin < ranked.size(); begin += cap) {
    const std::size_t end = std::min(ranked.size(), begin + cap);
    std::vector<NoteId> ids;
    for (std::size_t i = begin; i < end; ++i) ids.push_back(ranked[i].note_id);
    auto fetched = store_->get_notes(ids);
    if (!fetched.missing.empty()) {
      throw StorageError("note store is missing " + std::to_string(fetched.missing.size()) + " indexed note(s)");
    }
    for (std::size_t i = begin; i < end; ++i) {
      SearchHit hit;
      hit.note = std::move(fetched.records.at(ranked[i].note_id));
      hit.score = std::clamp(ranked[i].score, -1.0, 1.0);
      hit.rank = first_rank + i;
      const auto ordinal = chunk_ordinal(ranked[i].best_chunk);
      const auto chunks = chunking::chunk_note(hit.note.note_id, hit.note.text, config_.chunking);
      if (ordinal < chunks.size()) {
        const auto& c = chunks[ordinal];
        hit.best_chunk = {ordinal, c.char_start, c.char_end, c.text};
      } else {
        hit.best_chunk = {ordinal, 0, hit.note.text.size(), hit.note.text};
      }
      hits.push_back(std::move(hit));
    }
  }
  return hits;
}

std::string SearchEngine::remember(CursorState state) {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::scoped_lock lock(cursor_mutex_);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "c%08llx%016llx", static_cast<unsigned long long>(next_cursor_++),
                static_cast<unsigned long long>(rng()));
  std::string id(buf);
  cursors_.emplace(id, std::move(state));
  cursor_order_.push_back(id);
  while (cursor_order_.size() > config_.max_cursors) {
    cursors_.erase(cursor_order_.front());
    cursor_order_.pop_front();
  }
  return id;
}

SearchResponse SearchEngine::run(const SearchRequest& request, const std::optional<embedding::Embedding>& precomputed,
                                 const std::string& user, const Allowlist& allowlist, const std::string& action,
                                 CursorState* resume) {
  const auto t0 = Clock::now();
  AuditRecord audit;
  audit.user_identity = user;
  audit.action = action;
  audit.query = request.question;
  audit.filters = index::to_json(request.filter);
  if (!request.include_mrns.empty()) audit.filters["include_mrns"] = request.include_mrns;
  if (!request.exclude_mrns.empty()) audit.filters["exclude_mrns"] = request.exclude_mrns;
  if (request.workspace_id) audit.filters["workspace_id"] = *request.workspace_id;

  SearchResponse response;
  try {
    request.validate();
    embedding::Embedding query;
    auto t = Clock::now();
    if (resume) {
      query = resume->query;
    } else if (precomputed) {
      query = *precomputed;
    } else {
      query = embedder_->embed_query(request.question);
      response.latency.embed_ms = ms_since(t);
    }

    t = Clock::now();
    const auto generation = index_->generation();
    const std::size_t already = resume ? resume->returned : 0;
    std::vector<Ranked> page;
    bool exhausted = true;
    if (const auto filter = effective_filter(request)) {
      auto ranked = rank_notes(query, request, *filter, allowlist, already + request.notes_to_retrieve, exhausted);
      for (auto& r : ranked) {
        if (resume && resume->seen.contains(r.note_id)) continue;
        page.push_back(r);
      }
      if (page.size() > request.notes_to_retrieve) page.resize(request.notes_to_retrieve);
    }
    response.latency.search_ms = ms_since(t);

    t = Clock::now();
    response.hits = hydrate(page, already + 1);
    response.latency.hydrate_ms = ms_since(t);
    response.exhausted = exhausted;
    response.index_generation = generation;

    CursorState next;
    if (resume) {
      next = std::move(*resume);
    } else {
      next.user = user;
      next.request = request;
      next.query = std::move(query);
      next.generation = generation;
      next.returned = 0;
    }
    for (const auto& h : response.hits) next.seen.insert(h.note.note_id);
    next.returned += response.hits.size();
    response.cursor = remember(std::move(next));

    response.latency.total_ms = ms_since(t0);
    audit.latency = response.latency;
    for (const auto& h : response.hits) audit.returned_note_ids.push_back(h.note.note_id);
    audit.result_count = response.hits.size();
    audit_->append(std::move(audit));
    return response;
  } catch (const std::exception& e) {
    audit.latency = response.latency;
    audit.latency.total_ms = ms_since(t0);
    audit.returned_note_ids.clear();
    audit.result_count = 0;
    audit.error = e.what();
    audit_->append(std::move(audit));
    throw;
  }
}

SearchResponse SearchEngine::execute_search(const SearchRequest& request, const std::string& user,
                                            const Allowlist& allowlist) {
  return run(request, std::nullopt, user, allowlist, "search", nullptr);
}

SearchResponse SearchEngine::execute_search(const SearchRequest& request, const embedding::Embedding& query,
                                            const std::string& user, const Allowlist& allowlist) {
  return run(request, query, user, allowlist, "search", nullptr);
}

SearchResponse SearchEngine::search_more(const std::string& cursor, const std::string& user,
                                         const Allowlist& allowlist) {
  CursorState state;
  {
    std::scoped_lock lock(cursor_mutex_);
    auto it = cursors_.find(cursor);
    if (it == cursors_.end() || it->second.user != user) {
      AuditRecord audit;
      audit.user_identity = user;
      audit.action = "search_more";
      audit.error = "unknown cursor";
      audit_->append(std::move(audit));
      throw NotFound("unknown cursor");
    }
    state = it->second;
  }
  if (state.generation != index_->generation()) {
    AuditRecord audit;
    audit.user_identity = user;
    audit.action = "search_more";
    audit.query = state.request.question;
    audit.filters = index::to_json(state.request.filter);
    audit.error = "stale cursor";
    audit_->append(std::move(audit));
    throw StaleCursorError("index changed since the cursor was issued");
  }
  const SearchRequest request = state.request;
  return run(request, std::nullopt, user, allowlist, "search_more", &state);
}

std::vector<RetrievedChunk> SearchEngine::retrieve_chunks(const std::string& question,
                                                          const index::FilterSpec& filter, std::size_t k) const {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  const auto query = embedder_->embed_query(question);
  const auto neighbors = index_->search(query, k, filter, config_.search);
  std::vector<NoteId> ids;
  for (const auto& nb : neighbors) {
    if (std::find(ids.begin(), ids.end(), nb.note_id) == ids.end()) ids.push_back(nb.note_id);
  }
  std::unordered_map<NoteId, std::vector<chunking::Chunk>> chunks;
  const std::size_t cap = store_->batch_cap();
  for (std::size_t begin = 0; begin < ids.size(); begin += cap) {
    const std::span<const NoteId> batch(ids.data() + begin, std::min(cap, ids.size() - begin));
    auto fetched = store_->get_notes(batch);
    for (auto& [id, note] : fetched.records) chunks[id] = chunking::chunk_note(id, note.text, config_.chunking);
  }
  std::vector<RetrievedChunk> out;
  out.reserve(neighbors.size());
  for (const auto& nb : neighbors) {
    RetrievedChunk rc{nb.chunk_id, nb.note_id, nb.score, {}};
    auto it = chunks.find(nb.note_id);
    const auto ordinal = chunk_ordinal(nb.chunk_id);
    if (it != chunks.end() && ordinal < it->second.size()) rc.text = it->second[ordinal].text;
    out.push_back(std::move(rc));
  }
  return out;
}

}  // namespace notesearch::query
