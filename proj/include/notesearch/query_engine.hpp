#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "notesearch/ann_index.hpp"
#include "notesearch/attributes.hpp"
#include "notesearch/chunker.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/governance.hpp"
#include "notesearch/note_store.hpp"

namespace notesearch::query {

struct SearchRequest {
  std::string question;
  index::FilterSpec filter;
  std::size_t notes_to_retrieve = 20;
  std::optional<std::size_t> notes_per_patient;  // nullopt = unlimited
  std::vector<std::string> include_mrns;
  std::vector<std::string> exclude_mrns;
  std::optional<std::string> workspace_id;

  // Throws InvalidArgument on empty question, k = 0, a zero per-patient cap
  // or overlapping MRN lists.
  void validate() const;
};

nlohmann::json to_json(const SearchRequest& r);
// Throws UnknownField for unrecognized keys (top level or inside "filters").
SearchRequest search_request_from_json(const nlohmann::json& j);

struct Highlight {
  std::size_t chunk_ordinal = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;
};

struct SearchHit {
  store::NoteRecord note;
  Highlight best_chunk;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based across pages
};

struct SearchResponse {
  std::vector<SearchHit> hits;
  std::string cursor;
  StageLatency latency;
  std::uint64_t index_generation = 0;
  bool exhausted = false;  // no further notes match
};

nlohmann::json to_json(const SearchHit& h);
nlohmann::json to_json(const SearchResponse& r);

struct RetrievedChunk {
  ChunkId chunk_id = 0;
  NoteId note_id = 0;
  double score = 0.0;
  std::string text;
};

struct EngineConfig {
  std::size_t candidate_multiplier = 5;
  chunking::ChunkingConfig chunking;
  index::SearchOverrides search;
  std::size_t max_cursors = 4096;
};

// Governed search over an index and note store. Requests are independent
// apart from cursor bookkeeping, the audit appender and cohort workspaces.
class SearchEngine {
 public:
  SearchEngine(std::shared_ptr<const embedding::Embedder> embedder, std::shared_ptr<const index::AnnIndex> index,
               std::shared_ptr<const store::NoteStore> store, std::shared_ptr<AuditLog> audit,
               std::shared_ptr<WorkspaceStore> workspaces = nullptr, EngineConfig config = {});

  SearchResponse execute_search(const SearchRequest& request, const std::string& user, const Allowlist& allowlist);
  // Same pipeline with a caller-supplied query vector; the embed stage is
  // reported as zero.
  SearchResponse execute_search(const SearchRequest& request, const embedding::Embedding& query,
                                const std::string& user, const Allowlist& allowlist);

  // Next page for a cursor returned to the same user. Throws NotFound for an
  // unknown cursor and StaleCursorError if the index changed since.
  SearchResponse search_more(const std::string& cursor, const std::string& user, const Allowlist& allowlist);

  // Top-k chunks with their text, for retrieval-QA evaluation. Not audited.
  std::vector<RetrievedChunk> retrieve_chunks(const std::string& question, const index::FilterSpec& filter,
                                              std::size_t k) const;

  // Request filter combined with MRN scoping and workspace exclusions.
  // Returns nullopt when the scoping admits no patient.
  std::optional<index::FilterSpec> effective_filter(const SearchRequest& request) const;

  const index::AnnIndex& index() const noexcept { return *index_; }
  const store::NoteStore& store() const noexcept { return *store_; }
  const embedding::Embedder& embedder() const noexcept { return *embedder_; }
  AuditLog& audit() noexcept { return *audit_; }
  WorkspaceStore* workspaces() noexcept { return workspaces_.get(); }
  const EngineConfig& config() const noexcept { return config_; }

 private:
  struct Ranked {
    NoteId note_id;
    ChunkId best_chunk;
    double score;
  };
  struct CursorState {
    std::string user;
    SearchRequest request;
    embedding::Embedding query;
    std::uint64_t generation;
    std::size_t returned;
    std::unordered_set<NoteId> seen;
  };

  SearchResponse run(const SearchRequest& request, const std::optional<embedding::Embedding>& precomputed,
                     const std::string& user, const Allowlist& allowlist, const std::string& action,
                     CursorState* resume);
  std::vector<Ranked> rank_notes(const embedding::Embedding& query, const SearchRequest& request,
                                 const index::FilterSpec& filter, const Allowlist& allowlist, std::size_t wanted,
                                 bool& exhausted) const;
  std::vector<SearchHit> hydrate(const std::vector<Ranked>& ranked, std::size_t first_rank) const;
  std::string remember(CursorState state);

  std::shared_ptr<const embedding::Embedder> embedder_;
  std::shared_ptr<const index::AnnIndex> index_;
  std::shared_ptr<const store::NoteStore> store_;
  std::shared_ptr<AuditLog> audit_;
  std::shared_ptr<WorkspaceStore> workspaces_;
  EngineConfig config_;

  std::mutex cursor_mutex_;
  std::unordered_map<std::string, CursorState> cursors_;
  std::deque<std::string> cursor_order_;
  std::uint64_t next_cursor_ = 1;
};

}  // namespace notesearch::query
