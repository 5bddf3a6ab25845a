#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "notesearch/ann_index.hpp"
#include "notesearch/chunker.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/governance.hpp"
#include "notesearch/note_store.hpp"
#include "notesearch/query_engine.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using namespace notesearch;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline store::NoteRecord make_note(NoteId id, const std::string& mrn, const std::string& text,
                                   const std::string& filed = "2021-05-10T08:00:00Z") {
  store::NoteRecord r;
  r.note_id = id;
  r.text = text;
  r.patient = {mrn, "Patient " + mrn, "2012-01-15", "M"};
  r.note_category = "Progress Note";
  r.encounter_type = "Office Visit";
  r.department = "Pediatric Oncology";
  r.specialty = "Oncology";
  r.author = {"Dr. Test", "Physician"};
  r.filed_time = filed;
  r.creation_time = filed;
  return r;
}

struct Deployment {
  std::shared_ptr<embedding::Embedder> embedder;
  std::shared_ptr<index::AnnIndex> index;
  std::shared_ptr<store::NoteStore> store;
  std::shared_ptr<query::AuditLog> audit;
  std::shared_ptr<query::WorkspaceStore> workspaces;
  std::shared_ptr<query::SearchEngine> engine;
  std::vector<index::VectorEntry> entries;
};

inline std::shared_ptr<embedding::Embedder> reference_embedder(std::size_t dim) {
  embedding::EmbedderConfig cfg;
  cfg.dimension = dim;
  return std::make_shared<embedding::Embedder>(std::make_shared<embedding::ReferenceProvider>(dim), cfg);
}

inline std::vector<index::VectorEntry> entries_for(const embedding::Embedder& embedder,
                                                   const std::vector<store::NoteRecord>& notes,
                                                   const chunking::ChunkingConfig& chunking) {
  std::vector<index::VectorEntry> out;
  for (const auto& n : notes) {
    const auto chunks = chunking::chunk_note(n.note_id, n.text, chunking);
    std::vector<std::string> texts;
    for (const auto& c : chunks) texts.push_back(c.text);
    const auto vecs = embedder.embed_documents(texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      out.push_back({make_chunk_id(n.note_id, i), n.note_id, vecs[i], store::attribute_set(n)});
    }
  }
  return out;
}

// Exhaustive-search deployment: every partition probed, every candidate
// rescored.
inline Deployment build_deployment(const std::vector<store::NoteRecord>& notes, std::size_t dim = 64,
                                   std::uint32_t partitions = 4, chunking::ChunkingConfig chunking = {}) {
  Deployment d;
  d.embedder = reference_embedder(dim);
  index::IndexConfig cfg;
  cfg.num_partitions = partitions;
  cfg.nprobe = partitions;
  cfg.spill = partitions > 1 ? 2 : 1;
  cfg.rescore_budget = 1u << 30;
  d.index = std::make_shared<index::AnnIndex>(dim, cfg);
  d.store = std::make_shared<store::NoteStore>(std::make_unique<store::MemoryKvBackend>());
  d.audit = std::make_shared<query::AuditLog>();
  d.workspaces = std::make_shared<query::WorkspaceStore>();
  d.entries = entries_for(*d.embedder, notes, chunking);
  std::vector<embedding::Embedding> sample;
  for (const auto& e : d.entries) sample.push_back(e.vector);
  if (sample.size() >= partitions) {
    d.index->train(sample, 1);
  } else {
    std::vector<embedding::Embedding> cents;
    for (std::uint32_t p = 0; p < partitions; ++p) {
      std::vector<float> v(dim, 0.0f);
      v[p % dim] = 1.0f;
      cents.push_back(embedding::l2_normalize(v));
    }
    d.index->set_centroids(cents);
  }
  if (!notes.empty()) {
    d.store->put_notes(notes);
    d.index->insert(d.entries);
  }
  query::EngineConfig ec;
  ec.chunking = chunking;
  d.engine = std::make_shared<query::SearchEngine>(d.embedder, d.index, d.store, d.audit, d.workspaces, ec);
  return d;
}

}  // namespace fixtures
