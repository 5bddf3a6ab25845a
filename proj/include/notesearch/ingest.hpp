#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "notesearch/ann_index.hpp"
#include "notesearch/chunker.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/note_store.hpp"

namespace notesearch::ingest {

// ---- synthetic corpus -------------------------------------------------------

struct SyntheticCorpusSpec {
  std::uint64_t seed = 1;
  std::size_t num_patients = 100;
  std::size_t min_notes_per_patient = 2;
  std::size_t max_notes_per_patient = 6;
  // Fraction of notes padded past one chunk window.
  double long_note_fraction = 0.25;
  std::string start_date = "2018-01-01";
  std::string end_date = "2024-12-31";
  NoteId first_note_id = 1000;

  std::vector<std::string> specialties = {"Oncology", "Pediatrics", "Neurology", "Orthopedics", "Cardiology"};
  std::vector<std::string> note_categories = {"Progress Note", "Consult Note", "Discharge Summary", "H&P",
                                              "Telephone Encounter"};
  std::vector<std::string> encounter_types = {"Office Visit", "Hospital Encounter", "Telemedicine",
                                              "Emergency Department"};
  std::vector<std::string> departments = {"Pediatric Oncology", "General Pediatrics", "Neurology Clinic",
                                          "Orthopedic Surgery", "Emergency Medicine"};
  std::vector<std::string> author_roles = {"Physician", "Nurse Practitioner", "Resident", "Registered Nurse",
                                           "Physician Assistant"};

  void validate() const;
};

// A fact planted verbatim into one or more notes of a patient.
struct TruthFact {
  std::string mrn;
  std::string kind;  // condition | onset_age | injury
  std::string value;
  std::vector<NoteId> note_ids;
  bool operator==(const TruthFact&) const = default;
};

nlohmann::json to_json(const TruthFact& f);
TruthFact truth_fact_from_json(const nlohmann::json& j);

// Candidate values per fact kind. Within a kind no value is a substring of
// another, and no value occurs in template text.
const std::vector<std::string>& fact_values(std::string_view kind);
const std::vector<std::string>& fact_kinds();

struct SyntheticCorpus {
  std::vector<store::NoteRecord> notes;
  std::vector<TruthFact> facts;
};

SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec);

// Writes notes.jsonl and truth.jsonl into dir.
void write_corpus(const std::filesystem::path& dir, const SyntheticCorpus& corpus);
std::vector<TruthFact> read_truth_jsonl(const std::filesystem::path& path);

// ---- partitioned pipeline ---------------------------------------------------

// "YYYY-MM" of the note's filed_time. Throws InvalidArgument if missing.
std::string partition_key(const store::NoteRecord& note);
std::map<std::string, std::vector<store::NoteRecord>> partition_notes(std::span<const store::NoteRecord> notes);

enum class PartitionStatus { kPending = 0, kEmbedded = 1, kIndexed = 2, kFailed = 3 };
const char* to_string(PartitionStatus s) noexcept;
PartitionStatus parse_partition_status(std::string_view s);

struct PartitionManifest {
  std::string partition_key;
  std::size_t note_count = 0;
  std::size_t excluded_count = 0;
  std::size_t chunk_count = 0;
  PartitionStatus status = PartitionStatus::kPending;
  PartitionStatus last_completed = PartitionStatus::kPending;
  std::string error;
  std::uint32_t notes_crc = 0;
  std::uint32_t chunks_crc = 0;
  std::uint32_t embeddings_crc = 0;

  bool operator==(const PartitionManifest&) const = default;
};

nlohmann::json to_json(const PartitionManifest& m);
PartitionManifest manifest_from_json(const nlohmann::json& j);

struct PipelineConfig {
  std::filesystem::path work_dir;
  chunking::ChunkingConfig chunking;
  std::size_t embed_batch = 64;
};

struct UpdateReport {
  std::size_t notes_added = 0;
  std::size_t chunks_added = 0;
  std::size_t excluded = 0;
  std::vector<NoteId> skipped_duplicates;
};

nlohmann::json to_json(const UpdateReport& r);

// Chunk -> embed -> store -> index, one year-month partition at a time. Work
// products live under work_dir: manifests/<key>.json, chunks/<key>.jsonl and
// embeddings/<key>.bin. Re-running a partition resumes after the last
// completed stage and never inserts a chunk twice.
class Pipeline {
 public:
  // Called after each completed stage ("chunked", "embedded", "indexed").
  using StageHook = std::function<void(std::string_view stage, const std::string& partition)>;
  // Returning true drops the note before chunking.
  using ExclusionPredicate = std::function<bool(const store::NoteRecord&)>;

  Pipeline(std::shared_ptr<const embedding::Embedder> embedder, std::shared_ptr<index::AnnIndex> index,
           std::shared_ptr<store::NoteStore> store, PipelineConfig config);

  void set_stage_hook(StageHook hook) { hook_ = std::move(hook); }
  void set_exclusion(ExclusionPredicate predicate) { exclude_ = std::move(predicate); }

  PartitionManifest run_partition(const std::string& key, std::span<const store::NoteRecord> notes);
  std::vector<PartitionManifest> run_all(std::span<const store::NoteRecord> notes);

  // Adds notes not yet stored; existing or repeated ids are skipped and
  // reported. Vectors land in the index as a single atomic batch.
  UpdateReport incremental_update(std::span<const store::NoteRecord> notes);

  std::filesystem::path manifest_path(const std::string& key) const;
  std::filesystem::path chunks_path(const std::string& key) const;
  std::filesystem::path embeddings_path(const std::string& key) const;
  std::optional<PartitionManifest> load_manifest(const std::string& key) const;

 private:
  std::vector<store::NoteRecord> admitted(std::span<const store::NoteRecord> notes, std::size_t& excluded) const;
  std::vector<chunking::Chunk> chunk_all(std::span<const store::NoteRecord> notes) const;
  std::vector<embedding::Embedding> embed_all(const std::vector<chunking::Chunk>& chunks) const;
  std::vector<index::VectorEntry> entries_for(std::span<const store::NoteRecord> notes,
                                              const std::vector<chunking::Chunk>& chunks,
                                              std::vector<embedding::Embedding> vectors) const;
  void save_manifest(const PartitionManifest& m) const;
  void stage(std::string_view name, const std::string& key) const;

  std::shared_ptr<const embedding::Embedder> embedder_;
  std::shared_ptr<index::AnnIndex> index_;
  std::shared_ptr<store::NoteStore> store_;
  PipelineConfig config_;
  StageHook hook_;
  ExclusionPredicate exclude_;
};

// Staged embeddings: "NSEMBED1", u64 count, u32 dim, count*u64 chunk ids,
// count*dim f32, u32 crc32 of everything before it.
void write_embeddings(const std::filesystem::path& path, std::span<const ChunkId> ids,
                      std::span<const embedding::Embedding> vectors);
// Returns the payload crc; throws FormatError on damage.
std::uint32_t read_embeddings(const std::filesystem::path& path, std::vector<ChunkId>& ids,
                              std::vector<embedding::Embedding>& vectors);

// Embeds a seeded sample of chunks from the notes and trains the index.
void train_index_from_notes(index::AnnIndex& index, const embedding::Embedder& embedder,
                            std::span<const store::NoteRecord> notes, const chunking::ChunkingConfig& chunking,
                            std::size_t sample_size, std::uint64_t seed);

}  // namespace notesearch::ingest
