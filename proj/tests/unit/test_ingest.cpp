#include <gtest/gtest.h>

#include <atomic>
#include <fstream>

#include "fixtures.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/ingest.hpp"

using namespace notesearch;
using namespace notesearch::ingest;
using fixtures::make_note;
using fixtures::TempDir;

namespace {

class CountingProvider final : public embedding::EmbeddingProvider {
 public:
  explicit CountingProvider(std::size_t dim) : inner_(dim) {}
  std::string id() const override { return inner_.id(); }
  std::size_t dimension() const override { return inner_.dimension(); }
  std::vector<std::vector<float>> encode(std::span<const std::string> texts, embedding::EmbedMode mode) override {
    calls += texts.size();
    return inner_.encode(texts, mode);
  }
  std::atomic<std::size_t> calls{0};

 private:
  embedding::ReferenceProvider inner_;
};

struct Rig {
  std::shared_ptr<CountingProvider> provider = std::make_shared<CountingProvider>(32);
  std::shared_ptr<embedding::Embedder> embedder;
  std::shared_ptr<index::AnnIndex> index;
  std::shared_ptr<store::NoteStore> store;

  Rig() {
    embedding::EmbedderConfig cfg;
    cfg.dimension = 32;
    embedder = std::make_shared<embedding::Embedder>(provider, cfg);
    index::IndexConfig ic;
    ic.num_partitions = 2;
    ic.nprobe = 2;
    ic.rescore_budget = 1u << 20;
    index = std::make_shared<index::AnnIndex>(32, ic);
    std::vector<embedding::Embedding> cents{embedding::l2_normalize(std::vector<float>(32, 1.0f)),
                                            embedding::l2_normalize(std::vector<float>(32, -1.0f))};
    index->set_centroids(cents);
    store = std::make_shared<store::NoteStore>(std::make_unique<store::MemoryKvBackend>());
  }

  Pipeline pipeline(const std::filesystem::path& dir) {
    PipelineConfig pc;
    pc.work_dir = dir;
    pc.embed_batch = 7;
    return Pipeline(embedder, index, store, pc);
  }
};

std::string plain_words(std::size_t n, std::size_t salt) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i * 31 + salt);
  return s;
}

}  // namespace

TEST(SyntheticCorpus, DeterministicAndWellFormed) {
  SyntheticCorpusSpec spec;
  spec.num_patients = 30;
  spec.seed = 9;
  const auto a = generate_synthetic_corpus(spec);
  const auto b = generate_synthetic_corpus(spec);
  ASSERT_EQ(a.notes, b.notes);
  EXPECT_EQ(a.facts, b.facts);
  EXPECT_EQ(a.facts.size(), 30u * fact_kinds().size());
  std::set<NoteId> ids;
  for (const auto& n : a.notes) {
    EXPECT_TRUE(ids.insert(n.note_id).second);
    EXPECT_FALSE(n.text.empty());
    EXPECT_NO_THROW(partition_key(n));
  }
  spec.seed = 10;
  EXPECT_NE(generate_synthetic_corpus(spec).notes, a.notes);
}

TEST(SyntheticCorpus, EmptyCorpus) {
  SyntheticCorpusSpec spec;
  spec.num_patients = 0;
  const auto c = generate_synthetic_corpus(spec);
  EXPECT_TRUE(c.notes.empty());
  EXPECT_TRUE(c.facts.empty());
}

TEST(SyntheticCorpus, FactsPlantedOnlyWhereRecorded) {
  SyntheticCorpusSpec spec;
  spec.num_patients = 40;
  const auto c = generate_synthetic_corpus(spec);
  std::map<std::string, std::vector<const store::NoteRecord*>> by_patient;
  for (const auto& n : c.notes) by_patient[n.patient.mrn].push_back(&n);
  for (const auto& f : c.facts) {
    ASSERT_FALSE(f.note_ids.empty());
    for (const auto* n : by_patient[f.mrn]) {
      const bool listed = std::find(f.note_ids.begin(), f.note_ids.end(), n->note_id) != f.note_ids.end();
      EXPECT_EQ(n->text.find(f.value) != std::string::npos, listed) << f.value;
      for (const auto& other : fact_values(f.kind)) {
        if (other != f.value) EXPECT_EQ(n->text.find(other), std::string::npos) << other;
      }
    }
  }
}

TEST(SyntheticCorpus, WriteAndReadBack) {
  TempDir dir("ns_ingest_corpus");
  SyntheticCorpusSpec spec;
  spec.num_patients = 5;
  const auto c = generate_synthetic_corpus(spec);
  write_corpus(dir.path, c);
  EXPECT_EQ(store::read_notes_jsonl(dir.path / "notes.jsonl"), c.notes);
  EXPECT_EQ(read_truth_jsonl(dir.path / "truth.jsonl"), c.facts);
}

TEST(Partitioning, ByFiledMonth) {
  const std::vector<store::NoteRecord> notes{make_note(1, "a", "x", "2021-05-10T08:00:00Z"),
                                             make_note(2, "a", "y", "2021-05-31T23:59:59Z"),
                                             make_note(3, "a", "z", "2021-06-01T00:00:00Z")};
  const auto parts = partition_notes(notes);
  ASSERT_EQ(parts.size(), 2u);
  EXPECT_EQ(parts.at("2021-05").size(), 2u);
  EXPECT_EQ(parts.at("2021-06").size(), 1u);
  auto undated = notes[0];
  undated.filed_time.clear();
  EXPECT_THROW(partition_key(undated), InvalidArgument);
}

TEST(Pipeline, ChunkCountMatchesClosedForm) {
  TempDir dir("ns_ingest_count");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  std::vector<store::NoteRecord> notes;
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const std::size_t n = 50 + i * 130;
    notes.push_back(make_note(100 + i, "m" + std::to_string(i), plain_words(n, i)));
    expected += chunking::count_chunks(n, {});
  }
  const auto m = p.run_partition("2021-05", notes);
  EXPECT_EQ(m.chunk_count, expected);
  EXPECT_EQ(m.status, PartitionStatus::kIndexed);
  EXPECT_EQ(rig.index->size(), expected);
  EXPECT_EQ(rig.store->size(), 10u);
}

TEST(Pipeline, RerunIsNoOp) {
  TempDir dir("ns_ingest_rerun");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  const std::vector<store::NoteRecord> notes{make_note(1, "a", "fever and cough"), make_note(2, "b", "rash")};
  const auto first = p.run_partition("2021-05", notes);
  const auto calls = rig.provider->calls.load();
  const auto generation = rig.index->generation();
  const auto second = p.run_partition("2021-05", notes);
  EXPECT_EQ(first, second);
  EXPECT_EQ(rig.provider->calls.load(), calls);
  EXPECT_EQ(rig.index->generation(), generation);
  EXPECT_EQ(*p.load_manifest("2021-05"), first);
  EXPECT_THROW(p.run_partition("2021-06", notes), InvalidArgument);
}

TEST(Pipeline, ResumeAfterFailureSkipsEmbedding) {
  TempDir dir("ns_ingest_resume");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  std::vector<store::NoteRecord> notes;
  for (NoteId i = 1; i <= 12; ++i) notes.push_back(make_note(i, "p" + std::to_string(i % 3), plain_words(40 * i, i)));
  p.set_stage_hook([](std::string_view stage, const std::string&) {
    if (stage == "embedded") throw StorageError("injected failure");
  });
  EXPECT_THROW(p.run_partition("2021-05", notes), StorageError);
  const auto failed = p.load_manifest("2021-05");
  ASSERT_TRUE(failed);
  EXPECT_EQ(failed->status, PartitionStatus::kFailed);
  EXPECT_EQ(failed->last_completed, PartitionStatus::kEmbedded);
  EXPECT_EQ(failed->error, "injected failure");
  EXPECT_EQ(rig.index->size(), 0u);

  const auto calls = rig.provider->calls.load();
  p.set_stage_hook(nullptr);
  const auto m = p.run_partition("2021-05", notes);
  EXPECT_EQ(rig.provider->calls.load(), calls);
  EXPECT_EQ(m.status, PartitionStatus::kIndexed);
  EXPECT_EQ(rig.index->size(), m.chunk_count);
}

TEST(Pipeline, ResumeAfterIndexingNeverDuplicates) {
  TempDir dir("ns_ingest_dupe");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  const std::vector<store::NoteRecord> notes{make_note(1, "a", "fever"), make_note(2, "b", "rash")};
  p.set_stage_hook([](std::string_view stage, const std::string&) {
    if (stage == "indexed") throw StorageError("crash after insert");
  });
  EXPECT_THROW(p.run_partition("2021-05", notes), StorageError);
  EXPECT_EQ(rig.index->size(), 2u);
  p.set_stage_hook(nullptr);
  EXPECT_EQ(p.run_partition("2021-05", notes).status, PartitionStatus::kIndexed);
  EXPECT_EQ(rig.index->size(), 2u);
}

TEST(Pipeline, ExclusionPredicate) {
  TempDir dir("ns_ingest_excl");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  p.set_exclusion([](const store::NoteRecord& n) { return n.note_category == "Telephone Encounter"; });
  auto phone = make_note(3, "a", "called family");
  phone.note_category = "Telephone Encounter";
  const std::vector<store::NoteRecord> notes{make_note(1, "a", "fever"), phone};
  const auto m = p.run_partition("2021-05", notes);
  EXPECT_EQ(m.note_count, 1u);
  EXPECT_EQ(m.excluded_count, 1u);
  EXPECT_FALSE(rig.store->get_note(3));
}

TEST(Pipeline, IncrementalUpdate) {
  TempDir dir("ns_ingest_incr");
  Rig rig;
  auto p = rig.pipeline(dir.path);
  const auto generation = rig.index->generation();
  const auto empty = p.incremental_update({});
  EXPECT_EQ(empty.notes_added, 0u);
  EXPECT_EQ(rig.index->generation(), generation);

  const std::vector<store::NoteRecord> first{make_note(1, "a", "Primary oncologic diagnosis: Wilms tumor.")};
  EXPECT_EQ(p.incremental_update(first).notes_added, 1u);
  const std::vector<store::NoteRecord> again{first[0], make_note(2, "b", "Sprained ankle."), make_note(2, "b", "dup")};
  const auto r = p.incremental_update(again);
  EXPECT_EQ(r.notes_added, 1u);
  EXPECT_EQ(r.skipped_duplicates, (std::vector<NoteId>{1, 2}));

  auto audit = std::make_shared<query::AuditLog>();
  query::SearchEngine engine(rig.embedder, rig.index, rig.store, audit);
  query::SearchRequest req;
  req.question = "Wilms tumor diagnosis";
  const auto res = engine.execute_search(req, "u", query::Allowlist::disabled());
  ASSERT_FALSE(res.hits.empty());
  EXPECT_EQ(res.hits[0].note.note_id, 1u);
}

TEST(Embeddings, FileRoundTripAndDamage) {
  TempDir dir("ns_ingest_emb");
  const std::vector<ChunkId> ids{5, 9};
  const std::vector<embedding::Embedding> vecs{embedding::reference_embed("a", 8), embedding::reference_embed("b", 8)};
  write_embeddings(dir.path / "e.bin", ids, vecs);
  std::vector<ChunkId> rid;
  std::vector<embedding::Embedding> rvec;
  read_embeddings(dir.path / "e.bin", rid, rvec);
  EXPECT_EQ(rid, ids);
  EXPECT_EQ(rvec, vecs);
  std::filesystem::resize_file(dir.path / "e.bin", std::filesystem::file_size(dir.path / "e.bin") - 3);
  EXPECT_THROW(read_embeddings(dir.path / "e.bin", rid, rvec), FormatError);
}

TEST(Manifest, JsonRoundTrip) {
  PartitionManifest m;
  m.partition_key = "2020-01";
  m.note_count = 3;
  m.status = PartitionStatus::kFailed;
  m.last_completed = PartitionStatus::kEmbedded;
  m.error = "x";
  m.notes_crc = 0xdeadbeef;
  EXPECT_EQ(manifest_from_json(to_json(m)), m);
  EXPECT_THROW(parse_partition_status("done"), InvalidArgument);
}
