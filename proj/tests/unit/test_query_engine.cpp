#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "fixtures.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/ingest.hpp"
#include "oracles.hpp"

using namespace notesearch;
using namespace notesearch::query;
using fixtures::make_note;

namespace {

SearchRequest request(const std::string& q, std::size_t k = 20) {
  SearchRequest r;
  r.question = q;
  r.notes_to_retrieve = k;
  return r;
}

std::vector<NoteId> ids_of(const SearchResponse& r) {
  std::vector<NoteId> out;
  for (const auto& h : r.hits) out.push_back(h.note.note_id);
  return out;
}

std::vector<store::NoteRecord> small_corpus() {
  return {
      make_note(1, "001", "Afebrile seizure lasting two minutes at home."),
      make_note(2, "001", "Seizure recurrence; started levetiracetam."),
      make_note(3, "001", "Seizure free since last visit; EEG normal."),
      make_note(4, "002", "Port site clean and dry, no erythema."),
      make_note(5, "003", "Febrile seizure with upper respiratory infection."),
      make_note(6, "004", "Fractured left radius after fall from bicycle."),
  };
}

}  // namespace

TEST(SearchRequest, JsonParsing) {
  const auto r = search_request_from_json(nlohmann::json::parse(
      R"({"question": "seizure", "notes_to_retrieve": 5, "notes_per_patient": 2,
          "filters": {"specialty": {"include": ["Oncology"]}}, "include_mrns": ["001"], "workspace_id": "w"})"));
  EXPECT_EQ(r.notes_to_retrieve, 5u);
  EXPECT_EQ(r.notes_per_patient, 2u);
  EXPECT_EQ(r.workspace_id, "w");
  EXPECT_EQ(search_request_from_json(to_json(r)).include_mrns, r.include_mrns);
  try {
    search_request_from_json(nlohmann::json::parse(R"({"question": "x", "filters": {"ward": {}}})"));
    FAIL();
  } catch (const UnknownField& e) {
    EXPECT_EQ(e.field(), "ward");
  }
  EXPECT_THROW(search_request_from_json(nlohmann::json::parse(R"({"question": "x", "top": 3})")), UnknownField);
  EXPECT_THROW(search_request_from_json(nlohmann::json::parse(R"({"question": "x", "notes_to_retrieve": 0})")),
               InvalidArgument);
  EXPECT_THROW(search_request_from_json(nlohmann::json::parse(R"({"notes_to_retrieve": 3})")), InvalidArgument);
  EXPECT_THROW(search_request_from_json(
                   nlohmann::json::parse(R"({"question": "x", "include_mrns": ["1"], "exclude_mrns": ["1"]})")),
               InvalidArgument);
}

TEST(SearchEngine, SingletonCorpus) {
  const std::vector<store::NoteRecord> notes{make_note(9, "010", "Neuroblastoma, right adrenal, on surveillance.")};
  auto d = fixtures::build_deployment(notes);
  const auto r = d.engine->execute_search(request("neuroblastoma"), "u", Allowlist::disabled());
  ASSERT_EQ(r.hits.size(), 1u);
  EXPECT_EQ(r.hits[0].note.note_id, 9u);
  EXPECT_EQ(r.hits[0].rank, 1u);
  EXPECT_EQ(r.hits[0].best_chunk.text, notes[0].text);
  EXPECT_TRUE(r.exhausted);
  EXPECT_GE(r.hits[0].score, -1.0);
  EXPECT_LE(r.hits[0].score, 1.0);
}

TEST(SearchEngine, DuplicateChunksCollapseToMaxScore) {
  const std::string para = "Left femur osteosarcoma confirmed on biopsy.";
  const std::string filler = "Family meeting held today to review the schedule for clinic visits and labs.";
  const std::vector<store::NoteRecord> notes{
      make_note(1, "001", para + "\n\n" + filler + "\n\n" + para + " Restaging planned."),
      make_note(2, "002", filler)};
  chunking::ChunkingConfig cfg{10, 2, 4};
  auto d = fixtures::build_deployment(notes, 64, 2, cfg);
  const auto q = d.embedder->embed_query("femur osteosarcoma");
  const auto r = d.engine->execute_search(request("femur osteosarcoma"), q, "u", Allowlist::disabled());
  ASSERT_EQ(r.hits.size(), 2u);
  EXPECT_EQ(r.hits[0].note.note_id, 1u);
  double best = -2.0;
  ChunkId best_id = 0;
  for (const auto& e : d.entries) {
    if (e.note_id != 1) continue;
    const double s = oracle::exact_dot(q.values(), e.vector.values());
    if (s > best) {
      best = s;
      best_id = e.chunk_id;
    }
  }
  EXPECT_NEAR(r.hits[0].score, best, 1e-12);
  EXPECT_EQ(r.hits[0].best_chunk.chunk_ordinal, chunk_ordinal(best_id));
  const auto& h = r.hits[0].best_chunk;
  EXPECT_EQ(notes[0].text.substr(h.char_start, h.char_end - h.char_start), h.text);
}

TEST(SearchEngine, PerPatientCap) {
  auto d = fixtures::build_deployment(small_corpus());
  auto req = request("seizure", 3);
  req.notes_per_patient = 1;
  const auto r = d.engine->execute_search(req, "u", Allowlist::disabled());
  std::map<std::string, int> per;
  for (const auto& h : r.hits) ++per[h.note.patient.mrn];
  EXPECT_EQ(per["001"], 1);
  EXPECT_EQ(r.hits.size(), 3u);
}

TEST(SearchEngine, AllowlistIsEnforced) {
  auto d = fixtures::build_deployment(small_corpus());
  const auto r = d.engine->execute_search(request("seizure"), "u", Allowlist::enforced({2, 6}));
  EXPECT_EQ(ids_of(r).size(), 2u);
  for (auto id : ids_of(r)) EXPECT_TRUE(id == 2 || id == 6);
  const auto none = d.engine->execute_search(request("seizure"), "u", Allowlist::enforced({}));
  EXPECT_TRUE(none.hits.empty());
}

TEST(SearchEngine, MrnScopingAndWorkspaceExclusions) {
  auto d = fixtures::build_deployment(small_corpus());
  auto req = request("seizure");
  req.include_mrns = {"001", "003"};
  for (const auto& h : d.engine->execute_search(req, "u", Allowlist::disabled()).hits) {
    EXPECT_TRUE(h.note.patient.mrn == "001" || h.note.patient.mrn == "003");
  }
  d.workspaces->create("ws");
  d.workspaces->update("ws", CohortAction::kExclude, "001");
  req.workspace_id = "ws";
  const auto r = d.engine->execute_search(req, "u", Allowlist::disabled());
  for (const auto& h : r.hits) EXPECT_EQ(h.note.patient.mrn, "003");
  EXPECT_EQ(r.hits.size(), 1u);

  req.include_mrns = {"001"};
  EXPECT_FALSE(d.engine->effective_filter(req));
  EXPECT_TRUE(d.engine->execute_search(req, "u", Allowlist::disabled()).hits.empty());

  auto unscoped = request("seizure");
  unscoped.workspace_id = "ws";
  for (const auto& h : d.engine->execute_search(unscoped, "u", Allowlist::disabled()).hits) {
    EXPECT_NE(h.note.patient.mrn, "001");
  }
  unscoped.workspace_id = "missing";
  EXPECT_THROW(d.engine->execute_search(unscoped, "u", Allowlist::disabled()), NotFound);
}

TEST(SearchEngine, CursorPaging) {
  std::vector<store::NoteRecord> notes;
  for (NoteId i = 1; i <= 5; ++i) notes.push_back(make_note(i, "00" + std::to_string(i), "seizure note " + std::to_string(i)));
  notes.push_back(make_note(6, "009", "unrelated"));
  auto d = fixtures::build_deployment(notes);
  auto req = request("seizure", 3);
  req.filter.clause(index::CategoricalField::kPatientId).exclude = {"009"};
  const auto p1 = d.engine->execute_search(req, "alice", Allowlist::disabled());
  ASSERT_EQ(p1.hits.size(), 3u);
  EXPECT_FALSE(p1.exhausted);
  const auto p2 = d.engine->search_more(p1.cursor, "alice", Allowlist::disabled());
  ASSERT_EQ(p2.hits.size(), 2u);
  EXPECT_EQ(p2.hits[0].rank, 4u);
  const auto p3 = d.engine->search_more(p2.cursor, "alice", Allowlist::disabled());
  EXPECT_TRUE(p3.hits.empty());
  EXPECT_TRUE(p3.exhausted);

  auto all = req;
  all.notes_to_retrieve = 10;
  auto full = ids_of(d.engine->execute_search(all, "alice", Allowlist::disabled()));
  auto paged = ids_of(p1);
  for (auto id : ids_of(p2)) paged.push_back(id);
  EXPECT_EQ(paged, full);

  EXPECT_THROW(d.engine->search_more(p1.cursor, "mallory", Allowlist::disabled()), NotFound);
  EXPECT_THROW(d.engine->search_more("c-nonexistent", "alice", Allowlist::disabled()), NotFound);

  const std::vector<store::NoteRecord> extra{make_note(50, "050", "late seizure note")};
  d.store->put_notes(extra);
  d.index->insert(fixtures::entries_for(*d.embedder, extra, {}));
  EXPECT_THROW(d.engine->search_more(p1.cursor, "alice", Allowlist::disabled()), StaleCursorError);
}

TEST(SearchEngine, AuditsEveryRequest) {
  auto d = fixtures::build_deployment(small_corpus());
  d.engine->execute_search(request("seizure"), "alice", Allowlist::disabled());
  d.engine->execute_search(request("no such words anywhere"), "alice", Allowlist::enforced({}));
  auto bad = request("   ");
  EXPECT_THROW(d.engine->execute_search(bad, "bob", Allowlist::disabled()), InvalidArgument);
  const auto records = d.audit->records();
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0].user_identity, "alice");
  EXPECT_EQ(records[0].action, "search");
  EXPECT_EQ(records[0].result_count, records[0].returned_note_ids.size());
  EXPECT_FALSE(records[1].error);
  EXPECT_EQ(records[1].result_count, 0u);
  EXPECT_TRUE(records[2].error);
}

TEST(SearchEngine, MatchesBruteForcePipeline) {
  ingest::SyntheticCorpusSpec spec;
  spec.num_patients = 25;
  spec.seed = 3;
  const auto corpus = ingest::generate_synthetic_corpus(spec);
  auto d = fixtures::build_deployment(corpus.notes, 64, 8);
  std::mt19937_64 rng(4);
  const std::vector<std::string> questions{"seizure onset age", "injury fracture", "oncologic diagnosis",
                                           "family report symptoms", "follow up clinic"};
  for (int t = 0; t < 30; ++t) {
    auto req = request(questions[rng() % questions.size()], 1 + rng() % 15);
    if (rng() % 2) req.notes_per_patient = 1 + rng() % 2;
    std::optional<std::unordered_set<NoteId>> approved;
    Allowlist allow = Allowlist::disabled();
    if (rng() % 2) {
      approved.emplace();
      for (const auto& n : corpus.notes) {
        if (rng() % 3) approved->insert(n.note_id);
      }
      allow = Allowlist::enforced(*approved);
    }
    if (rng() % 2) req.filter.range(index::NumericField::kDate) = index::RangeClause{17800.0, 19500.0};
    const auto q = d.embedder->embed_query(req.question);
    const auto r = d.engine->execute_search(req, q, "u", allow);
    const auto expect = oracle::brute_rank_notes(d.entries, q, *d.engine->effective_filter(req), req.notes_per_patient,
                                                 approved, req.notes_to_retrieve);
    ASSERT_EQ(r.hits.size(), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) {
      EXPECT_EQ(r.hits[i].note.note_id, expect[i].note_id);
      EXPECT_EQ(r.hits[i].best_chunk.chunk_ordinal, chunk_ordinal(expect[i].best_chunk));
      EXPECT_NEAR(r.hits[i].score, expect[i].score, 1e-12);
    }
  }
}

TEST(SearchEngine, RetrieveChunksCarriesText) {
  auto d = fixtures::build_deployment(small_corpus());
  index::FilterSpec f;
  f.clause(index::CategoricalField::kPatientId).include = {"004"};
  const auto chunks = d.engine->retrieve_chunks("radius fracture", f, 5);
  ASSERT_EQ(chunks.size(), 1u);
  EXPECT_EQ(chunks[0].text, small_corpus()[5].text);
}

TEST(SearchEngine, ResponseJsonShape) {
  auto d = fixtures::build_deployment(small_corpus());
  const auto j = to_json(d.engine->execute_search(request("seizure", 2), "u", Allowlist::disabled()));
  EXPECT_EQ(j["result_count"], 2);
  const auto& hit = j["hits"][0];
  for (const char* key : {"rank", "score", "note_id", "patient", "note_category", "encounter_type", "department",
                          "specialty", "author", "filed_time", "text", "highlight"}) {
    EXPECT_TRUE(hit.contains(key)) << key;
  }
  EXPECT_TRUE(j["latency"].contains("search_ms"));
}

TEST(SearchEngine, ConcurrentSearchesDuringUpdate) {
  auto d = fixtures::build_deployment(small_corpus());
  std::atomic<bool> done{false};
  std::atomic<int> errors{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 3; ++t) {
    readers.emplace_back([&] {
      while (!done) {
        try {
          d.engine->execute_search(request("seizure"), "u", Allowlist::disabled());
        } catch (...) {
          ++errors;
        }
      }
    });
  }
  std::vector<store::NoteRecord> more;
  for (NoteId i = 100; i < 1100; ++i) more.push_back(make_note(i, "1" + std::to_string(i), "seizure follow up " + std::to_string(i)));
  ingest::PipelineConfig pc;
  fixtures::TempDir dir("ns_engine_concurrent");
  pc.work_dir = dir.path;
  ingest::Pipeline pipeline(d.embedder, d.index, d.store, pc);
  const auto report = pipeline.incremental_update(more);
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(report.notes_added, 1000u);
  EXPECT_EQ(errors.load(), 0);
  EXPECT_EQ(d.audit->count(), d.audit->records().size());
}
