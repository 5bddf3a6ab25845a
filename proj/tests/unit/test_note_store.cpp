#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "notesearch/errors.hpp"
#include "notesearch/note_store.hpp"

using namespace notesearch;
using namespace notesearch::store;
namespace fs = std::filesystem;

namespace {

NoteRecord note(NoteId id, std::string text = "") {
  NoteRecord r;
  r.note_id = id;
  r.text = text.empty() ? "Progress note " + std::to_string(id) : std::move(text);
  r.patient = {"0000042", "Test Patient", "2015-06-01", "F"};
  r.note_category = "Progress Note";
  r.encounter_type = "Office Visit";
  r.department = "Pediatric Oncology";
  r.specialty = "Oncology";
  r.author = {"Dr. Example", "Physician"};
  r.filed_time = "2020-03-04T10:00:00Z";
  r.creation_time = "2020-03-04T09:00:00Z";
  return r;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(RowKey, FrozenValues) {
  EXPECT_EQ(make_row_key(0), "00#00000000000000000000");
  EXPECT_EQ(make_row_key(12345), "39#54321000000000000000");
  EXPECT_EQ(decode_row_key("39#54321000000000000000"), 12345u);
  EXPECT_THROW(make_row_key(-1), InvalidArgument);
}

TEST(RowKey, SequentialIdsSpreadAcrossPrefixes) {
  std::set<std::string> prefixes;
  for (std::int64_t id = 1000; id < 2000; ++id) prefixes.insert(make_row_key(id).substr(0, 2));
  EXPECT_GE(prefixes.size(), 200u);
  for (std::int64_t id = 1; id < 5000; ++id) {
    EXPECT_NE(make_row_key(id).substr(0, 2), make_row_key(id + 1).substr(0, 2));
  }
}

TEST(RowKey, DecodeRejectsMalformedKeys) {
  EXPECT_THROW(decode_row_key(""), InvalidArgument);
  EXPECT_THROW(decode_row_key("39-54321000000000000000"), InvalidArgument);
  EXPECT_THROW(decode_row_key("00#54321000000000000000"), InvalidArgument);
  EXPECT_THROW(decode_row_key("39#5432100000000000000x"), InvalidArgument);
  EXPECT_EQ(decode_row_key(make_row_key(std::numeric_limits<std::int64_t>::max())),
            static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()));
}

TEST(Dates, DaysSinceEpoch) {
  EXPECT_EQ(days_since_epoch("1970-01-01"), 0);
  EXPECT_EQ(days_since_epoch("2000-03-01"), 11017);
  EXPECT_EQ(days_since_epoch("2024-12-18T09:35:42Z"), 20075);
  EXPECT_THROW(days_since_epoch("2024-02-30"), InvalidArgument);
  EXPECT_THROW(days_since_epoch("yesterday"), InvalidArgument);
}

TEST(Attributes, DerivedFromRecord) {
  const auto a = attribute_set(note(1));
  EXPECT_EQ(a.get(index::CategoricalField::kPatientId), "0000042");
  EXPECT_EQ(a.get(index::CategoricalField::kAuthorType), "Physician");
  EXPECT_EQ(a.get(index::NumericField::kDate), static_cast<double>(days_since_epoch("2020-03-04")));
  EXPECT_EQ(a.get(index::NumericField::kAgeDays),
            static_cast<double>(days_since_epoch("2020-03-04") - days_since_epoch("2015-06-01")));
}

TEST(NoteStore, PutGetOverwrite) {
  NoteStore store(std::make_unique<MemoryKvBackend>());
  EXPECT_EQ(store.put_notes({}), 0u);
  const std::vector<NoteRecord> notes{note(1), note(2)};
  EXPECT_EQ(store.put_notes(notes), 2u);
  EXPECT_EQ(store.get_note(1), notes[0]);
  const std::vector<NoteRecord> changed{note(1, "amended text")};
  store.put_notes(changed);
  EXPECT_EQ(store.get_note(1)->text, "amended text");
  EXPECT_EQ(store.size(), 2u);
}

TEST(NoteStore, PartialHitsAndEmptyBatch) {
  NoteStore store(std::make_unique<MemoryKvBackend>());
  const std::vector<NoteRecord> notes{note(7)};
  store.put_notes(notes);
  const auto empty = store.get_notes({});
  EXPECT_TRUE(empty.records.empty());
  EXPECT_TRUE(empty.missing.empty());
  const std::vector<NoteId> ids{7, 8};
  const auto r = store.get_notes(ids);
  EXPECT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.missing, std::vector<NoteId>{8});
}

TEST(NoteStore, Rejections) {
  NoteStore store(std::make_unique<MemoryKvBackend>(), 3);
  const std::vector<NoteRecord> dup{note(1), note(1)};
  EXPECT_THROW(store.put_notes(dup), InvalidArgument);
  auto blank = note(2);
  blank.text.clear();
  EXPECT_THROW(store.put_notes(std::vector<NoteRecord>{blank}), InvalidArgument);
  const std::vector<NoteId> many{1, 2, 3, 4};
  EXPECT_THROW(store.get_notes(many), InvalidArgument);
}

TEST(NoteStore, BatchedReadBeatsSequentialReads) {
  TempDir dir("ns_store_batch");
  NoteStore store(std::make_unique<LogKvBackend>(dir.path / "notes.log"));
  std::vector<NoteRecord> notes;
  std::vector<NoteId> ids;
  for (NoteId i = 0; i < 100; ++i) {
    notes.push_back(note(i + 1));
    ids.push_back(i + 1);
  }
  store.put_notes(notes);
  using Clock = std::chrono::steady_clock;
  double batch = 1e9, sequential = 1e9;
  for (int rep = 0; rep < 5; ++rep) {
    auto t = Clock::now();
    EXPECT_EQ(store.get_notes(ids).records.size(), 100u);
    batch = std::min(batch, std::chrono::duration<double>(Clock::now() - t).count());
    t = Clock::now();
    for (auto id : ids) EXPECT_TRUE(store.get_note(id));
    sequential = std::min(sequential, std::chrono::duration<double>(Clock::now() - t).count());
  }
  EXPECT_LT(batch, sequential);
}

TEST(LogKv, PersistsAcrossReopen) {
  TempDir dir("ns_store_reopen");
  {
    NoteStore store(std::make_unique<LogKvBackend>(dir.path / "notes.log"));
    store.put_notes(std::vector<NoteRecord>{note(1), note(2)});
    store.put_notes(std::vector<NoteRecord>{note(2, "second version")});
  }
  NoteStore store(std::make_unique<LogKvBackend>(dir.path / "notes.log"));
  EXPECT_EQ(store.size(), 2u);
  EXPECT_EQ(store.get_note(2)->text, "second version");
  EXPECT_EQ(store.get_note(1), note(1));
}

TEST(LogKv, TornTailIsTruncated) {
  TempDir dir("ns_store_torn");
  const auto path = dir.path / "kv.log";
  std::uintmax_t good_size = 0;
  {
    LogKvBackend kv(path);
    const std::vector<std::pair<std::string, std::string>> rows{{"a", "1"}, {"b", "2"}};
    kv.put_batch(rows);
    good_size = fs::file_size(path);
    const std::vector<std::pair<std::string, std::string>> more{{"c", std::string(100, 'x')}};
    kv.put_batch(more);
  }
  fs::resize_file(path, fs::file_size(path) - 10);
  LogKvBackend kv(path);
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_GT(kv.recovered_bytes_dropped(), 0u);
  EXPECT_EQ(fs::file_size(path), good_size);
  const std::vector<std::string> keys{"a", "c"};
  const auto got = kv.get_batch(keys);
  EXPECT_EQ(got[0], "1");
  EXPECT_FALSE(got[1]);
}

TEST(LogKv, CorruptRecordStopsReplay) {
  TempDir dir("ns_store_corrupt");
  const auto path = dir.path / "kv.log";
  {
    LogKvBackend kv(path);
    kv.put_batch(std::vector<std::pair<std::string, std::string>>{{"a", "hello"}});
    kv.put_batch(std::vector<std::pair<std::string, std::string>>{{"b", "world"}});
  }
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(-1, std::ios::end);
    f.put('W');
  }
  LogKvBackend kv(path);
  EXPECT_EQ(kv.size(), 1u);
}

TEST(MemoryKv, ScanKeysOrdered) {
  MemoryKvBackend kv;
  kv.put_batch(std::vector<std::pair<std::string, std::string>>{{"b", "1"}, {"a", "2"}, {"c", "3"}});
  EXPECT_EQ(kv.scan_keys("b", 10), (std::vector<std::string>{"b", "c"}));
  EXPECT_EQ(kv.scan_keys("", 2), (std::vector<std::string>{"a", "b"}));
}

TEST(NotesJsonl, RoundTrip) {
  TempDir dir("ns_store_jsonl");
  const std::vector<NoteRecord> notes{note(1), note(2, "line one\nline two \"quoted\"")};
  write_notes_jsonl(dir.path / "notes.jsonl", notes);
  EXPECT_EQ(read_notes_jsonl(dir.path / "notes.jsonl"), notes);
}
