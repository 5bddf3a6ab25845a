#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "notesearch/errors.hpp"
#include "notesearch/governance.hpp"

using namespace notesearch;
using namespace notesearch::query;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(Allowlist, Semantics) {
  const std::vector<NoteId> ids{1, 2, 3};
  EXPECT_EQ(apply_allowlist(ids, Allowlist::disabled()), ids);
  EXPECT_TRUE(apply_allowlist(ids, Allowlist::enforced({})).empty());
  EXPECT_EQ(apply_allowlist(ids, Allowlist::enforced({2})), std::vector<NoteId>{2});
  const std::vector<NoteId> rev{3, 2, 1};
  EXPECT_EQ(apply_allowlist(rev, Allowlist::enforced({1, 3})), (std::vector<NoteId>{3, 1}));
}

TEST(Allowlist, LoadFromFile) {
  TempDir dir("ns_gov_allow");
  {
    std::ofstream f(dir.path / "allow.txt");
    f << "# approved\n10\n\n  20  \n30 # trailing\n";
  }
  const auto a = Allowlist::load(dir.path / "allow.txt");
  EXPECT_EQ(a.mode, Allowlist::Mode::kEnforced);
  EXPECT_EQ(a.approved, (std::unordered_set<NoteId>{10, 20, 30}));
  {
    std::ofstream f(dir.path / "bad.txt");
    f << "10\nabc\n";
  }
  EXPECT_THROW(Allowlist::load(dir.path / "bad.txt"), InvalidArgument);
  EXPECT_THROW(Allowlist::load(dir.path / "missing.txt"), StorageError);
}

TEST(AuditLog, FileRoundTripWithRequiredFields) {
  TempDir dir("ns_gov_audit");
  const auto path = dir.path / "audit.jsonl";
  {
    AuditLog log(path);
    AuditRecord r;
    r.user_identity = "alice";
    r.action = "search";
    r.query = "seizure onset";
    r.returned_note_ids = {5, 6};
    r.result_count = 2;
    log.append(r);
    r.error = "boom";
    r.returned_note_ids.clear();
    r.result_count = 0;
    log.append(r);
    EXPECT_EQ(log.count(), 2u);
  }
  const auto records = AuditLog::read(path);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_FALSE(records[0].timestamp.empty());
  EXPECT_EQ(records[0].returned_note_ids, (std::vector<NoteId>{5, 6}));
  EXPECT_EQ(records[1].error, "boom");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  for (const char* key : {"schema_version", "timestamp", "user_identity", "action", "query", "filters",
                          "returned_note_ids", "result_count", "latency", "error"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(AuditLog, ConcurrentAppendsAllRecorded) {
  AuditLog log;
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 250; ++i) log.append(AuditRecord{});
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(log.count(), 1000u);
  EXPECT_EQ(log.records().size(), 1000u);
}

TEST(UtcTimestamp, Format) {
  const auto ts = utc_timestamp();
  ASSERT_EQ(ts.size(), 24u);
  EXPECT_EQ(ts[10], 'T');
  EXPECT_EQ(ts.back(), 'Z');
}

TEST(CohortWorkspace, ActionSemantics) {
  CohortWorkspace w("ws");
  w.apply(CohortAction::kInclude, "001");
  w.apply(CohortAction::kInclude, "001");
  EXPECT_EQ(w.included(), std::vector<std::string>{"001"});
  w.apply(CohortAction::kInclude, "002");
  w.apply(CohortAction::kExclude, "002");
  EXPECT_EQ(w.included(), std::vector<std::string>{"001"});
  EXPECT_EQ(w.excluded(), std::vector<std::string>{"002"});
  w.apply(CohortAction::kInclude, "003");
  EXPECT_EQ(w.export_included(), (std::vector<std::string>{"001", "003"}));
  EXPECT_EQ(w.total(), 3u);
  w.apply(CohortAction::kRemove, "002");
  EXPECT_TRUE(w.excluded().empty());
  EXPECT_EQ(workspace_from_json(to_json(w)), w);
  EXPECT_THROW(parse_cohort_action("maybe"), InvalidArgument);
}

TEST(WorkspaceStore, PersistsAndReloads) {
  TempDir dir("ns_gov_ws");
  {
    WorkspaceStore store(dir.path);
    store.create("study-1");
    store.update("study-1", CohortAction::kInclude, "001");
    store.update("study-1", CohortAction::kExclude, "002");
    store.update("study-1", CohortAction::kInclude, "003");
    EXPECT_THROW(store.update("nope", CohortAction::kInclude, "001"), NotFound);
    EXPECT_THROW(store.create("bad id!"), InvalidArgument);
  }
  WorkspaceStore store(dir.path);
  const auto w = store.get("study-1");
  ASSERT_TRUE(w);
  EXPECT_EQ(w->included(), (std::vector<std::string>{"001", "003"}));
  EXPECT_EQ(w->excluded(), std::vector<std::string>{"002"});
  EXPECT_EQ(store.create("study-1"), *w);
  EXPECT_EQ(store.ids(), std::vector<std::string>{"study-1"});
  EXPECT_FALSE(WorkspaceStore::valid_id(std::string(65, 'a')));
  EXPECT_TRUE(WorkspaceStore::valid_id("A_b-9"));
}
