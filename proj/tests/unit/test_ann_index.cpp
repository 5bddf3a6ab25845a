#include <gtest/gtest.h>

#include <atomic>
#include <random>
#include <thread>

#include "notesearch/ann_index.hpp"
#include "notesearch/errors.hpp"
#include "oracles.hpp"

using namespace notesearch;
using namespace notesearch::index;
using embedding::Embedding;

namespace {

Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> g;
  std::vector<float> v(dim);
  for (auto& x : v) x = g(rng);
  return embedding::l2_normalize(v);
}

std::vector<VectorEntry> random_entries(std::mt19937_64& rng, std::size_t n, std::size_t dim, NoteId first_note = 1) {
  std::vector<VectorEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    VectorEntry e;
    e.note_id = first_note + i / 3;
    e.chunk_id = make_chunk_id(e.note_id, i % 3);
    e.vector = random_unit(rng, dim);
    e.attributes.get(CategoricalField::kPatientId) = "p" + std::to_string(e.note_id % 7);
    e.attributes.get(CategoricalField::kSpecialty) = rng() % 4 == 0 ? "" : "s" + std::to_string(rng() % 3);
    e.attributes.get(NumericField::kDate) = static_cast<double>(rng() % 100);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Embedding> vectors_of(const std::vector<VectorEntry>& entries) {
  std::vector<Embedding> out;
  for (const auto& e : entries) out.push_back(e.vector);
  return out;
}

IndexConfig small_config(std::uint32_t partitions, std::uint32_t spill = 2) {
  IndexConfig c;
  c.num_partitions = partitions;
  c.nprobe = partitions;
  c.spill = spill;
  c.rescore_budget = 100000;
  return c;
}

}  // namespace

TEST(IndexConfig, Validation) {
  IndexConfig c;
  EXPECT_NO_THROW(c.validate());
  c.nprobe = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.nprobe = 257;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.spill = 3;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  EXPECT_EQ(index_config_from_json(to_json(c)), c);
}

TEST(AnnIndex, SelfRetrievalScoresOne) {
  std::mt19937_64 rng(1);
  const auto entries = random_entries(rng, 300, 16);
  AnnIndex idx(16, small_config(8));
  idx.train(vectors_of(entries), 3);
  idx.insert(entries);
  for (std::size_t i = 0; i < entries.size(); i += 17) {
    const auto hits = idx.search(entries[i].vector, 3);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].chunk_id, entries[i].chunk_id);
    EXPECT_NEAR(hits[0].score, 1.0, 1e-6);
  }
}

TEST(AnnIndex, SinglePartitionMatchesBruteForce) {
  std::mt19937_64 rng(2);
  const auto entries = random_entries(rng, 5, 8);
  AnnIndex idx(8, small_config(1, 1));
  idx.train(vectors_of(entries), 1);
  idx.insert(entries);
  const auto q = random_unit(rng, 8);
  EXPECT_EQ(idx.search(q, 5), oracle::brute_top_k(entries, q, 5));
}

TEST(AnnIndex, FilterDropsTopHit) {
  std::mt19937_64 rng(3);
  auto entries = random_entries(rng, 60, 8);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    entries[i].attributes.get(CategoricalField::kPatientId) = "p" + std::to_string(i);
  }
  AnnIndex idx(8, small_config(4));
  idx.train(vectors_of(entries), 1);
  idx.insert(entries);
  const auto q = random_unit(rng, 8);
  const auto unfiltered = idx.search(q, 2);
  FilterSpec f;
  f.clause(CategoricalField::kPatientId).exclude = {*idx.attributes(unfiltered[0].chunk_id)->categorical.begin()};
  const auto filtered = idx.search(q, 1, f);
  ASSERT_EQ(filtered.size(), 1u);
  EXPECT_EQ(filtered[0].chunk_id, unfiltered[1].chunk_id);
}

TEST(AnnIndex, ExhaustiveReturnsEveryMatchOnce) {
  std::mt19937_64 rng(4);
  const auto entries = random_entries(rng, 200, 12);
  AnnIndex idx(12, small_config(16));
  idx.train(vectors_of(entries), 5);
  idx.insert(entries);
  FilterSpec f;
  f.clause(CategoricalField::kSpecialty).include = {"s1"};
  const auto q = random_unit(rng, 12);
  const auto hits = idx.search(q, 10000, f);
  EXPECT_EQ(hits, oracle::brute_top_k(entries, q, 10000, f));
  std::set<ChunkId> ids;
  for (const auto& h : hits) ids.insert(h.chunk_id);
  EXPECT_EQ(ids.size(), hits.size());
}

TEST(AnnIndex, RandomizedOracleEquivalence) {
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t dim = 4 + rng() % 20;
    const auto entries = random_entries(rng, 100 + rng() % 900, dim);
    for (auto quant : {Quantization::kScalar8, Quantization::kNone}) {
      auto cfg = small_config(1 + rng() % 20, 1 + rng() % 2);
      cfg.quantization = quant;
      AnnIndex idx(dim, cfg);
      idx.train(vectors_of(entries), seed);
      idx.insert(entries);
      for (int t = 0; t < 20; ++t) {
        FilterSpec f;
        if (rng() % 2) f.clause(CategoricalField::kPatientId).include = {"p1", "p3", "p4"};
        if (rng() % 2) f.clause(CategoricalField::kSpecialty).exclude = {"s0"};
        if (rng() % 2) f.range(NumericField::kDate) = RangeClause{20.0, 70.0};
        const auto q = random_unit(rng, dim);
        const std::size_t k = 1 + rng() % 30;
        EXPECT_EQ(idx.search(q, k, f), oracle::brute_top_k(entries, q, k, f));
      }
    }
  }
}

TEST(AnnIndex, SpillMakesSecondNearestPartitionFindable) {
  const std::vector<Embedding> centroids{Embedding::from_unit({1, 0, 0, 0}), Embedding::from_unit({0, 1, 0, 0})};
  VectorEntry e;
  e.chunk_id = make_chunk_id(1, 0);
  e.note_id = 1;
  e.vector = embedding::l2_normalize(std::vector<float>{0.8f, 0.6f, 0.0f, 0.0f});
  const auto probe = Embedding::from_unit({0, 1, 0, 0});
  for (std::uint32_t spill : {1u, 2u}) {
    auto cfg = small_config(2, spill);
    cfg.nprobe = 1;
    AnnIndex idx(4, cfg);
    idx.set_centroids(centroids);
    idx.insert(std::vector<VectorEntry>{e});
    EXPECT_EQ(idx.partitions_of(e.chunk_id).size(), spill);
    EXPECT_EQ(idx.search(probe, 1).size(), spill == 2 ? 1u : 0u);
  }
}

TEST(AnnIndex, InsertErrors) {
  std::mt19937_64 rng(5);
  auto entries = random_entries(rng, 20, 8);
  AnnIndex idx(8, small_config(2));
  EXPECT_THROW(idx.insert(entries), IndexError);
  idx.train(vectors_of(entries), 1);
  const auto trained_generation = idx.generation();
  auto dup = entries;
  dup.push_back(entries[3]);
  try {
    idx.insert(dup);
    FAIL();
  } catch (const DuplicateIdError& e) {
    EXPECT_EQ(e.ids(), std::vector<std::uint64_t>{entries[3].chunk_id});
  }
  EXPECT_EQ(idx.size(), 0u);
  EXPECT_EQ(idx.generation(), trained_generation);
  idx.insert(std::span(entries).first(10));
  EXPECT_EQ(idx.generation(), trained_generation + 1);
  EXPECT_THROW(idx.insert(std::span(entries).subspan(9)), DuplicateIdError);
  EXPECT_EQ(idx.size(), 10u);
  auto wrong = random_entries(rng, 1, 4, 999);
  EXPECT_THROW(idx.insert(wrong), InvalidArgument);
  EXPECT_THROW(idx.set_centroids(idx.centroids()), IndexError);
  EXPECT_THROW(idx.search(random_unit(rng, 4), 1), InvalidArgument);
  EXPECT_THROW(idx.search(entries[0].vector, 0), InvalidArgument);
}

TEST(AnnIndex, EmptyIndexSearchesEmpty) {
  AnnIndex idx(8, small_config(2));
  std::mt19937_64 rng(6);
  EXPECT_TRUE(idx.search(random_unit(rng, 8), 5).empty());
}

TEST(AnnIndex, VocabularyAndStats) {
  std::mt19937_64 rng(7);
  const auto entries = random_entries(rng, 90, 8);
  AnnIndex idx(8, small_config(4));
  idx.train(vectors_of(entries), 1);
  EXPECT_TRUE(idx.vocabulary().categorical[0].empty());
  idx.insert(entries);
  const auto vocab = idx.vocabulary();
  EXPECT_EQ(vocab.categorical[static_cast<std::size_t>(CategoricalField::kSpecialty)],
            (std::vector<std::string>{"s0", "s1", "s2"}));
  ASSERT_TRUE(vocab.numeric[0]);
  const auto stats = idx.partition_stats();
  EXPECT_EQ(stats.entries, 90u);
  EXPECT_EQ(stats.memberships, 180u);
}

TEST(AnnIndex, ConcurrentSearchDuringInsert) {
  std::mt19937_64 rng(8);
  const auto entries = random_entries(rng, 3000, 16);
  AnnIndex idx(16, small_config(8));
  idx.train(vectors_of(entries), 1);
  idx.insert(std::span(entries).first(300));
  std::atomic<bool> done{false};
  std::atomic<std::size_t> failures{0};
  std::vector<std::thread> readers;
  for (int r = 0; r < 3; ++r) {
    readers.emplace_back([&, r] {
      std::mt19937_64 local(100 + r);
      while (!done.load()) {
        const auto before = idx.size();
        const auto hits = idx.search(random_unit(local, 16), 100000);
        const auto after = idx.size();
        // A batch is applied atomically, so a search sees a size that some
        // reader could also observe.
        if (hits.size() < before || hits.size() > after || hits.size() % 300 != 0) failures.fetch_add(1);
      }
    });
  }
  for (std::size_t b = 300; b < entries.size(); b += 300) idx.insert(std::span(entries).subspan(b, 300));
  done = true;
  for (auto& t : readers) t.join();
  EXPECT_EQ(failures.load(), 0u);
  EXPECT_EQ(idx.size(), 3000u);
}
