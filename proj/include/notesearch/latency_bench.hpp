#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "notesearch/ann_index.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/governance.hpp"
#include "notesearch/query_engine.hpp"

namespace notesearch::eval {

// Executes query number i and reports its stage timings. Must be callable
// concurrently.
using LatencyTarget = std::function<query::StageLatency(std::size_t query_index)>;

struct LatencyBenchConfig {
  std::vector<std::size_t> levels = {1, 5, 10, 20, 40, 80};
  std::size_t queries_per_level = 200;
  std::size_t warmup = 20;
};

struct StageSummary {
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

struct LevelSummary {
  std::size_t level = 0;
  std::size_t queries = 0;
  std::size_t errors = 0;
  StageSummary embed;
  StageSummary search;
  StageSummary hydrate;
  StageSummary total;
  double wall_seconds = 0.0;
  double throughput_qps = 0.0;
};

struct LatencyReport {
  static constexpr int kSchemaVersion = 1;
  std::string label;
  std::size_t corpus_vectors = 0;
  std::vector<LevelSummary> levels;
};

nlohmann::json to_json(const LatencyReport& r);
LatencyReport latency_report_from_json(const nlohmann::json& j);

// Linear-interpolated quantile (q in [0, 1]) of an unsorted sample.
double quantile(std::vector<double> values, double q);

// For each level, `level` closed-loop workers drain a shared queue of
// queries_per_level queries. Failed queries are counted, not timed.
LatencyReport run_latency_bench(const LatencyTarget& target, const LatencyBenchConfig& config);

// Times index search alone for precomputed query vectors.
LatencyTarget index_search_target(const index::AnnIndex& index, std::span<const embedding::Embedding> queries,
                                  std::size_t k, index::FilterSpec filter = {});

// Full governed pipeline. With precomputed vectors (same length as requests)
// the embed stage is skipped.
LatencyTarget engine_target(query::SearchEngine& engine, std::vector<query::SearchRequest> requests,
                            std::vector<embedding::Embedding> precomputed, std::string user,
                            query::Allowlist allowlist);

// Unit vectors drawn around `clusters` random centres with Gaussian spread.
std::vector<embedding::Embedding> clustered_unit_vectors(std::size_t n, std::size_t dim, std::size_t clusters,
                                                         double spread, std::uint64_t seed);

}  // namespace notesearch::eval
