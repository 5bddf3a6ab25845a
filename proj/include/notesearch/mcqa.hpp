#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "notesearch/attributes.hpp"
#include "notesearch/ingest.hpp"
#include "notesearch/query_engine.hpp"

namespace notesearch::eval {

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Wilson score interval. Throws InvalidArgument unless 0 <= successes <= trials
// and trials > 0.
Interval wilson_ci(std::size_t successes, std::size_t trials, double z = 1.96);

// Modal vote; ties go to the smallest option index. Throws on empty input.
int majority_vote(std::span<const int> votes);

inline constexpr std::size_t kNumOptions = 5;

struct McqaItem {
  std::string item_id;
  std::string question;
  std::string mrn;
  std::array<std::string, kNumOptions> options{};
  int answer_index = 0;
  std::string kind;
  std::optional<std::pair<double, double>> date_range;  // days since epoch, inclusive

  // Throws InvalidArgument on duplicate or empty options or a bad answer index.
  void validate() const;
};

nlohmann::json to_json(const McqaItem& item);
McqaItem mcqa_item_from_json(const nlohmann::json& j);
std::vector<McqaItem> read_mcqa_jsonl(const std::filesystem::path& path);
void write_mcqa_jsonl(const std::filesystem::path& path, std::span<const McqaItem> items);

// Question wording for a planted fact kind.
std::string question_for(std::string_view kind);

// Builds up to `count` items from distinct truth facts: the planted value plus
// four distractors of the same kind, shuffled. Deterministic given seed.
std::vector<McqaItem> generate_mcqa_items(std::span<const ingest::TruthFact> facts, std::size_t count,
                                          std::uint64_t seed);

class Answerer {
 public:
  virtual ~Answerer() = default;
  // Option index, or nullopt to abstain. Throwing marks the item errored.
  virtual std::optional<int> answer(const McqaItem& item, std::span<const query::RetrievedChunk> context,
                                    std::size_t run) = 0;
};

// Picks the first option, scanning chunks in rank order, whose text occurs
// verbatim in a chunk. Abstains when no option occurs.
class ContainmentAnswerer final : public Answerer {
 public:
  std::optional<int> answer(const McqaItem& item, std::span<const query::RetrievedChunk> context,
                            std::size_t run) override;
};

class FixedAnswerer final : public Answerer {
 public:
  explicit FixedAnswerer(int option) : option_(option) {}
  std::optional<int> answer(const McqaItem&, std::span<const query::RetrievedChunk>, std::size_t) override {
    return option_;
  }

 private:
  int option_;
};

// Adapter for a remote model: POSTs {"question", "options", "context", "run"}
// as JSON and expects {"answer_index": int|null}.
class HttpAnswerer final : public Answerer {
 public:
  HttpAnswerer(std::string host, int port, std::string path = "/v1/answer", int timeout_seconds = 120);
  std::optional<int> answer(const McqaItem& item, std::span<const query::RetrievedChunk> context,
                            std::size_t run) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  int timeout_seconds_;
};

using Retriever =
    std::function<std::vector<query::RetrievedChunk>(const std::string& question, const index::FilterSpec&, std::size_t k)>;

Retriever engine_retriever(const query::SearchEngine& engine);

// Retrieval filter for an item: its patient, plus its date range if any.
index::FilterSpec item_filter(const McqaItem& item);

struct ItemOutcome {
  std::string item_id;
  std::vector<int> votes;  // answered runs only
  std::optional<int> final_answer;
  bool correct = false;
  bool errored = false;
  std::string error;
};

struct EvalRun {
  std::size_t k = 0;
  std::size_t runs = 0;
  std::size_t items_total = 0;
  std::size_t items_scored = 0;  // total minus errored
  std::size_t errored = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  Interval wilson;
  std::vector<ItemOutcome> outcomes;
};

nlohmann::json to_json(const EvalRun& r, bool include_items = false);

// Per item: retrieve the top-k chunks filtered to the item's patient, ask the
// answerer `runs` times and majority-vote the answered runs. An item whose
// answerer throws is errored and left out of the accuracy.
EvalRun run_mcqa(std::span<const McqaItem> items, const Retriever& retriever, Answerer& answerer, std::size_t k,
                 std::size_t runs = 5);

inline const std::vector<std::size_t> kDefaultSweep = {1, 5, 10, 20, 30, 40, 50};

std::vector<EvalRun> run_k_sweep(std::span<const McqaItem> items, const Retriever& retriever, Answerer& answerer,
                                 std::span<const std::size_t> ks, std::size_t runs = 5);

}  // namespace notesearch::eval
