#include "notesearch/mcqa.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "notesearch/errors.hpp"

namespace notesearch::eval {

Interval wilson_ci(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) throw InvalidArgument("Wilson interval needs at least one trial");
  if (successes > trials) throw InvalidArgument("successes exceed trials");
  if (!(z > 0.0)) throw InvalidArgument("z must be positive");
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
  if (successes == 0) ci.low = 0.0;
  if (successes == trials) ci.high = 1.0;
  return ci;
}

int majority_vote(std::span<const int> votes) {
  if (votes.empty()) throw InvalidArgument("majority vote over no votes");
  std::map<int, std::size_t> counts;
  for (int v : votes) ++counts[v];
  int best = counts.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [option, c] : counts) {
    if (c > best_count) {
      best = option;
      best_count = c;
    }
  }
  return best;
}

void McqaItem::validate() const {
  if (question.empty()) throw InvalidArgument("item " + item_id + " has no question");
  if (answer_index < 0 || answer_index >= static_cast<int>(kNumOptions)) {
    throw InvalidArgument("item " + item_id + " answer index out of range");
  }
  std::set<std::string> distinct;
  for (const auto& o : options) {
    if (o.empty()) throw InvalidArgument("item " + item_id + " has an empty option");
    distinct.insert(o);
  }
  if (distinct.size() != kNumOptions) throw InvalidArgument("item " + item_id + " has duplicate options");
}

nlohmann::json to_json(const McqaItem& item) {
  nlohmann::json j{{"item_id", item.item_id},
                   {"question", item.question},
                   {"mrn", item.mrn},
                   {"options", item.options},
                   {"answer_index", item.answer_index},
                   {"kind", item.kind}};
  if (item.date_range) {
    j["date_range"] = {{"min", item.date_range->first}, {"max", item.date_range->second}};
  } else {
    j["date_range"] = nullptr;
  }
  return j;
}

McqaItem mcqa_item_from_json(const nlohmann::json& j) {
  McqaItem item;
  item.item_id = j.value("item_id", "");
  item.question = j.at("question").get<std::string>();
  item.mrn = j.at("mrn").get<std::string>();
  const auto& opts = j.at("options");
  if (!opts.is_array() || opts.size() != kNumOptions) throw InvalidArgument("an item needs exactly five options");
  for (std::size_t i = 0; i < kNumOptions; ++i) item.options[i] = opts[i].get<std::string>();
  item.answer_index = j.at("answer_index").get<int>();
  item.kind = j.value("kind", "");
  if (j.contains("date_range") && !j["date_range"].is_null()) {
    item.date_range = std::make_pair(j["date_range"].at("min").get<double>(), j["date_range"].at("max").get<double>());
  }
  item.validate();
  return item;
}

std::vector<McqaItem> read_mcqa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  std::vector<McqaItem> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(mcqa_item_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_mcqa_jsonl(const std::filesystem::path& path, std::span<const McqaItem> items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw StorageError("cannot write " + path.string());
  for (const auto& item : items) out << to_json(item).dump() << '\n';
}

std::string question_for(std::string_view kind) {
  if (kind == "condition") return "What is the primary oncologic diagnosis documented for this patient?";
  if (kind == "onset_age") return "At what age did the symptoms of this patient begin?";
  if (kind == "injury") return "What injury did this patient sustain?";
  throw InvalidArgument("unknown fact kind: " + std::string(kind));
}

std::vector<McqaItem> generate_mcqa_items(std::span<const ingest::TruthFact> facts, std::size_t count,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(facts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t take = std::min(count, facts.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(order[i], order[i + rng() % (order.size() - i)]);

  std::vector<McqaItem> items;
  items.reserve(take);
  for (std::size_t n = 0; n < take; ++n) {
    const auto& fact = facts[order[n]];
    std::vector<std::string> pool;
    for (const auto& v : ingest::fact_values(fact.kind)) {
      if (v != fact.value) pool.push_back(v);
    }
    if (pool.size() < kNumOptions - 1) throw InvalidArgument("not enough distractors for kind " + fact.kind);
    for (std::size_t i = 0; i < kNumOptions - 1; ++i) std::swap(pool[i], pool[i + rng() % (pool.size() - i)]);
    std::vector<std::string> options(pool.begin(), pool.begin() + (kNumOptions - 1));
    options.push_back(fact.value);
    for (std::size_t i = kNumOptions - 1; i > 0; --i) std::swap(options[i], options[rng() % (i + 1)]);

    McqaItem item;
    char id[32];
    std::snprintf(id, sizeof(id), "q%04zu", n + 1);
    item.item_id = id;
    item.question = question_for(fact.kind);
    item.mrn = fact.mrn;
    item.kind = fact.kind;
    for (std::size_t i = 0; i < kNumOptions; ++i) {
      item.options[i] = options[i];
      if (options[i] == fact.value) item.answer_index = static_cast<int>(i);
    }
    item.validate();
    items.push_back(std::move(item));
  }
  return items;
}

std::optional<int> ContainmentAnswerer::answer(const McqaItem& item, std::span<const query::RetrievedChunk> context,
                                               std::size_t) {
  for (const auto& chunk : context) {
    for (std::size_t i = 0; i < kNumOptions; ++i) {
      if (chunk.text.find(item.options[i]) != std::string::npos) return static_cast<int>(i);
    }
  }
  return std::nullopt;
}

HttpAnswerer::HttpAnswerer(std::string host, int port, std::string path, int timeout_seconds)
    : host_(std::move(host)), port_(port), path_(std::move(path)), timeout_seconds_(timeout_seconds) {}

std::optional<int> HttpAnswerer::answer(const McqaItem& item, std::span<const query::RetrievedChunk> context,
                                        std::size_t run) {
  httplib::Client client(host_, port_);
  client.set_read_timeout(timeout_seconds_, 0);
  nlohmann::json ctx = nlohmann::json::array();
  for (const auto& c : context) ctx.push_back(c.text);
  const nlohmann::json body{{"question", item.question}, {"options", item.options}, {"context", ctx}, {"run", run}};
  auto res = client.Post(path_, body.dump(), "application/json");
  if (!res) throw Error("answerer unreachable");
  if (res->status != 200) throw Error("answerer returned HTTP " + std::to_string(res->status));
  const auto reply = nlohmann::json::parse(res->body);
  const auto& a = reply.at("answer_index");
  if (a.is_null()) return std::nullopt;
  const int idx = a.get<int>();
  if (idx < 0 || idx >= static_cast<int>(kNumOptions)) throw Error("answerer returned an invalid option");
  return idx;
}

Retriever engine_retriever(const query::SearchEngine& engine) {
  return [&engine](const std::string& question, const index::FilterSpec& filter, std::size_t k) {
    return engine.retrieve_chunks(question, filter, k);
  };
}

index::FilterSpec item_filter(const McqaItem& item) {
  index::FilterSpec f;
  f.clause(index::CategoricalField::kPatientId).include = {item.mrn};
  if (item.date_range) f.range(index::NumericField::kDate) = index::RangeClause{item.date_range->first, item.date_range->second};
  return f;
}

nlohmann::json to_json(const EvalRun& r, bool include_items) {
  nlohmann::json j{{"k", r.k},
                   {"runs", r.runs},
                   {"items_total", r.items_total},
                   {"items_scored", r.items_scored},
                   {"errored", r.errored},
                   {"correct", r.correct},
                   {"accuracy", r.accuracy},
                   {"wilson_ci", {{"low", r.wilson.low}, {"high", r.wilson.high}, {"z", 1.96}}}};
  if (include_items) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& o : r.outcomes) {
      items.push_back({{"item_id", o.item_id},
                       {"votes", o.votes},
                       {"final_answer", o.final_answer ? nlohmann::json(*o.final_answer) : nlohmann::json(nullptr)},
                       {"correct", o.correct},
                       {"errored", o.errored},
                       {"error", o.error}});
    }
    j["items"] = std::move(items);
  }
  return j;
}

EvalRun run_mcqa(std::span<const McqaItem> items, const Retriever& retriever, Answerer& answerer, std::size_t k,
                 std::size_t runs) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  if (runs == 0) throw InvalidArgument("runs must be at least 1");
  EvalRun out;
  out.k = k;
  out.runs = runs;
  out.items_total = items.size();
  for (const auto& item : items) {
    ItemOutcome o;
    o.item_id = item.item_id;
    try {
      const auto context = retriever(item.question, item_filter(item), k);
      for (std::size_t r = 0; r < runs; ++r) {
        if (auto a = answerer.answer(item, context, r)) o.votes.push_back(*a);
      }
      if (!o.votes.empty()) o.final_answer = majority_vote(o.votes);
      o.correct = o.final_answer && *o.final_answer == item.answer_index;
    } catch (const std::exception& e) {
      o.errored = true;
      o.error = e.what();
      o.votes.clear();
      o.final_answer.reset();
      o.correct = false;
    }
    if (o.errored) {
      ++out.errored;
    } else if (o.correct) {
      ++out.correct;
    }
    out.outcomes.push_back(std::move(o));
  }
  out.items_scored = out.items_total - out.errored;
  if (out.items_scored > 0) {
    out.accuracy = static_cast<double>(out.correct) / static_cast<double>(out.items_scored);
    out.wilson = wilson_ci(out.correct, out.items_scored);
  }
  return out;
}

std::vector<EvalRun> run_k_sweep(std::span<const McqaItem> items, const Retriever& retriever, Answerer& answerer,
                                 std::span<const std::size_t> ks, std::size_t runs) {
  std::vector<EvalRun> out;
  for (auto k : ks) out.push_back(run_mcqa(items, retriever, answerer, k, runs));
  return out;
}

}  // namespace notesearch::eval
