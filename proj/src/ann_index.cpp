#include "notesearch/ann_index.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

#include "ann_index_state.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/kernels.hpp"

namespace notesearch::index {

using embedding::Embedding;

void IndexConfig::validate() const {
  if (num_partitions == 0) throw InvalidArgument("num_partitions must be positive");
  if (nprobe < 1 || nprobe > num_partitions) throw InvalidArgument("nprobe must be in [1, num_partitions]");
  if (spill != 1 && spill != 2) throw InvalidArgument("spill must be 1 or 2");
  if (spill > num_partitions) throw InvalidArgument("spill exceeds num_partitions");
  if (rescore_budget == 0) throw InvalidArgument("rescore_budget must be positive");
}

nlohmann::json to_json(const IndexConfig& c) {
  return {{"num_partitions", c.num_partitions},
          {"nprobe", c.nprobe},
          {"spill", c.spill},
          {"rescore_budget", c.rescore_budget},
          {"quantization", std::string(to_string(c.quantization))}};
}

IndexConfig index_config_from_json(const nlohmann::json& j) {
  IndexConfig c;
  c.num_partitions = j.value("num_partitions", c.num_partitions);
  c.nprobe = j.value("nprobe", c.nprobe);
  c.spill = j.value("spill", c.spill);
  c.rescore_budget = j.value("rescore_budget", c.rescore_budget);
  c.quantization = parse_quantization(j.value("quantization", std::string("scalar8")));
  c.validate();
  return c;
}

nlohmann::json to_json(const Vocabulary& v) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    j[std::string(field_name(static_cast<CategoricalField>(i)))] = v.categorical[i];
  }
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    const auto name = std::string(field_name(static_cast<NumericField>(i)));
    if (v.numeric[i]) {
      j[name] = {{"min", v.numeric[i]->first}, {"max", v.numeric[i]->second}};
    } else {
      j[name] = nullptr;
    }
  }
  return j;
}

AttributeSet AnnIndex::State::attributes_at(std::size_t e) const {
  AttributeSet a;
  for (std::size_t f = 0; f < kNumCategorical; ++f) {
    a.categorical[f] = dictionaries[f].tokens[cat_tokens[e * kNumCategorical + f]];
  }
  for (std::size_t f = 0; f < kNumNumeric; ++f) a.numeric[f] = numeric[e * kNumNumeric + f];
  return a;
}

namespace {

// FilterSpec resolved against the index dictionaries.
class CompiledFilter {
 public:
  CompiledFilter(const FilterSpec& spec, const AnnIndex::State& s) : state_(s) {
    for (std::size_t f = 0; f < kNumCategorical; ++f) {
      const auto& clause = spec.categorical[f];
      const auto& dict = s.dictionaries[f];
      if (!clause.include.empty()) {
        include_[f].assign(dict.tokens.size(), 0);
        has_include_[f] = true;
        for (const auto& tok : clause.include) {
          if (auto id = dict.find(tok); id && *id != 0) include_[f][*id] = 1;
        }
        active_ = true;
      }
      if (!clause.exclude.empty()) {
        exclude_[f].assign(dict.tokens.size(), 0);
        has_exclude_[f] = true;
        for (const auto& tok : clause.exclude) {
          if (auto id = dict.find(tok); id && *id != 0) exclude_[f][*id] = 1;
        }
        active_ = true;
      }
    }
    for (std::size_t f = 0; f < kNumNumeric; ++f) {
      ranges_[f] = spec.numeric[f];
      active_ = active_ || ranges_[f].has_value();
    }
  }

  bool accepts(std::uint32_t e) const noexcept {
    if (!active_) return true;
    const std::uint32_t* toks = state_.cat_tokens.data() + static_cast<std::size_t>(e) * kNumCategorical;
    for (std::size_t f = 0; f < kNumCategorical; ++f) {
      const auto t = toks[f];
      if (has_include_[f] && (t == 0 || !include_[f][t])) return false;
      if (has_exclude_[f] && t != 0 && exclude_[f][t]) return false;
    }
    const double* nums = state_.numeric.data() + static_cast<std::size_t>(e) * kNumNumeric;
    for (std::size_t f = 0; f < kNumNumeric; ++f) {
      if (!ranges_[f]) continue;
      const double v = nums[f];
      if (!(v >= ranges_[f]->min && v <= ranges_[f]->max)) return false;
    }
    return true;
  }

 private:
  const AnnIndex::State& state_;
  bool active_ = false;
  std::array<bool, kNumCategorical> has_include_{};
  std::array<bool, kNumCategorical> has_exclude_{};
  std::array<std::vector<char>, kNumCategorical> include_{};
  std::array<std::vector<char>, kNumCategorical> exclude_{};
  std::array<std::optional<RangeClause>, kNumNumeric> ranges_{};
};

struct Candidate {
  double score;
  ChunkId chunk_id;
  std::uint32_t entry;
};

// Strict "a ranks ahead of b": higher score, then lower chunk id.
bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk_id < b.chunk_id;
}

// Per-thread visited marks so spilled copies are scored once per search.
struct VisitedSet {
  std::vector<std::uint32_t> marks;
  std::uint32_t stamp = 0;

  void begin(std::size_t n) {
    if (marks.size() < n) marks.resize(n, 0);
    if (++stamp == 0) {
      std::fill(marks.begin(), marks.end(), 0);
      stamp = 1;
    }
  }
  bool test_and_set(std::uint32_t e) noexcept {
    if (marks[e] == stamp) return true;
    marks[e] = stamp;
    return false;
  }
};

thread_local VisitedSet t_visited;

std::vector<std::uint32_t> top_centroids(const AnnIndex::State& s, const float* q, std::size_t count) {
  const std::size_t k = s.config.num_partitions;
  std::vector<std::pair<float, std::uint32_t>> scored(k);
  for (std::size_t c = 0; c < k; ++c) {
    scored[c] = {kernels::dot(q, s.centroids.data() + c * s.dimension, s.dimension), static_cast<std::uint32_t>(c)};
  }
  count = std::min(count, k);
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(count), scored.end(),
                    [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  std::vector<std::uint32_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = scored[i].second;
  return out;
}

}  // namespace

AnnIndex::AnnIndex(std::size_t dimension, IndexConfig config) : state_(std::make_unique<State>()) {
  if (dimension == 0) throw InvalidArgument("index dimension must be positive");
  config.validate();
  state_->dimension = dimension;
  state_->config = config;
  state_->partitions.resize(config.num_partitions);
}

AnnIndex::~AnnIndex() = default;

std::size_t AnnIndex::dimension() const noexcept { return state_->dimension; }
const IndexConfig& AnnIndex::config() const noexcept { return state_->config; }

bool AnnIndex::trained() const {
  std::shared_lock lock(state_->mutex);
  return state_->trained;
}

void AnnIndex::train(std::span<const Embedding> sample, std::uint64_t seed, const KMeansOptions& options) {
  for (const auto& e : sample) {
    if (e.dimension() != state_->dimension) throw InvalidArgument("training vector dimension mismatch");
  }
  const auto centroids = train_partitions(sample, state_->config.num_partitions, seed, options);
  set_centroids(centroids);
}

void AnnIndex::set_centroids(std::span<const Embedding> centroids) {
  if (centroids.size() != state_->config.num_partitions) {
    throw InvalidArgument("expected " + std::to_string(state_->config.num_partitions) + " centroids, got " +
                          std::to_string(centroids.size()));
  }
  std::vector<float> flat;
  flat.reserve(centroids.size() * state_->dimension);
  for (const auto& c : centroids) {
    if (c.dimension() != state_->dimension) throw InvalidArgument("centroid dimension mismatch");
    flat.insert(flat.end(), c.values().begin(), c.values().end());
  }
  std::scoped_lock writer(state_->writer);
  std::unique_lock lock(state_->mutex);
  if (state_->size() != 0) throw IndexError("cannot replace centroids of a non-empty index");
  state_->centroids = std::move(flat);
  state_->trained = true;
  ++state_->generation;
}

std::vector<Embedding> AnnIndex::centroids() const {
  std::shared_lock lock(state_->mutex);
  std::vector<Embedding> out;
  const std::size_t d = state_->dimension;
  for (std::size_t c = 0; c * d < state_->centroids.size(); ++c) {
    out.push_back(Embedding::normalize(std::span<const float>(state_->centroids.data() + c * d, d)));
  }
  return out;
}

InsertReport AnnIndex::insert(std::span<const VectorEntry> entries) {
  auto& s = *state_;
  std::scoped_lock writer(s.writer);
  if (!s.trained) throw IndexError("index is not trained");

  const std::size_t d = s.dimension;
  std::vector<std::uint64_t> dups;
  {
    std::shared_lock lock(s.mutex);
    std::set<ChunkId> seen;
    for (const auto& e : entries) {
      if (e.vector.dimension() != d) {
        throw InvalidArgument("vector for chunk " + std::to_string(e.chunk_id) + " has dimension " +
                              std::to_string(e.vector.dimension()) + ", index expects " + std::to_string(d));
      }
      if (!seen.insert(e.chunk_id).second || s.by_chunk.contains(e.chunk_id)) dups.push_back(e.chunk_id);
    }
  }
  if (!dups.empty()) {
    std::sort(dups.begin(), dups.end());
    dups.erase(std::unique(dups.begin(), dups.end()), dups.end());
    std::string list;
    for (std::size_t i = 0; i < dups.size() && i < 10; ++i) list += (i ? ", " : "") + std::to_string(dups[i]);
    throw DuplicateIdError("duplicate chunk ids: " + list + (dups.size() > 10 ? ", ..." : ""), std::move(dups));
  }

  // Assignment and quantization only read the centroids, which are immutable
  // once entries exist, so they run outside the exclusive lock.
  const std::size_t spill = s.config.spill;
  const bool sq8 = s.config.quantization == Quantization::kScalar8;
  std::vector<std::uint32_t> assignment(entries.size() * spill);
  std::vector<std::uint8_t> codes(sq8 ? entries.size() * d : 0);
  std::vector<float> mins(entries.size()), scales(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto parts = top_centroids(s, entries[i].vector.values().data(), spill);
    std::copy(parts.begin(), parts.end(), assignment.begin() + static_cast<std::ptrdiff_t>(i * spill));
    if (sq8) quantize_into(entries[i].vector.values(), codes.data() + i * d, mins[i], scales[i]);
  }

  std::unique_lock lock(s.mutex);
  const std::size_t base = s.size();
  if (base + entries.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw IndexError("index capacity exceeded");
  }
  s.chunk_ids.reserve(base + entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const auto idx = static_cast<std::uint32_t>(base + i);
    s.chunk_ids.push_back(e.chunk_id);
    s.note_ids.push_back(e.note_id);
    s.vectors.insert(s.vectors.end(), e.vector.values().begin(), e.vector.values().end());
    for (std::size_t f = 0; f < kNumCategorical; ++f) s.cat_tokens.push_back(s.dictionaries[f].intern(e.attributes.categorical[f]));
    for (std::size_t f = 0; f < kNumNumeric; ++f) s.numeric.push_back(e.attributes.numeric[f]);
    s.by_chunk.emplace(e.chunk_id, idx);
    for (std::size_t r = 0; r < spill; ++r) {
      auto& p = s.partitions[assignment[i * spill + r]];
      p.members.push_back(idx);
      if (sq8) {
        p.mins.push_back(mins[i]);
        p.scales.push_back(scales[i]);
        p.codes.insert(p.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(i * d),
                       codes.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
      }
    }
  }
  ++s.generation;
  return InsertReport{entries.size(), entries.size() * spill, s.generation};
}

std::vector<Neighbor> AnnIndex::search(const Embedding& query, std::size_t k, const FilterSpec& filter,
                                       const SearchOverrides& overrides) const {
  const auto& s = *state_;
  if (k < 1) throw InvalidArgument("k must be at least 1");
  if (query.dimension() != s.dimension) {
    throw InvalidArgument("query dimension " + std::to_string(query.dimension()) + " does not match index dimension " +
                          std::to_string(s.dimension));
  }
  const std::uint32_t nprobe = overrides.nprobe.value_or(s.config.nprobe);
  if (nprobe < 1 || nprobe > s.config.num_partitions) throw InvalidArgument("nprobe out of range");
  const std::size_t budget = std::max<std::size_t>(overrides.rescore_budget.value_or(s.config.rescore_budget), k);

  std::shared_lock lock(s.mutex);
  if (s.size() == 0) return {};
  if (!s.trained) throw IndexError("index is not trained");

  const std::size_t d = s.dimension;
  const float* q = query.values().data();
  const CompiledFilter accept(filter, s);
  const auto probes = top_centroids(s, q, nprobe);
  const bool sq8 = s.config.quantization == Quantization::kScalar8;
  float q_sum = 0.0f;
  for (std::size_t i = 0; i < d; ++i) q_sum += q[i];

  // Max-heap on "worse", so top() is the weakest kept candidate.
  auto worse = [](const Candidate& a, const Candidate& b) { return ranks_before(a, b); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse)> heap(worse);

  auto& visited = t_visited;
  visited.begin(s.size());
  for (const auto p_idx : probes) {
    const auto& part = s.partitions[p_idx];
    for (std::size_t m = 0; m < part.members.size(); ++m) {
      const auto e = part.members[m];
      if (!accept.accepts(e)) continue;
      if (visited.test_and_set(e)) continue;
      Candidate c{0.0, s.chunk_ids[e], e};
      if (sq8) {
        const float cd = kernels::dot_u8(q, part.codes.data() + m * d, d);
        c.score = asymmetric_score(q_sum, cd, part.mins[m], part.scales[m]);
      } else {
        c.score = embedding::dot(query.values(), std::span<const float>(s.vector_at(e), d));
      }
      if (heap.size() < budget) {
        heap.push(c);
      } else if (ranks_before(c, heap.top())) {
        heap.pop();
        heap.push(c);
      }
    }
  }

  std::vector<Candidate> pool;
  pool.reserve(heap.size());
  while (!heap.empty()) {
    pool.push_back(heap.top());
    heap.pop();
  }
  if (sq8) {
    for (auto& c : pool) c.score = embedding::dot(query.values(), std::span<const float>(s.vector_at(c.entry), d));
  }
  std::sort(pool.begin(), pool.end(), ranks_before);
  if (pool.size() > k) pool.resize(k);

  std::vector<Neighbor> out;
  out.reserve(pool.size());
  for (const auto& c : pool) out.push_back({c.chunk_id, s.note_ids[c.entry], c.score});
  return out;
}

std::size_t AnnIndex::size() const {
  std::shared_lock lock(state_->mutex);
  return state_->size();
}

std::uint64_t AnnIndex::generation() const {
  std::shared_lock lock(state_->mutex);
  return state_->generation;
}

bool AnnIndex::contains(ChunkId id) const {
  std::shared_lock lock(state_->mutex);
  return state_->by_chunk.contains(id);
}

std::optional<AttributeSet> AnnIndex::attributes(ChunkId id) const {
  std::shared_lock lock(state_->mutex);
  auto it = state_->by_chunk.find(id);
  if (it == state_->by_chunk.end()) return std::nullopt;
  return state_->attributes_at(it->second);
}

std::optional<Embedding> AnnIndex::vector(ChunkId id) const {
  std::shared_lock lock(state_->mutex);
  auto it = state_->by_chunk.find(id);
  if (it == state_->by_chunk.end()) return std::nullopt;
  const auto* v = state_->vector_at(it->second);
  return Embedding::from_unit(std::vector<float>(v, v + state_->dimension));
}

std::vector<std::uint32_t> AnnIndex::partitions_of(ChunkId id) const {
  std::shared_lock lock(state_->mutex);
  std::vector<std::uint32_t> out;
  auto it = state_->by_chunk.find(id);
  if (it == state_->by_chunk.end()) return out;
  for (std::size_t p = 0; p < state_->partitions.size(); ++p) {
    const auto& members = state_->partitions[p].members;
    if (std::find(members.begin(), members.end(), it->second) != members.end()) {
      out.push_back(static_cast<std::uint32_t>(p));
    }
  }
  return out;
}

Vocabulary AnnIndex::vocabulary() const {
  std::shared_lock lock(state_->mutex);
  const auto& s = *state_;
  Vocabulary v;
  for (std::size_t f = 0; f < kNumCategorical; ++f) {
    v.categorical[f].assign(s.dictionaries[f].tokens.begin() + 1, s.dictionaries[f].tokens.end());
    std::sort(v.categorical[f].begin(), v.categorical[f].end());
  }
  for (std::size_t e = 0; e < s.size(); ++e) {
    for (std::size_t f = 0; f < kNumNumeric; ++f) {
      const double x = s.numeric[e * kNumNumeric + f];
      if (std::isnan(x)) continue;
      auto& r = v.numeric[f];
      if (!r) {
        r = std::pair{x, x};
      } else {
        r->first = std::min(r->first, x);
        r->second = std::max(r->second, x);
      }
    }
  }
  return v;
}

PartitionStats AnnIndex::partition_stats() const {
  std::shared_lock lock(state_->mutex);
  PartitionStats st;
  st.entries = state_->size();
  st.smallest = std::numeric_limits<std::size_t>::max();
  for (const auto& p : state_->partitions) {
    st.memberships += p.members.size();
    st.smallest = std::min(st.smallest, p.members.size());
    st.largest = std::max(st.largest, p.members.size());
  }
  if (state_->partitions.empty()) st.smallest = 0;
  return st;
}

}  // namespace notesearch::index
