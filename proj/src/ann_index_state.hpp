#pragma once

#include <array>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "notesearch/ann_index.hpp"
#include "notesearch/sync.hpp"

namespace notesearch::index {

// Token id 0 is reserved for "absent".
struct FieldDictionary {
  std::vector<std::string> tokens{std::string()};
  std::unordered_map<std::string, std::uint32_t> ids;

  std::uint32_t intern(const std::string& token) {
    if (token.empty()) return 0;
    auto [it, inserted] = ids.try_emplace(token, static_cast<std::uint32_t>(tokens.size()));
    if (inserted) tokens.push_back(token);
    return it->second;
  }
  std::optional<std::uint32_t> find(const std::string& token) const {
    if (token.empty()) return 0;
    auto it = ids.find(token);
    if (it == ids.end()) return std::nullopt;
    return it->second;
  }
};

struct Partition {
  std::vector<std::uint32_t> members;  // entry indices
  std::vector<float> mins;             // scalar8 only
  std::vector<float> scales;
  std::vector<std::uint8_t> codes;  // members.size() * dimension
};

struct AnnIndex::State {
  std::size_t dimension = 0;
  IndexConfig config;
  bool trained = false;
  std::uint64_t generation = 0;

  std::vector<float> centroids;  // num_partitions * dimension

  std::vector<ChunkId> chunk_ids;
  std::vector<NoteId> note_ids;
  std::vector<float> vectors;             // N * dimension, full precision
  std::vector<std::uint32_t> cat_tokens;  // N * kNumCategorical
  std::vector<double> numeric;            // N * kNumNumeric
  std::array<FieldDictionary, kNumCategorical> dictionaries;
  std::unordered_map<ChunkId, std::uint32_t> by_chunk;

  std::vector<Partition> partitions;

  mutable WriterPreferringMutex mutex;  // readers vs the applying writer
  std::mutex writer;                   // serializes insert batches

  std::size_t size() const noexcept { return chunk_ids.size(); }
  const float* vector_at(std::size_t e) const noexcept { return vectors.data() + e * dimension; }
  AttributeSet attributes_at(std::size_t e) const;
};

}  // namespace notesearch::index
