#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "notesearch/attributes.hpp"
#include "notesearch/embedding.hpp"
#include "notesearch/kmeans.hpp"
#include "notesearch/quantizer.hpp"
#include "notesearch/types.hpp"

namespace notesearch::index {

struct VectorEntry {
  ChunkId chunk_id = 0;
  NoteId note_id = 0;
  embedding::Embedding vector;
  AttributeSet attributes;
};

struct IndexConfig {
  std::uint32_t num_partitions = 256;
  std::uint32_t nprobe = 32;
  std::uint32_t spill = 2;  // 1 = plain IVF, 2 = assign to the two nearest centroids
  std::uint32_t rescore_budget = 200;
  Quantization quantization = Quantization::kScalar8;

  void validate() const;
  bool operator==(const IndexConfig&) const = default;
};

nlohmann::json to_json(const IndexConfig& c);
IndexConfig index_config_from_json(const nlohmann::json& j);

struct SearchOverrides {
  std::optional<std::uint32_t> nprobe;
  std::optional<std::uint32_t> rescore_budget;
};

struct Neighbor {
  ChunkId chunk_id = 0;
  NoteId note_id = 0;
  double score = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct InsertReport {
  std::size_t inserted = 0;
  std::size_t assignments = 0;  // partition memberships written
  std::uint64_t generation = 0;
};

struct Vocabulary {
  std::array<std::vector<std::string>, kNumCategorical> categorical{};
  std::array<std::optional<std::pair<double, double>>, kNumNumeric> numeric{};
};

nlohmann::json to_json(const Vocabulary& v);

struct PartitionStats {
  std::size_t entries = 0;
  std::size_t memberships = 0;
  std::size_t smallest = 0;
  std::size_t largest = 0;
};

// Partitioned (IVF-style) index over unit vectors. A search probes the nprobe
// partitions whose centroids score highest, drops entries failing the filter
// before scoring, ranks survivors by quantized asymmetric score, rescores the
// best rescore_budget at full precision and returns the top k by exact dot
// product (ties by ascending chunk id).
//
// Thread safety: any number of concurrent searches; inserts are serialized and
// applied atomically per batch.
class AnnIndex {
 public:
  AnnIndex(std::size_t dimension, IndexConfig config);
  ~AnnIndex();

  AnnIndex(const AnnIndex&) = delete;
  AnnIndex& operator=(const AnnIndex&) = delete;

  std::size_t dimension() const noexcept;
  const IndexConfig& config() const noexcept;
  bool trained() const;

  // Runs spherical k-means over the sample and installs the centroids.
  void train(std::span<const embedding::Embedding> sample, std::uint64_t seed, const KMeansOptions& options = {});
  // Installs explicit centroids. Only allowed while the index is empty.
  void set_centroids(std::span<const embedding::Embedding> centroids);
  std::vector<embedding::Embedding> centroids() const;

  // Throws DuplicateIdError (listing offending ids) if a chunk id repeats
  // within the batch or is already indexed; IndexError if untrained;
  // InvalidArgument on dimension mismatch. On error nothing is inserted.
  InsertReport insert(std::span<const VectorEntry> entries);

  std::vector<Neighbor> search(const embedding::Embedding& query, std::size_t k, const FilterSpec& filter = {},
                               const SearchOverrides& overrides = {}) const;

  std::size_t size() const;
  std::uint64_t generation() const;
  bool contains(ChunkId id) const;
  std::optional<AttributeSet> attributes(ChunkId id) const;
  std::optional<embedding::Embedding> vector(ChunkId id) const;
  // Partitions holding a copy of the entry, ascending.
  std::vector<std::uint32_t> partitions_of(ChunkId id) const;
  Vocabulary vocabulary() const;
  PartitionStats partition_stats() const;

  // Writes atomically (temp file + rename). See docs/index_format.md.
  void save(const std::filesystem::path& path) const;
  // Throws FormatError on bad magic/version, truncation or checksum mismatch;
  // never returns a partially loaded index.
  static std::unique_ptr<AnnIndex> load(const std::filesystem::path& path);

  struct State;

 private:
  std::unique_ptr<State> state_;
};

// Reads individual partition blocks of a saved index without loading the rest.
class IndexFileReader {
 public:
  struct Header {
    std::uint32_t version = 0;
    std::uint32_t dimension = 0;
    IndexConfig config;
    bool trained = false;
    std::uint64_t entry_count = 0;
    std::uint64_t generation = 0;
  };
  struct PartitionBlock {
    std::vector<std::uint32_t> entry_indices;
    std::vector<float> mins;
    std::vector<float> scales;
    std::vector<std::uint8_t> codes;
  };

  explicit IndexFileReader(const std::filesystem::path& path);
  ~IndexFileReader();
  IndexFileReader(const IndexFileReader&) = delete;
  IndexFileReader& operator=(const IndexFileReader&) = delete;

  const Header& header() const noexcept { return header_; }
  // Verifies the block's own CRC32.
  PartitionBlock read_partition(std::uint32_t partition) const;

 private:
  struct DirEntry {
    std::uint64_t offset;
    std::uint64_t length;
    std::uint32_t members;
    std::uint32_t crc;
  };
  int fd_ = -1;
  Header header_;
  std::vector<DirEntry> directory_;
};

}  // namespace notesearch::index
