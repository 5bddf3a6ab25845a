#include "notesearch/ingest.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "notesearch/errors.hpp"

namespace notesearch::ingest {

namespace {

constexpr char kEmbedMagic[8] = {'N', 'S', 'E', 'M', 'B', 'E', 'D', '1'};

std::uint32_t crc_of(std::uint32_t crc, const void* data, std::size_t n) {
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const auto step = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = static_cast<std::uint32_t>(::crc32(crc, p, step));
    p += step;
    n -= step;
  }
  return crc;
}

void write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw StorageError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string partition_key(const store::NoteRecord& note) {
  const auto& t = note.filed_time;
  if (t.size() < 7 || t[4] != '-') throw InvalidArgument("note " + std::to_string(note.note_id) + " has no filed_time");
  store::days_since_epoch(t);
  return t.substr(0, 7);
}

std::map<std::string, std::vector<store::NoteRecord>> partition_notes(std::span<const store::NoteRecord> notes) {
  std::map<std::string, std::vector<store::NoteRecord>> out;
  for (const auto& n : notes) out[partition_key(n)].push_back(n);
  return out;
}

const char* to_string(PartitionStatus s) noexcept {
  switch (s) {
    case PartitionStatus::kPending: return "pending";
    case PartitionStatus::kEmbedded: return "embedded";
    case PartitionStatus::kIndexed: return "indexed";
    case PartitionStatus::kFailed: return "failed";
  }
  return "pending";
}

PartitionStatus parse_partition_status(std::string_view s) {
  if (s == "pending") return PartitionStatus::kPending;
  if (s == "embedded") return PartitionStatus::kEmbedded;
  if (s == "indexed") return PartitionStatus::kIndexed;
  if (s == "failed") return PartitionStatus::kFailed;
  throw InvalidArgument("unknown partition status: " + std::string(s));
}

nlohmann::json to_json(const PartitionManifest& m) {
  return {{"partition_key", m.partition_key},
          {"note_count", m.note_count},
          {"excluded_count", m.excluded_count},
          {"chunk_count", m.chunk_count},
          {"status", to_string(m.status)},
          {"last_completed", to_string(m.last_completed)},
          {"error", m.error},
          {"checksums", {{"notes_crc32", m.notes_crc}, {"chunks_crc32", m.chunks_crc}, {"embeddings_crc32", m.embeddings_crc}}}};
}

PartitionManifest manifest_from_json(const nlohmann::json& j) {
  PartitionManifest m;
  m.partition_key = j.at("partition_key").get<std::string>();
  m.note_count = j.at("note_count").get<std::size_t>();
  m.excluded_count = j.at("excluded_count").get<std::size_t>();
  m.chunk_count = j.at("chunk_count").get<std::size_t>();
  m.status = parse_partition_status(j.at("status").get<std::string>());
  m.last_completed = parse_partition_status(j.at("last_completed").get<std::string>());
  m.error = j.value("error", "");
  const auto& c = j.at("checksums");
  m.notes_crc = c.at("notes_crc32").get<std::uint32_t>();
  m.chunks_crc = c.at("chunks_crc32").get<std::uint32_t>();
  m.embeddings_crc = c.at("embeddings_crc32").get<std::uint32_t>();
  return m;
}

nlohmann::json to_json(const UpdateReport& r) {
  return {{"notes_added", r.notes_added},
          {"chunks_added", r.chunks_added},
          {"excluded", r.excluded},
          {"skipped_duplicates", r.skipped_duplicates}};
}

void write_embeddings(const std::filesystem::path& path, std::span<const ChunkId> ids,
                      std::span<const embedding::Embedding> vectors) {
  if (ids.size() != vectors.size()) throw InvalidArgument("ids and vectors differ in length");
  const std::uint64_t count = ids.size();
  const std::uint32_t dim = vectors.empty() ? 0 : static_cast<std::uint32_t>(vectors.front().dimension());
  std::string buf;
  buf.reserve(24 + count * (8 + 4 * std::size_t{dim}) + 4);
  auto put = [&](const void* p, std::size_t n) { buf.append(static_cast<const char*>(p), n); };
  put(kEmbedMagic, 8);
  put(&count, 8);
  put(&dim, 4);
  put(ids.data(), ids.size() * sizeof(ChunkId));
  for (const auto& v : vectors) {
    if (v.dimension() != dim) throw InvalidArgument("embedding dimensions differ");
    put(v.values().data(), v.dimension() * sizeof(float));
  }
  const std::uint32_t crc = crc_of(0, buf.data(), buf.size());
  put(&crc, 4);
  write_atomically(path, buf);
}

std::uint32_t read_embeddings(const std::filesystem::path& path, std::vector<ChunkId>& ids,
                              std::vector<embedding::Embedding>& vectors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 24) throw FormatError(FormatError::Kind::kTruncated, "embedding file truncated");
  if (std::memcmp(buf.data(), kEmbedMagic, 8) != 0) throw FormatError(FormatError::Kind::kBadMagic, "not an embedding file");
  std::uint64_t count;
  std::uint32_t dim;
  std::memcpy(&count, buf.data() + 8, 8);
  std::memcpy(&dim, buf.data() + 16, 4);
  const std::size_t payload = 20;
  if (count > buf.size() || (count > 0 && dim == 0)) throw FormatError(FormatError::Kind::kMalformed, "bad embedding header");
  const std::size_t expected = payload + count * (8 + 4 * std::size_t{dim}) + 4;
  if (buf.size() != expected) throw FormatError(FormatError::Kind::kTruncated, "embedding file size mismatch");
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + expected - 4, 4);
  const std::uint32_t crc = crc_of(0, buf.data(), expected - 4);
  if (crc != stored) throw FormatError(FormatError::Kind::kChecksum, "embedding file checksum mismatch");
  ids.resize(count);
  if (count) std::memcpy(ids.data(), buf.data() + payload, count * 8);
  vectors.clear();
  vectors.reserve(count);
  const char* p = buf.data() + payload + count * 8;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::vector<float> v(dim);
    std::memcpy(v.data(), p, dim * sizeof(float));
    p += dim * sizeof(float);
    vectors.push_back(embedding::Embedding::from_unit(std::move(v)));
  }
  return crc;
}

Pipeline::Pipeline(std::shared_ptr<const embedding::Embedder> embedder, std::shared_ptr<index::AnnIndex> index,
                   std::shared_ptr<store::NoteStore> store, PipelineConfig config)
    : embedder_(std::move(embedder)), index_(std::move(index)), store_(std::move(store)), config_(std::move(config)) {
  if (!embedder_ || !index_ || !store_) throw InvalidArgument("pipeline requires embedder, index and store");
  if (config_.embed_batch == 0) throw InvalidArgument("embed batch must be positive");
  config_.chunking.validate();
}

std::filesystem::path Pipeline::manifest_path(const std::string& key) const {
  return config_.work_dir / "manifests" / (key + ".json");
}
std::filesystem::path Pipeline::chunks_path(const std::string& key) const {
  return config_.work_dir / "chunks" / (key + ".jsonl");
}
std::filesystem::path Pipeline::embeddings_path(const std::string& key) const {
  return config_.work_dir / "embeddings" / (key + ".bin");
}

std::optional<PartitionManifest> Pipeline::load_manifest(const std::string& key) const {
  std::ifstream in(manifest_path(key));
  if (!in) return std::nullopt;
  return manifest_from_json(nlohmann::json::parse(in));
}

void Pipeline::save_manifest(const PartitionManifest& m) const {
  write_atomically(manifest_path(m.partition_key), to_json(m).dump(2) + "\n");
}

void Pipeline::stage(std::string_view name, const std::string& key) const {
  if (hook_) hook_(name, key);
}

std::vector<store::NoteRecord> Pipeline::admitted(std::span<const store::NoteRecord> notes,
                                                  std::size_t& excluded) const {
  std::vector<store::NoteRecord> out;
  excluded = 0;
  for (const auto& n : notes) {
    if (exclude_ && exclude_(n)) {
      ++excluded;
      continue;
    }
    out.push_back(n);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.note_id < b.note_id; });
  return out;
}

std::vector<chunking::Chunk> Pipeline::chunk_all(std::span<const store::NoteRecord> notes) const {
  std::vector<chunking::Chunk> chunks;
  for (const auto& n : notes) {
    auto c = chunking::chunk_note(n.note_id, n.text, config_.chunking);
    for (auto& ch : c) chunks.push_back(std::move(ch));
  }
  return chunks;
}

std::vector<embedding::Embedding> Pipeline::embed_all(const std::vector<chunking::Chunk>& chunks) const {
  std::vector<embedding::Embedding> out;
  out.reserve(chunks.size());
  std::vector<std::string> batch;
  for (std::size_t i = 0; i < chunks.size(); i += config_.embed_batch) {
    batch.clear();
    for (std::size_t j = i; j < std::min(chunks.size(), i + config_.embed_batch); ++j) batch.push_back(chunks[j].text);
    for (auto& v : embedder_->embed_documents(batch)) out.push_back(std::move(v));
  }
  return out;
}

std::vector<index::VectorEntry> Pipeline::entries_for(std::span<const store::NoteRecord> notes,
                                                      const std::vector<chunking::Chunk>& chunks,
                                                      std::vector<embedding::Embedding> vectors) const {
  std::unordered_map<NoteId, index::AttributeSet> attrs;
  for (const auto& n : notes) attrs.emplace(n.note_id, store::attribute_set(n));
  std::vector<index::VectorEntry> entries;
  entries.reserve(chunks.size());
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto id = make_chunk_id(chunks[i].note_id, chunks[i].chunk_ordinal);
    if (index_->contains(id)) continue;
    entries.push_back({id, chunks[i].note_id, std::move(vectors[i]), attrs.at(chunks[i].note_id)});
  }
  return entries;
}

PartitionManifest Pipeline::run_partition(const std::string& key, std::span<const store::NoteRecord> notes) {
  for (const auto& n : notes) {
    if (partition_key(n) != key) {
      throw InvalidArgument("note " + std::to_string(n.note_id) + " does not belong to partition " + key);
    }
  }
  PartitionManifest m;
  m.partition_key = key;
  const auto kept = admitted(notes, m.excluded_count);
  m.note_count = kept.size();
  for (const auto& n : kept) {
    const auto line = nlohmann::json(n).dump() + "\n";
    m.notes_crc = crc_of(m.notes_crc, line.data(), line.size());
  }

  const auto previous = load_manifest(key);
  if (previous && previous->notes_crc == m.notes_crc && previous->note_count == m.note_count) {
    if (previous->status == PartitionStatus::kIndexed) return *previous;
    m.last_completed = previous->last_completed;
    m.embeddings_crc = previous->embeddings_crc;
  }

  try {
    const auto chunks = chunk_all(kept);
    std::string manifest;
    for (const auto& c : chunks) manifest += chunking::manifest_line(c) + "\n";
    write_atomically(chunks_path(key), manifest);
    m.chunk_count = chunks.size();
    m.chunks_crc = crc_of(0, manifest.data(), manifest.size());
    std::vector<ChunkId> ids;
    ids.reserve(chunks.size());
    for (const auto& c : chunks) ids.push_back(make_chunk_id(c.note_id, c.chunk_ordinal));
    stage("chunked", key);

    std::vector<embedding::Embedding> vectors;
    bool staged = false;
    if (m.last_completed >= PartitionStatus::kEmbedded && std::filesystem::exists(embeddings_path(key))) {
      try {
        std::vector<ChunkId> stored_ids;
        const auto crc = read_embeddings(embeddings_path(key), stored_ids, vectors);
        staged = stored_ids == ids && crc == m.embeddings_crc;
      } catch (const FormatError&) {
        staged = false;
      }
    }
    if (!staged) {
      vectors = embed_all(chunks);
      write_embeddings(embeddings_path(key), ids, vectors);
      std::vector<ChunkId> check_ids;
      std::vector<embedding::Embedding> check_vectors;
      m.embeddings_crc = read_embeddings(embeddings_path(key), check_ids, check_vectors);
    }
    m.status = m.last_completed = PartitionStatus::kEmbedded;
    m.error.clear();
    save_manifest(m);
    stage("embedded", key);

    store_->put_notes(kept);
    auto entries = entries_for(kept, chunks, std::move(vectors));
    if (!entries.empty()) index_->insert(entries);
    m.status = m.last_completed = PartitionStatus::kIndexed;
    save_manifest(m);
    stage("indexed", key);
    return m;
  } catch (const std::exception& e) {
    m.status = PartitionStatus::kFailed;
    m.error = e.what();
    try {
      save_manifest(m);
    } catch (...) {
    }
    throw;
  }
}

std::vector<PartitionManifest> Pipeline::run_all(std::span<const store::NoteRecord> notes) {
  std::vector<PartitionManifest> out;
  for (const auto& [key, group] : partition_notes(notes)) out.push_back(run_partition(key, group));
  return out;
}

UpdateReport Pipeline::incremental_update(std::span<const store::NoteRecord> notes) {
  UpdateReport report;
  if (notes.empty()) return report;

  std::set<NoteId> batch_ids;
  std::vector<store::NoteRecord> fresh;
  std::vector<NoteId> ids;
  for (const auto& n : notes) ids.push_back(n.note_id);
  std::set<NoteId> stored;
  for (std::size_t i = 0; i < ids.size(); i += store_->batch_cap()) {
    const std::span<const NoteId> slice(ids.data() + i, std::min(store_->batch_cap(), ids.size() - i));
    for (const auto& [id, rec] : store_->get_notes(slice).records) stored.insert(id);
  }
  for (const auto& n : notes) {
    if (stored.contains(n.note_id) || !batch_ids.insert(n.note_id).second) {
      report.skipped_duplicates.push_back(n.note_id);
      continue;
    }
    partition_key(n);
    fresh.push_back(n);
  }

  const auto kept = admitted(fresh, report.excluded);
  if (kept.empty()) return report;
  const auto chunks = chunk_all(kept);
  auto vectors = embed_all(chunks);
  store_->put_notes(kept);
  auto entries = entries_for(kept, chunks, std::move(vectors));
  if (!entries.empty()) index_->insert(entries);
  report.notes_added = kept.size();
  report.chunks_added = entries.size();
  return report;
}

void train_index_from_notes(index::AnnIndex& index, const embedding::Embedder& embedder,
                            std::span<const store::NoteRecord> notes, const chunking::ChunkingConfig& chunking,
                            std::size_t sample_size, std::uint64_t seed) {
  std::vector<std::string> texts;
  for (const auto& n : notes) {
    for (auto& c : chunking::chunk_note(n.note_id, n.text, chunking)) texts.push_back(std::move(c.text));
  }
  if (texts.empty()) throw InvalidArgument("no chunks to train on");
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(sample_size, texts.size());
  for (std::size_t i = 0; i < take; ++i) std::swap(texts[i], texts[i + rng() % (texts.size() - i)]);
  texts.resize(take);
  const auto sample = embedder.embed_documents(texts);
  index.train(sample, seed);
}

}  // namespace notesearch::ingest
