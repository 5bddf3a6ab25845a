// Binary index file. Layout (little-endian) is documented in
// docs/index_format.md; keep the two in sync.

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

#include "ann_index_state.hpp"
#include "notesearch/ann_index.hpp"
#include "notesearch/errors.hpp"

namespace notesearch::index {

static_assert(std::endian::native == std::endian::little, "index files are little-endian");

namespace {

constexpr char kMagic[8] = {'N', 'S', 'A', 'N', 'N', 'I', 'D', 'X'};
constexpr char kTrailerMagic[4] = {'N', 'S', 'E', 'I'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderSize = 80;
constexpr std::size_t kDirEntrySize = 24;

std::uint32_t crc_update(std::uint32_t crc, const void* data, std::size_t n) {
  const auto* p = static_cast<const Bytef*>(data);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = static_cast<std::uint32_t>(::crc32(crc, p, chunk));
    p += chunk;
    n -= chunk;
  }
  return crc;
}

class CrcWriter {
 public:
  explicit CrcWriter(std::ofstream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    crc_ = crc_update(crc_, data, n);
    pos_ += n;
  }
  template <typename T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    if (!v.empty()) bytes(v.data(), v.size() * sizeof(T));
  }
  std::uint32_t crc() const noexcept { return crc_; }
  std::uint64_t pos() const noexcept { return pos_; }

 private:
  std::ofstream& out_;
  std::uint32_t crc_ = 0;
  std::uint64_t pos_ = 0;
};

class CrcReader {
 public:
  CrcReader(std::ifstream& in, std::uint64_t file_size) : in_(in), size_(file_size) {}

  void bytes(void* data, std::size_t n) {
    if (pos_ + n > size_) throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
    crc_ = crc_update(crc_, data, n);
    pos_ += n;
  }
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  template <typename T>
  void array(std::vector<T>& v, std::uint64_t count) {
    require(count * sizeof(T));
    v.resize(count);
    if (count) bytes(v.data(), count * sizeof(T));
  }
  // Rejects counts that cannot fit in the remaining file before allocating.
  void require(std::uint64_t n) const {
    if (n > size_ - pos_) throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
  }
  void expect_pos(std::uint64_t want) const {
    if (pos_ != want) throw FormatError(FormatError::Kind::kMalformed, "index file section offset mismatch");
  }
  std::uint32_t crc() const noexcept { return crc_; }
  std::uint64_t pos() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return size_ - pos_; }

 private:
  std::ifstream& in_;
  std::uint64_t size_;
  std::uint32_t crc_ = 0;
  std::uint64_t pos_ = 0;
};

struct RawHeader {
  char magic[8];
  std::uint32_t version;
  std::uint32_t dimension;
  std::uint32_t num_partitions;
  std::uint32_t nprobe;
  std::uint32_t spill;
  std::uint32_t rescore_budget;
  std::uint32_t quantization;
  std::uint32_t trained;
  std::uint64_t entry_count;
  std::uint64_t generation;
  std::uint64_t entries_offset;
  std::uint64_t dictionary_offset;
  std::uint64_t reserved;
};
static_assert(sizeof(RawHeader) == kHeaderSize);

struct RawDirEntry {
  std::uint64_t offset;
  std::uint64_t length;
  std::uint32_t members;
  std::uint32_t crc;
};
static_assert(sizeof(RawDirEntry) == kDirEntrySize);

std::uint64_t entry_record_size(std::uint32_t dim) {
  return 16 + 4 * kNumCategorical + 8 * kNumNumeric + 4ull * dim;
}

std::uint64_t partition_block_size(std::uint64_t members, std::uint32_t dim, bool sq8) {
  return members * 4 + (sq8 ? members * (8 + dim) : 0);
}

IndexConfig config_from(const RawHeader& h) {
  IndexConfig c;
  c.num_partitions = h.num_partitions;
  c.nprobe = h.nprobe;
  c.spill = h.spill;
  c.rescore_budget = h.rescore_budget;
  if (h.quantization > 1) throw FormatError(FormatError::Kind::kMalformed, "unknown quantization in index header");
  c.quantization = static_cast<Quantization>(h.quantization);
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::kMalformed, std::string("invalid index config: ") + e.what());
  }
  return c;
}

void check_magic_version(const RawHeader& h) {
  if (std::memcmp(h.magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "not an index file (bad magic)");
  }
  if (h.version != kVersion) {
    throw FormatError(FormatError::Kind::kBadVersion, "unsupported index version " + std::to_string(h.version));
  }
  if (h.dimension == 0) throw FormatError(FormatError::Kind::kMalformed, "index dimension is zero");
}

}  // namespace

void AnnIndex::save(const std::filesystem::path& path) const {
  std::shared_lock lock(state_->mutex);
  const auto& s = *state_;
  const auto dim = static_cast<std::uint32_t>(s.dimension);
  const std::uint32_t k = s.config.num_partitions;
  const bool sq8 = s.config.quantization == Quantization::kScalar8;

  std::vector<RawDirEntry> dir(k);
  std::uint64_t offset = kHeaderSize + (s.trained ? 4ull * k * dim : 0) + kDirEntrySize * k;
  for (std::uint32_t p = 0; p < k; ++p) {
    const auto& part = s.partitions[p];
    dir[p].offset = offset;
    dir[p].members = static_cast<std::uint32_t>(part.members.size());
    dir[p].length = partition_block_size(part.members.size(), dim, sq8);
    std::uint32_t crc = 0;
    if (!part.members.empty()) {
      crc = crc_update(crc, part.members.data(), part.members.size() * 4);
      if (sq8) {
        crc = crc_update(crc, part.mins.data(), part.mins.size() * 4);
        crc = crc_update(crc, part.scales.data(), part.scales.size() * 4);
        crc = crc_update(crc, part.codes.data(), part.codes.size());
      }
    }
    dir[p].crc = crc;
    offset += dir[p].length;
  }

  RawHeader h{};
  std::memcpy(h.magic, kMagic, sizeof(kMagic));
  h.version = kVersion;
  h.dimension = dim;
  h.num_partitions = k;
  h.nprobe = s.config.nprobe;
  h.spill = s.config.spill;
  h.rescore_budget = s.config.rescore_budget;
  h.quantization = static_cast<std::uint32_t>(s.config.quantization);
  h.trained = s.trained ? 1 : 0;
  h.entry_count = s.size();
  h.generation = s.generation;
  h.entries_offset = offset;
  h.dictionary_offset = offset + entry_record_size(dim) * s.size();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open " + tmp.string() + " for writing");
    CrcWriter w(out);
    w.pod(h);
    if (s.trained) w.array(s.centroids);
    for (const auto& e : dir) w.pod(e);
    for (const auto& part : s.partitions) {
      w.array(part.members);
      if (sq8) {
        w.array(part.mins);
        w.array(part.scales);
        w.array(part.codes);
      }
    }
    for (std::size_t e = 0; e < s.size(); ++e) {
      w.pod(s.chunk_ids[e]);
      w.pod(s.note_ids[e]);
      w.bytes(s.cat_tokens.data() + e * kNumCategorical, 4 * kNumCategorical);
      w.bytes(s.numeric.data() + e * kNumNumeric, 8 * kNumNumeric);
      w.bytes(s.vector_at(e), 4ull * dim);
    }
    for (const auto& dict : s.dictionaries) {
      w.pod(static_cast<std::uint32_t>(dict.tokens.size() - 1));
      for (std::size_t t = 1; t < dict.tokens.size(); ++t) {
        w.pod(static_cast<std::uint32_t>(dict.tokens[t].size()));
        w.bytes(dict.tokens[t].data(), dict.tokens[t].size());
      }
    }
    const std::uint32_t crc = w.crc();
    out.write(reinterpret_cast<const char*>(&crc), 4);
    out.write(kTrailerMagic, 4);
    out.flush();
    if (!out) throw StorageError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot move index into place: " + ec.message());
}

std::unique_ptr<AnnIndex> AnnIndex::load(const std::filesystem::path& path) {
  std::error_code ec;
  const auto file_size = std::filesystem::file_size(path, ec);
  if (ec) throw StorageError("cannot stat " + path.string() + ": " + ec.message());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (in.gcount() == static_cast<std::streamsize>(sizeof(magic)) && std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(FormatError::Kind::kBadMagic, "not an index file (bad magic)");
  }
  if (file_size < kHeaderSize + 8) throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
  in.clear();
  in.seekg(0);
  CrcReader r(in, file_size - 8);

  const auto h = r.pod<RawHeader>();
  check_magic_version(h);
  const auto config = config_from(h);
  const std::uint32_t dim = h.dimension;
  const std::uint32_t k = h.num_partitions;
  const bool sq8 = config.quantization == Quantization::kScalar8;

  auto index = std::make_unique<AnnIndex>(dim, config);
  auto& s = *index->state_;
  s.trained = h.trained != 0;
  s.generation = h.generation;
  if (s.trained) r.array(s.centroids, static_cast<std::uint64_t>(k) * dim);

  std::vector<RawDirEntry> dir;
  r.array(dir, k);
  for (std::uint32_t p = 0; p < k; ++p) {
    r.expect_pos(dir[p].offset);
    if (dir[p].length != partition_block_size(dir[p].members, dim, sq8)) {
      throw FormatError(FormatError::Kind::kMalformed, "partition block length mismatch");
    }
    auto& part = s.partitions[p];
    r.array(part.members, dir[p].members);
    if (sq8) {
      r.array(part.mins, dir[p].members);
      r.array(part.scales, dir[p].members);
      r.array(part.codes, static_cast<std::uint64_t>(dir[p].members) * dim);
    }
    for (auto m : part.members) {
      if (m >= h.entry_count) throw FormatError(FormatError::Kind::kMalformed, "partition member out of range");
    }
  }

  r.expect_pos(h.entries_offset);
  r.require(entry_record_size(dim) * h.entry_count);
  const std::size_t n = h.entry_count;
  s.chunk_ids.resize(n);
  s.note_ids.resize(n);
  s.cat_tokens.resize(n * kNumCategorical);
  s.numeric.resize(n * kNumNumeric);
  s.vectors.resize(n * dim);
  for (std::size_t e = 0; e < n; ++e) {
    r.bytes(&s.chunk_ids[e], 8);
    r.bytes(&s.note_ids[e], 8);
    r.bytes(s.cat_tokens.data() + e * kNumCategorical, 4 * kNumCategorical);
    r.bytes(s.numeric.data() + e * kNumNumeric, 8 * kNumNumeric);
    r.bytes(s.vectors.data() + e * dim, 4ull * dim);
  }

  r.expect_pos(h.dictionary_offset);
  for (auto& dict : s.dictionaries) {
    const auto count = r.pod<std::uint32_t>();
    r.require(4ull * count);
    for (std::uint32_t t = 0; t < count; ++t) {
      const auto len = r.pod<std::uint32_t>();
      r.require(len);
      std::string tok(len, '\0');
      r.bytes(tok.data(), len);
      if (dict.intern(tok) != t + 1) throw FormatError(FormatError::Kind::kMalformed, "duplicate dictionary token");
    }
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::kMalformed, "trailing bytes before checksum");

  std::uint32_t stored_crc = 0;
  char trailer[4];
  in.read(reinterpret_cast<char*>(&stored_crc), 4);
  in.read(trailer, 4);
  if (!in) throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
  if (stored_crc != r.crc() || std::memcmp(trailer, kTrailerMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kChecksum, "index checksum mismatch");
  }

  for (std::size_t f = 0; f < kNumCategorical; ++f) {
    const auto limit = s.dictionaries[f].tokens.size();
    for (std::size_t e = 0; e < n; ++e) {
      if (s.cat_tokens[e * kNumCategorical + f] >= limit) {
        throw FormatError(FormatError::Kind::kMalformed, "attribute token out of range");
      }
    }
  }
  s.by_chunk.reserve(n);
  for (std::size_t e = 0; e < n; ++e) {
    if (!s.by_chunk.emplace(s.chunk_ids[e], static_cast<std::uint32_t>(e)).second) {
      throw FormatError(FormatError::Kind::kMalformed, "duplicate chunk id in index file");
    }
  }
  return index;
}

IndexFileReader::IndexFileReader(const std::filesystem::path& path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw StorageError("cannot open " + path.string());
  RawHeader h{};
  const auto got = ::pread(fd_, &h, sizeof(h), 0);
  if (got >= static_cast<ssize_t>(sizeof(kMagic)) && std::memcmp(h.magic, kMagic, sizeof(kMagic)) != 0) {
    ::close(fd_);
    throw FormatError(FormatError::Kind::kBadMagic, "not an index file (bad magic)");
  }
  if (got != static_cast<ssize_t>(sizeof(h))) {
    ::close(fd_);
    throw FormatError(FormatError::Kind::kTruncated, "index file is truncated");
  }
  try {
    check_magic_version(h);
    header_.version = h.version;
    header_.dimension = h.dimension;
    header_.config = config_from(h);
  } catch (...) {
    ::close(fd_);
    throw;
  }
  header_.trained = h.trained != 0;
  header_.entry_count = h.entry_count;
  header_.generation = h.generation;

  const std::uint64_t dir_offset = kHeaderSize + (header_.trained ? 4ull * h.num_partitions * h.dimension : 0);
  std::vector<RawDirEntry> raw(h.num_partitions);
  const auto bytes = static_cast<ssize_t>(raw.size() * sizeof(RawDirEntry));
  if (::pread(fd_, raw.data(), static_cast<std::size_t>(bytes), static_cast<off_t>(dir_offset)) != bytes) {
    ::close(fd_);
    throw FormatError(FormatError::Kind::kTruncated, "index directory is truncated");
  }
  directory_.reserve(raw.size());
  for (const auto& e : raw) directory_.push_back({e.offset, e.length, e.members, e.crc});
}

IndexFileReader::~IndexFileReader() {
  if (fd_ >= 0) ::close(fd_);
}

IndexFileReader::PartitionBlock IndexFileReader::read_partition(std::uint32_t partition) const {
  if (partition >= directory_.size()) throw InvalidArgument("partition out of range");
  const auto& e = directory_[partition];
  const bool sq8 = header_.config.quantization == Quantization::kScalar8;
  if (e.length != partition_block_size(e.members, header_.dimension, sq8)) {
    throw FormatError(FormatError::Kind::kMalformed, "partition block length mismatch");
  }
  std::vector<char> buf(e.length);
  if (e.length > 0 &&
      ::pread(fd_, buf.data(), buf.size(), static_cast<off_t>(e.offset)) != static_cast<ssize_t>(buf.size())) {
    throw FormatError(FormatError::Kind::kTruncated, "partition block is truncated");
  }
  if (crc_update(0, buf.data(), buf.size()) != e.crc) {
    throw FormatError(FormatError::Kind::kChecksum, "partition block checksum mismatch");
  }
  PartitionBlock block;
  const std::size_t m = e.members;
  const char* p = buf.data();
  block.entry_indices.resize(m);
  std::memcpy(block.entry_indices.data(), p, m * 4);
  p += m * 4;
  if (sq8) {
    block.mins.resize(m);
    block.scales.resize(m);
    block.codes.resize(m * header_.dimension);
    std::memcpy(block.mins.data(), p, m * 4);
    p += m * 4;
    std::memcpy(block.scales.data(), p, m * 4);
    p += m * 4;
    std::memcpy(block.codes.data(), p, block.codes.size());
  }
  return block;
}

}  // namespace notesearch::index
