#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "notesearch/attributes.hpp"
#include "notesearch/sync.hpp"
#include "notesearch/types.hpp"

namespace notesearch::store {

struct PatientInfo {
  std::string mrn;
  std::string name;
  std::string birth_date;  // YYYY-MM-DD
  std::string sex;
  bool operator==(const PatientInfo&) const = default;
};

struct AuthorInfo {
  std::string name;
  std::string role;
  bool operator==(const AuthorInfo&) const = default;
};

struct NoteRecord {
  NoteId note_id = 0;
  std::string text;
  PatientInfo patient;
  std::string note_category;
  std::string encounter_type;
  std::string department;
  std::string specialty;
  AuthorInfo author;
  std::string filed_time;     // ISO-8601 UTC, e.g. 2024-12-18T09:35:42Z
  std::string creation_time;  // ISO-8601 UTC

  bool operator==(const NoteRecord&) const = default;
};

void to_json(nlohmann::json& j, const NoteRecord& r);
void from_json(const nlohmann::json& j, NoteRecord& r);

// Days since 1970-01-01 for "YYYY-MM-DD" or an ISO-8601 timestamp.
// Throws InvalidArgument on malformed input.
std::int64_t days_since_epoch(std::string_view date_or_timestamp);

// Filterable attributes the index stores for every chunk of this note.
index::AttributeSet attribute_set(const NoteRecord& r);

// Salt-and-reverse row key: two lower-case hex digits of (id mod 256), '#',
// then the 20-digit zero-padded decimal id reversed.
// make_row_key(12345) == "39#54321000000000000000".
std::string make_row_key(std::int64_t note_id);
// Inverse of make_row_key; throws InvalidArgument on malformed keys.
std::uint64_t decode_row_key(std::string_view key);

// Narrow ordered key-value interface so a remote wide-column store can replace
// the embedded one.
class KvBackend {
 public:
  virtual ~KvBackend() = default;
  virtual void put_batch(std::span<const std::pair<std::string, std::string>> rows) = 0;
  // One result per key, in order.
  virtual std::vector<std::optional<std::string>> get_batch(std::span<const std::string> keys) const = 0;
  virtual std::size_t size() const = 0;
  // Keys in ascending order starting at `from` (inclusive), at most `limit`.
  virtual std::vector<std::string> scan_keys(std::string_view from, std::size_t limit) const = 0;
};

class MemoryKvBackend final : public KvBackend {
 public:
  void put_batch(std::span<const std::pair<std::string, std::string>> rows) override;
  std::vector<std::optional<std::string>> get_batch(std::span<const std::string> keys) const override;
  std::size_t size() const override;
  std::vector<std::string> scan_keys(std::string_view from, std::size_t limit) const override;

 private:
  mutable WriterPreferringMutex mutex_;
  std::map<std::string, std::string, std::less<>> rows_;
};

// Append-only log file with an in-memory ordered key directory. Each record is
// [u32 crc32][u32 key_len][u32 value_len][key][value], CRC over the three
// fields after it. Replay on open stops at the first torn or corrupt record
// and truncates the file there.
class LogKvBackend final : public KvBackend {
 public:
  explicit LogKvBackend(const std::filesystem::path& path);
  ~LogKvBackend() override;
  LogKvBackend(const LogKvBackend&) = delete;
  LogKvBackend& operator=(const LogKvBackend&) = delete;

  void put_batch(std::span<const std::pair<std::string, std::string>> rows) override;
  std::vector<std::optional<std::string>> get_batch(std::span<const std::string> keys) const override;
  std::size_t size() const override;
  std::vector<std::string> scan_keys(std::string_view from, std::size_t limit) const override;

  std::size_t recovered_bytes_dropped() const noexcept { return dropped_; }

 private:
  struct Location {
    std::uint64_t offset;  // of the value bytes
    std::uint32_t length;
  };
  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t end_ = 0;
  std::size_t dropped_ = 0;
  mutable WriterPreferringMutex mutex_;
  std::map<std::string, Location, std::less<>> directory_;
};

struct GetResult {
  std::unordered_map<NoteId, NoteRecord> records;
  std::vector<NoteId> missing;
};

class NoteStore {
 public:
  static constexpr std::size_t kDefaultBatchCap = 1000;

  explicit NoteStore(std::unique_ptr<KvBackend> backend, std::size_t batch_cap = kDefaultBatchCap);

  // Throws InvalidArgument on a duplicate id within the batch or empty text.
  std::size_t put_notes(std::span<const NoteRecord> records);
  // Single backend round trip. Throws InvalidArgument above the batch cap.
  GetResult get_notes(std::span<const NoteId> ids) const;
  std::optional<NoteRecord> get_note(NoteId id) const;

  std::size_t size() const { return backend_->size(); }
  std::size_t batch_cap() const noexcept { return batch_cap_; }

 private:
  std::unique_ptr<KvBackend> backend_;
  std::size_t batch_cap_;
  std::mutex write_mutex_;
};

std::vector<NoteRecord> read_notes_jsonl(const std::filesystem::path& path);
void write_notes_jsonl(const std::filesystem::path& path, std::span<const NoteRecord> notes);

}  // namespace notesearch::store
