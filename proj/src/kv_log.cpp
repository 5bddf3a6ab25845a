#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

#include "notesearch/errors.hpp"
#include "notesearch/note_store.hpp"

namespace notesearch::store {

void MemoryKvBackend::put_batch(std::span<const std::pair<std::string, std::string>> rows) {
  std::unique_lock lock(mutex_);
  for (const auto& [k, v] : rows) rows_[k] = v;
}

std::vector<std::optional<std::string>> MemoryKvBackend::get_batch(std::span<const std::string> keys) const {
  std::shared_lock lock(mutex_);
  std::vector<std::optional<std::string>> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    auto it = rows_.find(k);
    out.push_back(it == rows_.end() ? std::nullopt : std::optional(it->second));
  }
  return out;
}

std::size_t MemoryKvBackend::size() const {
  std::shared_lock lock(mutex_);
  return rows_.size();
}

std::vector<std::string> MemoryKvBackend::scan_keys(std::string_view from, std::size_t limit) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (auto it = rows_.lower_bound(from); it != rows_.end() && out.size() < limit; ++it) out.push_back(it->first);
  return out;
}

namespace {

constexpr std::size_t kRecordHeader = 12;

std::uint32_t record_crc(const char* lens, std::string_view key, std::string_view value) {
  auto crc = static_cast<std::uint32_t>(::crc32(0, reinterpret_cast<const Bytef*>(lens), 8));
  crc = static_cast<std::uint32_t>(::crc32(crc, reinterpret_cast<const Bytef*>(key.data()), static_cast<uInt>(key.size())));
  return static_cast<std::uint32_t>(
      ::crc32(crc, reinterpret_cast<const Bytef*>(value.data()), static_cast<uInt>(value.size())));
}

bool pread_full(int fd, void* buf, std::size_t n, std::uint64_t offset) {
  auto* p = static_cast<char*>(buf);
  while (n > 0) {
    const ssize_t r = ::pread(fd, p, n, static_cast<off_t>(offset));
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
    offset += static_cast<std::uint64_t>(r);
  }
  return true;
}

}  // namespace

LogKvBackend::LogKvBackend(const std::filesystem::path& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw StorageError("cannot open " + path.string() + ": " + std::strerror(errno));
  struct stat st {};
  if (::fstat(fd_, &st) != 0) {
    ::close(fd_);
    throw StorageError("cannot stat " + path.string());
  }
  const auto size = static_cast<std::uint64_t>(st.st_size);

  std::uint64_t pos = 0;
  std::string key, value;
  while (pos + kRecordHeader <= size) {
    char hdr[kRecordHeader];
    if (!pread_full(fd_, hdr, kRecordHeader, pos)) break;
    std::uint32_t crc, klen, vlen;
    std::memcpy(&crc, hdr, 4);
    std::memcpy(&klen, hdr + 4, 4);
    std::memcpy(&vlen, hdr + 8, 4);
    const std::uint64_t total = kRecordHeader + std::uint64_t{klen} + vlen;
    if (pos + total > size) break;
    key.resize(klen);
    value.resize(vlen);
    if (!pread_full(fd_, key.data(), klen, pos + kRecordHeader)) break;
    if (!pread_full(fd_, value.data(), vlen, pos + kRecordHeader + klen)) break;
    if (record_crc(hdr + 4, key, value) != crc) break;
    directory_[key] = Location{pos + kRecordHeader + klen, vlen};
    pos += total;
  }
  if (pos < size) {
    dropped_ = static_cast<std::size_t>(size - pos);
    if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) {
      ::close(fd_);
      throw StorageError("cannot truncate torn tail of " + path.string());
    }
  }
  end_ = pos;
}

LogKvBackend::~LogKvBackend() {
  if (fd_ >= 0) ::close(fd_);
}

void LogKvBackend::put_batch(std::span<const std::pair<std::string, std::string>> rows) {
  if (rows.empty()) return;
  std::string buf;
  std::vector<std::pair<std::string_view, Location>> placed;
  placed.reserve(rows.size());
  std::unique_lock lock(mutex_);
  std::uint64_t offset = end_;
  for (const auto& [k, v] : rows) {
    if (k.size() > UINT32_MAX || v.size() > UINT32_MAX) throw StorageError("record too large");
    char hdr[kRecordHeader];
    const auto klen = static_cast<std::uint32_t>(k.size());
    const auto vlen = static_cast<std::uint32_t>(v.size());
    std::memcpy(hdr + 4, &klen, 4);
    std::memcpy(hdr + 8, &vlen, 4);
    const std::uint32_t crc = record_crc(hdr + 4, k, v);
    std::memcpy(hdr, &crc, 4);
    buf.append(hdr, kRecordHeader);
    buf.append(k);
    buf.append(v);
    placed.emplace_back(k, Location{offset + kRecordHeader + klen, vlen});
    offset += kRecordHeader + klen + vlen;
  }
  const char* p = buf.data();
  std::size_t left = buf.size();
  std::uint64_t at = end_;
  while (left > 0) {
    const ssize_t w = ::pwrite(fd_, p, left, static_cast<off_t>(at));
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) throw StorageError("write to " + path_.string() + " failed: " + std::strerror(errno));
    p += w;
    left -= static_cast<std::size_t>(w);
    at += static_cast<std::uint64_t>(w);
  }
  if (::fdatasync(fd_) != 0) throw StorageError("fdatasync failed on " + path_.string());
  for (const auto& [k, loc] : placed) directory_[std::string(k)] = loc;
  end_ = offset;
}

std::vector<std::optional<std::string>> LogKvBackend::get_batch(std::span<const std::string> keys) const {
  std::shared_lock lock(mutex_);
  std::vector<std::optional<std::string>> out(keys.size());
  struct Want {
    std::uint64_t offset;
    std::uint64_t length;
    std::size_t slot;
  };
  std::vector<Want> wants;
  wants.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    auto it = directory_.find(keys[i]);
    if (it != directory_.end()) wants.push_back({it->second.offset, it->second.length, i});
  }
  std::sort(wants.begin(), wants.end(), [](const Want& a, const Want& b) { return a.offset < b.offset; });

  // Records close together on disk are fetched with one read.
  constexpr std::uint64_t kMaxGap = 64 * 1024;
  constexpr std::uint64_t kMaxSpan = 8 * 1024 * 1024;
  std::string buffer;
  for (std::size_t i = 0; i < wants.size();) {
    const std::uint64_t begin = wants[i].offset;
    std::uint64_t end = begin + wants[i].length;
    std::size_t j = i + 1;
    while (j < wants.size() && wants[j].offset <= end + kMaxGap &&
           std::max(end, wants[j].offset + wants[j].length) - begin <= kMaxSpan) {
      end = std::max(end, wants[j].offset + wants[j].length);
      ++j;
    }
    buffer.resize(end - begin);
    if (!pread_full(fd_, buffer.data(), buffer.size(), begin)) {
      throw StorageError("read from " + path_.string() + " failed");
    }
    for (; i < j; ++i) out[wants[i].slot] = buffer.substr(wants[i].offset - begin, wants[i].length);
  }
  return out;
}

std::size_t LogKvBackend::size() const {
  std::shared_lock lock(mutex_);
  return directory_.size();
}

std::vector<std::string> LogKvBackend::scan_keys(std::string_view from, std::size_t limit) const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (auto it = directory_.lower_bound(from); it != directory_.end() && out.size() < limit; ++it) {
    out.push_back(it->first);
  }
  return out;
}

}  // namespace notesearch::store
