#pragma once

#include <cstdint>

namespace notesearch {

using NoteId = std::uint64_t;
using ChunkId = std::uint64_t;

// Chunk ids pack the owning note id and the chunk ordinal so that ascending
// chunk id order groups chunks by note.
inline constexpr unsigned kChunkOrdinalBits = 20;
inline constexpr std::uint64_t kMaxChunkOrdinal = (std::uint64_t{1} << kChunkOrdinalBits) - 1;
inline constexpr std::uint64_t kMaxPackedNoteId = (std::uint64_t{1} << (64 - kChunkOrdinalBits)) - 1;

// Throws InvalidArgument when note_id or ordinal do not fit.
ChunkId make_chunk_id(NoteId note_id, std::uint64_t ordinal);

constexpr NoteId chunk_note_id(ChunkId id) noexcept { return id >> kChunkOrdinalBits; }
constexpr std::uint32_t chunk_ordinal(ChunkId id) noexcept {
  return static_cast<std::uint32_t>(id & kMaxChunkOrdinal);
}

}  // namespace notesearch
