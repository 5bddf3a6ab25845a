#include "notesearch/chunker.hpp"

#include <algorithm>

#include <json.hpp>

#include "notesearch/errors.hpp"

namespace notesearch {

ChunkId make_chunk_id(NoteId note_id, std::uint64_t ordinal) {
  if (note_id > kMaxPackedNoteId) {
    throw InvalidArgument("note id " + std::to_string(note_id) + " too large for chunk id packing");
  }
  if (ordinal > kMaxChunkOrdinal) {
    throw InvalidArgument("chunk ordinal " + std::to_string(ordinal) + " too large");
  }
  return (note_id << kChunkOrdinalBits) | ordinal;
}

namespace chunking {

namespace {

bool is_space(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_word(unsigned char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

void ChunkingConfig::validate() const {
  if (chunk_tokens == 0) throw InvalidArgument("chunk_tokens must be positive");
  if (overlap_tokens >= chunk_tokens) {
    throw InvalidArgument("overlap_tokens must be smaller than chunk_tokens");
  }
  if (boundary_window_tokens >= chunk_tokens - overlap_tokens) {
    throw InvalidArgument("boundary_window_tokens must be smaller than chunk_tokens - overlap_tokens");
  }
}

std::vector<TokenSpan> WordPunctTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> spans;
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      ++i;
      continue;
    }
    const bool word = is_word(c);
    std::size_t j = i + 1;
    while (j < n) {
      const auto d = static_cast<unsigned char>(text[j]);
      if (is_space(d) || is_word(d) != word) break;
      ++j;
    }
    spans.push_back({i, j, spans.size()});
    i = j;
  }
  return spans;
}

const Tokenizer& default_tokenizer() {
  static const WordPunctTokenizer tokenizer;
  return tokenizer;
}

std::vector<TokenSpan> tokenize(std::string_view text) { return default_tokenizer().tokenize(text); }

BreakKind classify_gap(std::string_view gap) noexcept {
  const auto newlines = std::count(gap.begin(), gap.end(), '\n');
  if (newlines >= 2) return BreakKind::kParagraph;
  if (newlines == 1) return BreakKind::kLine;
  return BreakKind::kNone;
}

std::vector<Chunk> chunk_note(NoteId note_id, std::string_view text, const ChunkingConfig& cfg,
                              const Tokenizer& tokenizer) {
  cfg.validate();
  const auto spans = tokenizer.tokenize(text);
  const std::size_t n = spans.size();
  std::vector<Chunk> chunks;
  if (n == 0) return chunks;

  // breaks[j] describes the gap after token j.
  std::vector<BreakKind> breaks(n, BreakKind::kNone);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    breaks[j] = classify_gap(text.substr(spans[j].end_char, spans[j + 1].start_char - spans[j].end_char));
  }

  std::size_t start = 0;
  while (true) {
    std::size_t end = start + cfg.chunk_tokens - 1;
    const bool last = end >= n - 1;
    if (last) {
      end = n - 1;
    } else {
      const std::size_t lo = end >= cfg.boundary_window_tokens ? end - cfg.boundary_window_tokens : 0;
      std::size_t best = end;
      BreakKind best_kind = BreakKind::kNone;
      for (std::size_t j = end + 1; j-- > std::max(lo, start);) {
        if (breaks[j] > best_kind) {
          best_kind = breaks[j];
          best = j;
          if (best_kind == BreakKind::kParagraph) break;
        }
      }
      end = best;
    }

    Chunk chunk;
    chunk.note_id = note_id;
    chunk.chunk_ordinal = chunks.size();
    chunk.first_token = start;
    chunk.last_token = end;
    chunk.char_start = spans[start].start_char;
    chunk.char_end = spans[end].end_char;
    chunk.text = std::string(text.substr(chunk.char_start, chunk.char_end - chunk.char_start));
    chunks.push_back(std::move(chunk));

    if (last) break;
    start = end + 1 - cfg.overlap_tokens;
  }
  return chunks;
}

std::size_t count_chunks(std::size_t n_tokens, const ChunkingConfig& cfg) {
  cfg.validate();
  if (n_tokens == 0) return 0;
  if (n_tokens <= cfg.chunk_tokens) return 1;
  const std::size_t stride = cfg.stride();
  return (n_tokens - cfg.chunk_tokens + stride - 1) / stride + 1;
}

std::string manifest_line(const Chunk& chunk) {
  nlohmann::ordered_json j;
  j["note_id"] = chunk.note_id;
  j["chunk_ordinal"] = chunk.chunk_ordinal;
  j["first_token"] = chunk.first_token;
  j["last_token"] = chunk.last_token;
  j["char_start"] = chunk.char_start;
  j["char_end"] = chunk.char_end;
  return j.dump();
}

}  // namespace chunking
}  // namespace notesearch
