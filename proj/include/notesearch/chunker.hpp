#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "notesearch/types.hpp"

namespace notesearch::chunking {

struct ChunkingConfig {
  std::size_t chunk_tokens = 300;
  std::size_t overlap_tokens = 50;
  // How far a window end may retract to land on a paragraph or line break.
  std::size_t boundary_window_tokens = 30;

  std::size_t stride() const noexcept { return chunk_tokens - overlap_tokens; }
  // Throws InvalidArgument unless 0 < chunk_tokens, overlap < chunk_tokens and
  // boundary_window < chunk_tokens - overlap.
  void validate() const;
};

// Byte offsets into the source text; end is exclusive.
struct TokenSpan {
  std::size_t start_char = 0;
  std::size_t end_char = 0;
  std::size_t token_index = 0;

  bool operator==(const TokenSpan&) const = default;
};

struct Chunk {
  NoteId note_id = 0;
  std::size_t chunk_ordinal = 0;
  std::string text;
  std::size_t first_token = 0;
  std::size_t last_token = 0;  // inclusive
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive

  bool operator==(const Chunk&) const = default;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
};

// Splits on whitespace; inside each whitespace-delimited word, maximal runs of
// alphanumerics and maximal runs of punctuation become separate tokens. Bytes
// >= 0x80 count as alphanumeric so UTF-8 sequences are never split.
class WordPunctTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

std::vector<TokenSpan> tokenize(std::string_view text);

enum class BreakKind { kNone = 0, kLine = 1, kParagraph = 2 };

// Classifies the whitespace between two adjacent tokens.
BreakKind classify_gap(std::string_view gap) noexcept;

std::vector<Chunk> chunk_note(NoteId note_id, std::string_view text, const ChunkingConfig& cfg,
                              const Tokenizer& tokenizer = default_tokenizer());

// Chunk count for a boundary-free note of n tokens.
std::size_t count_chunks(std::size_t n_tokens, const ChunkingConfig& cfg);

// One line of the chunk manifest (JSON object, no trailing newline).
std::string manifest_line(const Chunk& chunk);

}  // namespace notesearch::chunking
