#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace notesearch::embedding {

// A unit-norm dense vector. Construction always goes through a checked path so
// every instance satisfies |v| = 1 within kUnitTolerance.
class Embedding {
 public:
  static constexpr double kUnitTolerance = 1e-6;

  Embedding() = default;

  // Throws NormalizationError on zero norm or non-finite entries.
  static Embedding normalize(std::span<const float> raw);
  // Accepts an already-unit vector; throws NormalizationError otherwise.
  static Embedding from_unit(std::vector<float> values);

  std::span<const float> values() const noexcept { return values_; }
  std::size_t dimension() const noexcept { return values_.size(); }
  float operator[](std::size_t i) const noexcept { return values_[i]; }
  bool empty() const noexcept { return values_.empty(); }

  bool operator==(const Embedding&) const = default;

 private:
  explicit Embedding(std::vector<float> values) : values_(std::move(values)) {}
  std::vector<float> values_;
};

Embedding l2_normalize(std::span<const float> raw);

// Dot product accumulated in double, left to right.
double dot(std::span<const float> a, std::span<const float> b) noexcept;

enum class EmbedMode { kDocument, kQuery };

const char* to_string(EmbedMode mode) noexcept;

// Backend mapping texts to raw vectors. Implementations must be safe for
// concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<std::vector<float>> encode(std::span<const std::string> texts, EmbedMode mode) = 0;
};

// Hashed bag-of-tokens embedder. Alphanumeric tokens are lower-cased and
// hashed (FNV-1a 64 seeded with kHashSeed, then a splitmix64 finalizer) to a
// (bucket, sign) pair: bucket = h % dimension, sign = top bit. Punctuation
// tokens are ignored. A text without alphanumeric tokens maps to e0.
class ReferenceProvider final : public EmbeddingProvider {
 public:
  static constexpr std::uint64_t kHashSeed = 0x9e3779b97f4a7c15ULL;

  explicit ReferenceProvider(std::size_t dimension);

  std::string id() const override { return "reference-hash-v1"; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<float>> encode(std::span<const std::string> texts, EmbedMode mode) override;

  static std::uint64_t token_hash(std::string_view token) noexcept;

 private:
  std::size_t dimension_;
};

Embedding reference_embed(std::string_view text, std::size_t dimension);

struct EmbedderConfig {
  static constexpr const char* kDefaultInstruction =
      "Given a clinical question, retrieve relevant passages from clinical notes";

  std::size_t dimension = 1024;
  std::string query_instruction = kDefaultInstruction;
  std::string instruction_separator = "\n";
  std::string provider_id = "reference-hash-v1";
};

// Front end that validates provider output and applies the query instruction.
class Embedder {
 public:
  Embedder(std::shared_ptr<EmbeddingProvider> provider, EmbedderConfig config);

  std::vector<Embedding> embed_documents(std::span<const std::string> texts) const;
  Embedding embed_query(std::string_view text) const;

  // The exact text sent to the provider for a query.
  std::string query_text(std::string_view text) const;

  const EmbedderConfig& config() const noexcept { return config_; }
  std::size_t dimension() const noexcept { return config_.dimension; }

 private:
  std::vector<Embedding> run(std::span<const std::string> texts, EmbedMode mode) const;

  std::shared_ptr<EmbeddingProvider> provider_;
  EmbedderConfig config_;
};

}  // namespace notesearch::embedding
