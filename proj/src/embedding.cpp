#include "notesearch/embedding.hpp"

#include <cctype>
#include <cmath>

#include "notesearch/chunker.hpp"
#include "notesearch/errors.hpp"

namespace notesearch::embedding {

Embedding Embedding::normalize(std::span<const float> raw) {
  if (raw.empty()) throw NormalizationError("cannot normalize an empty vector");
  double sq = 0.0;
  for (float x : raw) {
    if (!std::isfinite(x)) throw NormalizationError("vector has non-finite entries");
    sq += static_cast<double>(x) * x;
  }
  if (sq == 0.0) throw NormalizationError("cannot normalize a zero vector");
  const double norm = std::sqrt(sq);
  std::vector<float> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(raw[i] / norm);
  return Embedding(std::move(out));
}

Embedding Embedding::from_unit(std::vector<float> values) {
  double sq = 0.0;
  for (float x : values) {
    if (!std::isfinite(x)) throw NormalizationError("vector has non-finite entries");
    sq += static_cast<double>(x) * x;
  }
  if (values.empty() || std::abs(std::sqrt(sq) - 1.0) > kUnitTolerance) {
    throw NormalizationError("vector is not unit norm");
  }
  return Embedding(std::move(values));
}

Embedding l2_normalize(std::span<const float> raw) { return Embedding::normalize(raw); }

double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

const char* to_string(EmbedMode mode) noexcept {
  return mode == EmbedMode::kQuery ? "query" : "document";
}

ReferenceProvider::ReferenceProvider(std::size_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::uint64_t ReferenceProvider::token_hash(std::string_view token) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ kHashSeed;
  for (char c : token) {
    h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
    h *= 0x100000001b3ULL;
  }
  // splitmix64 finalizer
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

std::vector<std::vector<float>> ReferenceProvider::encode(std::span<const std::string> texts, EmbedMode) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<float> v(dimension_, 0.0f);
    bool any = false;
    for (const auto& span : chunking::tokenize(text)) {
      const std::string_view tok(text.data() + span.start_char, span.end_char - span.start_char);
      const auto first = static_cast<unsigned char>(tok.front());
      if (!(std::isalnum(first) || first >= 0x80)) continue;
      const auto h = token_hash(tok);
      v[h % dimension_] += (h >> 63) ? -1.0f : 1.0f;
      any = true;
    }
    // Collisions can cancel every count; fall back to e0 as for empty text.
    bool nonzero = false;
    for (float x : v) nonzero = nonzero || x != 0.0f;
    if (!any || !nonzero) {
      std::fill(v.begin(), v.end(), 0.0f);
      v[0] = 1.0f;
    }
    out.push_back(std::move(v));
  }
  return out;
}

Embedding reference_embed(std::string_view text, std::size_t dimension) {
  ReferenceProvider provider(dimension);
  const std::string s(text);
  return Embedding::normalize(provider.encode(std::span(&s, 1), EmbedMode::kDocument).front());
}

Embedder::Embedder(std::shared_ptr<EmbeddingProvider> provider, EmbedderConfig config)
    : provider_(std::move(provider)), config_(std::move(config)) {
  if (!provider_) throw InvalidArgument("embedder requires a provider");
  if (config_.dimension == 0) throw InvalidArgument("embedding dimension must be positive");
  if (provider_->dimension() != config_.dimension) {
    throw InvalidArgument("provider dimension " + std::to_string(provider_->dimension()) +
                          " does not match configured dimension " + std::to_string(config_.dimension));
  }
}

std::vector<Embedding> Embedder::embed_documents(std::span<const std::string> texts) const {
  if (texts.empty()) throw InvalidArgument("embed_documents requires at least one text");
  return run(texts, EmbedMode::kDocument);
}

std::string Embedder::query_text(std::string_view text) const {
  if (config_.query_instruction.empty()) return std::string(text);
  return config_.query_instruction + config_.instruction_separator + std::string(text);
}

Embedding Embedder::embed_query(std::string_view text) const {
  if (text.empty()) throw InvalidArgument("query text must be nonempty");
  const std::string prefixed = query_text(text);
  return run(std::span(&prefixed, 1), EmbedMode::kQuery).front();
}

std::vector<Embedding> Embedder::run(std::span<const std::string> texts, EmbedMode mode) const {
  auto raw = provider_->encode(texts, mode);
  if (raw.size() != texts.size()) {
    throw EmbeddingError("provider returned " + std::to_string(raw.size()) + " vectors for " +
                             std::to_string(texts.size()) + " texts",
                         false);
  }
  std::vector<Embedding> out;
  out.reserve(raw.size());
  for (auto& v : raw) {
    if (v.size() != config_.dimension) {
      throw EmbeddingError("provider returned a vector of dimension " + std::to_string(v.size()), false);
    }
    try {
      out.push_back(Embedding::normalize(v));
    } catch (const NormalizationError& e) {
      throw EmbeddingError(std::string("provider returned an invalid vector: ") + e.what(), false);
    }
  }
  return out;
}

}  // namespace notesearch::embedding
