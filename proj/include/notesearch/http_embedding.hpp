#pragma once

#include <chrono>
#include <string>

#include "notesearch/embedding.hpp"

namespace notesearch::embedding {

// Remote provider speaking the embedding transport:
//   POST <path>  {"texts": [...], "mode": "document" | "query"}
//   200          {"vectors": [[f32, ...], ...]}
// Connection failures, timeouts, 429 and 5xx raise a transient EmbeddingError;
// other statuses and malformed bodies raise a permanent one.
class HttpProvider final : public EmbeddingProvider {
 public:
  struct Options {
    std::string host = "127.0.0.1";
    int port = 8081;
    std::string path = "/v1/embed";
    std::size_t dimension = 1024;
    std::string provider_id = "http";
    std::chrono::milliseconds timeout{30000};
  };

  explicit HttpProvider(Options options);

  std::string id() const override { return options_.provider_id; }
  std::size_t dimension() const override { return options_.dimension; }
  std::vector<std::vector<float>> encode(std::span<const std::string> texts, EmbedMode mode) override;

 private:
  Options options_;
};

}  // namespace notesearch::embedding
