#include "notesearch/http_embedding.hpp"

#include <httplib.h>
#include <json.hpp>

#include "notesearch/errors.hpp"

namespace notesearch::embedding {

HttpProvider::HttpProvider(Options options) : options_(std::move(options)) {
  if (options_.dimension == 0) throw InvalidArgument("embedding dimension must be positive");
}

std::vector<std::vector<float>> HttpProvider::encode(std::span<const std::string> texts, EmbedMode mode) {
  nlohmann::json body;
  body["texts"] = std::vector<std::string>(texts.begin(), texts.end());
  body["mode"] = to_string(mode);

  httplib::Client client(options_.host, options_.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());

  auto res = client.Post(options_.path, body.dump(), "application/json");
  if (!res) {
    throw EmbeddingError("embedding transport failed: " + httplib::to_string(res.error()), true);
  }
  if (res->status == 429 || res->status >= 500) {
    throw EmbeddingError("embedding provider returned HTTP " + std::to_string(res->status), true);
  }
  if (res->status != 200) {
    throw EmbeddingError("embedding provider rejected request with HTTP " + std::to_string(res->status), false);
  }

  std::vector<std::vector<float>> vectors;
  try {
    const auto parsed = nlohmann::json::parse(res->body);
    vectors = parsed.at("vectors").get<std::vector<std::vector<float>>>();
  } catch (const nlohmann::json::exception& e) {
    throw EmbeddingError(std::string("malformed embedding response: ") + e.what(), false);
  }
  return vectors;
}

}  // namespace notesearch::embedding
