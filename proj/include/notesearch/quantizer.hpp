#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace notesearch::index {

enum class Quantization : std::uint32_t { kNone = 0, kScalar8 = 1 };

std::string_view to_string(Quantization q) noexcept;
Quantization parse_quantization(std::string_view name);

// Per-vector affine 8-bit code: x[i] ~ min + scale * codes[i],
// scale = (max(x) - min(x)) / 255. A constant vector has scale 0 and
// round-trips exactly.
struct ScalarCode {
  float min = 0.0f;
  float scale = 0.0f;
  std::vector<std::uint8_t> codes;
};

ScalarCode quantize(std::span<const float> v);
std::vector<float> dequantize(const ScalarCode& code);

// Writes v.size() codes to out.
void quantize_into(std::span<const float> v, std::uint8_t* out, float& min, float& scale) noexcept;

// dot(query, dequantize(code)) = min * sum(query) + scale * sum(query[i] * code[i]).
inline float asymmetric_score(float query_sum, float code_dot, float min, float scale) noexcept {
  return min * query_sum + scale * code_dot;
}

}  // namespace notesearch::index
