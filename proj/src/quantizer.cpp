#include "notesearch/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "notesearch/errors.hpp"

namespace notesearch::index {

std::string_view to_string(Quantization q) noexcept {
  return q == Quantization::kScalar8 ? "scalar8" : "none";
}

Quantization parse_quantization(std::string_view name) {
  if (name == "none") return Quantization::kNone;
  if (name == "scalar8" || name == "scalar-8-bit") return Quantization::kScalar8;
  throw InvalidArgument("unknown quantization: " + std::string(name));
}

void quantize_into(std::span<const float> v, std::uint8_t* out, float& min, float& scale) noexcept {
  if (v.empty()) {
    min = 0.0f;
    scale = 0.0f;
    return;
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  min = *lo;
  scale = (*hi - *lo) / 255.0f;
  if (!(scale > 0.0f)) {
    scale = 0.0f;
    std::fill_n(out, v.size(), std::uint8_t{0});
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const float q = std::nearbyint((v[i] - min) / scale);
    out[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0f, 255.0f));
  }
}

ScalarCode quantize(std::span<const float> v) {
  ScalarCode code;
  code.codes.resize(v.size());
  quantize_into(v, code.codes.data(), code.min, code.scale);
  return code;
}

std::vector<float> dequantize(const ScalarCode& code) {
  std::vector<float> out(code.codes.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = code.min + code.scale * static_cast<float>(code.codes[i]);
  return out;
}

}  // namespace notesearch::index
