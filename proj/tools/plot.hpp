#pragma once

#include <string>

#include <json.hpp>

namespace notesearch::tools {

// Stacked bars of median embed/search/hydrate time per concurrency level, with
// the p95 of the total drawn as a tick.
std::string latency_svg(const nlohmann::json& report);

// Accuracy against retrieval depth with Wilson interval whiskers.
std::string k_sweep_svg(const nlohmann::json& report);

}  // namespace notesearch::tools
