#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace notesearch::stats {

// ---- inter-rater agreement --------------------------------------------------

// (p_o - p_e) / (1 - p_e) over two equal-length rating vectors. Throws
// InvalidArgument on length mismatch or empty input and UndefinedStatistic
// when p_e = 1.
double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b);

// ratings[item][rater]; every item needs the same number (>= 2) of raters and
// there must be at least two items.
double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings);

// Interval-metric alpha over ratings[item][rater], nullopt = missing. Items
// with fewer than two values are not pairable and are ignored. Throws
// InvalidArgument with fewer than two pairable values and UndefinedStatistic
// when expected disagreement is zero.
double krippendorff_alpha_interval(const std::vector<std::vector<std::optional<double>>>& ratings);

// ---- Mann-Whitney U ---------------------------------------------------------

enum class MwMethod { kAuto, kExact, kNormal };

struct MannWhitneyResult {
  double u = 0.0;        // U of the first sample: R1 - n1(n1+1)/2, midranks for ties
  double p_value = 1.0;  // two-sided
  MwMethod method = MwMethod::kAuto;
};

// Exact: permutation distribution of the (midrank) rank sum, two-sided p =
// P(|R - E[R]| >= |r_obs - E[R]|). Normal: tie-corrected variance with a 0.5
// continuity correction. kAuto uses exact while n1 + n2 <= kExactLimit.
inline constexpr std::size_t kExactLimit = 20;
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 MwMethod method = MwMethod::kAuto);

// ---- abstraction study ------------------------------------------------------

enum class Method { kEhr, kSemantic };
const char* to_string(Method m) noexcept;
Method parse_method(std::string_view s);

struct AbstractionRecord {
  std::string task_id;
  std::string abstractor_id;
  std::string patient_id;
  Method method = Method::kEhr;
  double time_seconds = 0.0;
  std::optional<std::string> category;  // categorical tasks
  std::optional<double> numeric;        // interval tasks
};

nlohmann::json to_json(const AbstractionRecord& r);
AbstractionRecord abstraction_record_from_json(const nlohmann::json& j);
std::vector<AbstractionRecord> read_abstraction_jsonl(const std::filesystem::path& path);

struct PairwiseAgreement {
  double within = 0.0;  // pairs where both abstractors used EHR
  double cross = 0.0;   // pairs with one EHR and one semantic abstractor
  std::size_t within_pairs = 0;
  std::size_t cross_pairs = 0;
};

// Single-task records. Categorical tasks use Cohen's kappa over pooled rating
// pairs, numeric tasks interval alpha over pairs as two-rater items.
PairwiseAgreement pairwise_agreement(std::span<const AbstractionRecord> records);
// Fleiss' kappa (categorical) or interval alpha (numeric) across all raters.
double overall_agreement(std::span<const AbstractionRecord> records);

struct BootstrapResult {
  double delta = 0.0;  // observed within - cross
  double p_value = 1.0;
  std::size_t resamples = 0;
  std::size_t redrawn = 0;  // degenerate resamples replaced
};

// Patient-level bootstrap of within minus cross agreement. p is the share of
// resamples whose centered difference (delta* - delta) is at least delta.
BootstrapResult bootstrap_agreement_diff(std::span<const AbstractionRecord> records, std::size_t resamples,
                                         std::uint64_t seed);

}  // namespace notesearch::stats
