#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <json.hpp>

namespace notesearch::index {

// Closed set of filterable attributes.
enum class CategoricalField : std::size_t {
  kPatientId,
  kNoteCategory,
  kEncounterType,
  kDepartment,
  kSpecialty,
  kAuthorType,
  kAuthorName,
};
inline constexpr std::size_t kNumCategorical = 7;

enum class NumericField : std::size_t {
  kDate,     // days since 1970-01-01
  kAgeDays,  // patient age in days when the note was written
};
inline constexpr std::size_t kNumNumeric = 2;

std::string_view field_name(CategoricalField f) noexcept;
std::string_view field_name(NumericField f) noexcept;

// Throw UnknownField for names outside the closed set.
CategoricalField parse_categorical_field(std::string_view name);
NumericField parse_numeric_field(std::string_view name);

// Empty string marks an absent categorical value, NaN an absent numeric one.
struct AttributeSet {
  std::array<std::string, kNumCategorical> categorical{};
  std::array<double, kNumNumeric> numeric{std::numeric_limits<double>::quiet_NaN(),
                                          std::numeric_limits<double>::quiet_NaN()};

  const std::string& get(CategoricalField f) const { return categorical[static_cast<std::size_t>(f)]; }
  std::string& get(CategoricalField f) { return categorical[static_cast<std::size_t>(f)]; }
  double get(NumericField f) const { return numeric[static_cast<std::size_t>(f)]; }
  double& get(NumericField f) { return numeric[static_cast<std::size_t>(f)]; }

  bool operator==(const AttributeSet& o) const;
};

struct CategoricalClause {
  std::set<std::string> include;  // empty = unconstrained
  std::set<std::string> exclude;

  bool empty() const noexcept { return include.empty() && exclude.empty(); }
  bool operator==(const CategoricalClause&) const = default;
};

struct RangeClause {
  double min = -std::numeric_limits<double>::infinity();
  double max = std::numeric_limits<double>::infinity();
  bool operator==(const RangeClause&) const = default;
};

// Clauses are ANDed across fields; a field's include set is an OR.
// Absent values fail include and range clauses and pass exclude clauses.
struct FilterSpec {
  std::array<CategoricalClause, kNumCategorical> categorical{};
  std::array<std::optional<RangeClause>, kNumNumeric> numeric{};

  CategoricalClause& clause(CategoricalField f) { return categorical[static_cast<std::size_t>(f)]; }
  const CategoricalClause& clause(CategoricalField f) const { return categorical[static_cast<std::size_t>(f)]; }
  std::optional<RangeClause>& range(NumericField f) { return numeric[static_cast<std::size_t>(f)]; }
  const std::optional<RangeClause>& range(NumericField f) const { return numeric[static_cast<std::size_t>(f)]; }

  bool unconstrained() const noexcept;
  // Throws InvalidArgument if an include/exclude pair overlaps or min > max.
  void validate() const;
  bool matches(const AttributeSet& attrs) const;

  bool operator==(const FilterSpec&) const = default;
};

// JSON form:
//   {"patient_id": {"include": [...], "exclude": [...]}, ...,
//    "date": {"min": x, "max": y}, "age_days": {...}}
// from_json throws UnknownField for unrecognized keys and InvalidArgument for
// malformed clauses.
nlohmann::json to_json(const FilterSpec& f);
FilterSpec filter_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AttributeSet& a);

}  // namespace notesearch::index
