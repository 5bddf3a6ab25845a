#include "notesearch/attributes.hpp"

#include "notesearch/errors.hpp"

namespace notesearch::index {

namespace {

constexpr std::array<std::string_view, kNumCategorical> kCategoricalNames = {
    "patient_id", "note_category", "encounter_type", "department", "specialty", "author_type", "author_name"};
constexpr std::array<std::string_view, kNumNumeric> kNumericNames = {"date", "age_days"};

bool same_number(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

std::string_view field_name(CategoricalField f) noexcept { return kCategoricalNames[static_cast<std::size_t>(f)]; }
std::string_view field_name(NumericField f) noexcept { return kNumericNames[static_cast<std::size_t>(f)]; }

CategoricalField parse_categorical_field(std::string_view name) {
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    if (kCategoricalNames[i] == name) return static_cast<CategoricalField>(i);
  }
  throw UnknownField(std::string(name));
}

NumericField parse_numeric_field(std::string_view name) {
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    if (kNumericNames[i] == name) return static_cast<NumericField>(i);
  }
  throw UnknownField(std::string(name));
}

bool AttributeSet::operator==(const AttributeSet& o) const {
  return categorical == o.categorical && same_number(numeric[0], o.numeric[0]) &&
         same_number(numeric[1], o.numeric[1]);
}

bool FilterSpec::unconstrained() const noexcept {
  for (const auto& c : categorical) {
    if (!c.empty()) return false;
  }
  for (const auto& r : numeric) {
    if (r) return false;
  }
  return true;
}

void FilterSpec::validate() const {
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    for (const auto& tok : categorical[i].include) {
      if (categorical[i].exclude.contains(tok)) {
        throw InvalidArgument("filter field " + std::string(kCategoricalNames[i]) +
                              " both includes and excludes the same value");
      }
    }
  }
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    if (numeric[i] && !(numeric[i]->min <= numeric[i]->max)) {
      throw InvalidArgument("filter field " + std::string(kNumericNames[i]) + " has min > max");
    }
  }
}

bool FilterSpec::matches(const AttributeSet& attrs) const {
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    const auto& c = categorical[i];
    const auto& v = attrs.categorical[i];
    if (!c.include.empty() && (v.empty() || !c.include.contains(v))) return false;
    if (!c.exclude.empty() && !v.empty() && c.exclude.contains(v)) return false;
  }
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    if (!numeric[i]) continue;
    const double v = attrs.numeric[i];
    if (std::isnan(v) || v < numeric[i]->min || v > numeric[i]->max) return false;
  }
  return true;
}

nlohmann::json to_json(const FilterSpec& f) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    const auto& c = f.categorical[i];
    if (c.empty()) continue;
    nlohmann::json clause = nlohmann::json::object();
    if (!c.include.empty()) clause["include"] = c.include;
    if (!c.exclude.empty()) clause["exclude"] = c.exclude;
    j[std::string(kCategoricalNames[i])] = clause;
  }
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    if (!f.numeric[i]) continue;
    nlohmann::json clause = nlohmann::json::object();
    if (std::isfinite(f.numeric[i]->min)) clause["min"] = f.numeric[i]->min;
    if (std::isfinite(f.numeric[i]->max)) clause["max"] = f.numeric[i]->max;
    j[std::string(kNumericNames[i])] = clause;
  }
  return j;
}

FilterSpec filter_from_json(const nlohmann::json& j) {
  FilterSpec f;
  if (j.is_null()) return f;
  if (!j.is_object()) throw InvalidArgument("filter must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_object()) throw InvalidArgument("filter field " + key + " must be an object");
    bool numeric = false;
    for (auto name : kNumericNames) numeric = numeric || name == key;
    if (numeric) {
      const auto field = parse_numeric_field(key);
      RangeClause r;
      for (const auto& [k, v] : value.items()) {
        if (!v.is_number()) throw InvalidArgument("filter field " + key + "." + k + " must be a number");
        if (k == "min") {
          r.min = v.get<double>();
        } else if (k == "max") {
          r.max = v.get<double>();
        } else {
          throw UnknownField(key + "." + k);
        }
      }
      f.range(field) = r;
      continue;
    }
    const auto field = parse_categorical_field(key);
    auto& clause = f.clause(field);
    for (const auto& [k, v] : value.items()) {
      if (!v.is_array()) throw InvalidArgument("filter field " + key + "." + k + " must be an array");
      std::set<std::string>* target = nullptr;
      if (k == "include") {
        target = &clause.include;
      } else if (k == "exclude") {
        target = &clause.exclude;
      } else {
        throw UnknownField(key + "." + k);
      }
      for (const auto& tok : v) {
        if (!tok.is_string()) throw InvalidArgument("filter field " + key + "." + k + " must hold strings");
        target->insert(tok.get<std::string>());
      }
    }
  }
  f.validate();
  return f;
}

nlohmann::json to_json(const AttributeSet& a) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumCategorical; ++i) {
    if (!a.categorical[i].empty()) j[std::string(kCategoricalNames[i])] = a.categorical[i];
  }
  for (std::size_t i = 0; i < kNumNumeric; ++i) {
    if (!std::isnan(a.numeric[i])) j[std::string(kNumericNames[i])] = a.numeric[i];
  }
  return j;
}

}  // namespace notesearch::index
