#include <gtest/gtest.h>

#include <random>

#include "notesearch/attributes.hpp"
#include "notesearch/errors.hpp"
#include "notesearch/types.hpp"
#include "oracles.hpp"

using namespace notesearch;
using namespace notesearch::index;

TEST(ChunkIdPacking, RoundTrip) {
  const auto id = make_chunk_id(123456, 7);
  EXPECT_EQ(chunk_note_id(id), 123456u);
  EXPECT_EQ(chunk_ordinal(id), 7u);
  EXPECT_LT(make_chunk_id(5, kMaxChunkOrdinal), make_chunk_id(6, 0));
  EXPECT_THROW(make_chunk_id(kMaxPackedNoteId + 1, 0), InvalidArgument);
  EXPECT_THROW(make_chunk_id(1, kMaxChunkOrdinal + 1), InvalidArgument);
}

TEST(FieldNames, ClosedSet) {
  EXPECT_EQ(field_name(CategoricalField::kAuthorType), "author_type");
  EXPECT_EQ(parse_categorical_field("specialty"), CategoricalField::kSpecialty);
  EXPECT_EQ(parse_numeric_field("age_days"), NumericField::kAgeDays);
  try {
    parse_categorical_field("ward");
    FAIL();
  } catch (const UnknownField& e) {
    EXPECT_EQ(e.field(), "ward");
  }
}

TEST(FilterSpec, AbsentValues) {
  AttributeSet a;
  a.get(CategoricalField::kPatientId) = "0000001";
  FilterSpec inc;
  inc.clause(CategoricalField::kSpecialty).include = {"Oncology"};
  EXPECT_FALSE(inc.matches(a));
  FilterSpec exc;
  exc.clause(CategoricalField::kSpecialty).exclude = {"Oncology"};
  EXPECT_TRUE(exc.matches(a));
  FilterSpec range;
  range.range(NumericField::kDate) = RangeClause{0.0, 10.0};
  EXPECT_FALSE(range.matches(a));
  a.get(NumericField::kDate) = 10.0;
  EXPECT_TRUE(range.matches(a));
  a.get(NumericField::kDate) = 10.5;
  EXPECT_FALSE(range.matches(a));
}

TEST(FilterSpec, Validation) {
  FilterSpec f;
  EXPECT_TRUE(f.unconstrained());
  f.clause(CategoricalField::kDepartment).include = {"x"};
  f.clause(CategoricalField::kDepartment).exclude = {"x"};
  EXPECT_THROW(f.validate(), InvalidArgument);
  FilterSpec g;
  g.range(NumericField::kAgeDays) = RangeClause{5.0, 1.0};
  EXPECT_THROW(g.validate(), InvalidArgument);
}

TEST(FilterSpec, JsonRoundTripAndUnknownFields) {
  FilterSpec f;
  f.clause(CategoricalField::kNoteCategory).include = {"Progress Note", "H&P"};
  f.clause(CategoricalField::kPatientId).exclude = {"0000002"};
  f.range(NumericField::kDate) = RangeClause{17000.0, 18000.0};
  f.range(NumericField::kAgeDays) = RangeClause{365.0};
  EXPECT_EQ(filter_from_json(to_json(f)), f);
  EXPECT_EQ(filter_from_json(nullptr), FilterSpec{});
  EXPECT_THROW(filter_from_json(nlohmann::json::parse(R"({"ward": {"include": ["a"]}})")), UnknownField);
  EXPECT_THROW(filter_from_json(nlohmann::json::parse(R"({"date": {"after": 1}})")), UnknownField);
  EXPECT_THROW(filter_from_json(nlohmann::json::parse(R"({"specialty": {"include": "a"}})")), InvalidArgument);
  EXPECT_THROW(filter_from_json(nlohmann::json::parse(R"({"date": {"min": 3, "max": 1}})")), InvalidArgument);
}

TEST(FilterSpec, MatchesOracleOnRandomInput) {
  std::mt19937_64 rng(21);
  const std::vector<std::string> tokens{"", "a", "b", "c"};
  for (int t = 0; t < 5000; ++t) {
    AttributeSet a;
    for (auto& c : a.categorical) c = tokens[rng() % tokens.size()];
    for (auto& n : a.numeric) n = rng() % 5 == 0 ? std::nan("") : static_cast<double>(rng() % 10);
    FilterSpec f;
    for (auto& c : f.categorical) {
      if (rng() % 3 == 0) c.include.insert(tokens[1 + rng() % 3]);
      if (rng() % 3 == 0) {
        const auto tok = tokens[1 + rng() % 3];
        if (!c.include.contains(tok)) c.exclude.insert(tok);
      }
    }
    for (auto& r : f.numeric) {
      if (rng() % 3 == 0) {
        const double lo = static_cast<double>(rng() % 10);
        r = RangeClause{lo, lo + static_cast<double>(rng() % 5)};
      }
    }
    EXPECT_EQ(f.matches(a), oracle::admits(f, a));
  }
}
