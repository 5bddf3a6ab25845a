#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "notesearch/errors.hpp"
#include "notesearch/stats.hpp"

namespace notesearch::stats {

const char* to_string(Method m) noexcept { return m == Method::kEhr ? "ehr" : "semantic"; }

Method parse_method(std::string_view s) {
  if (s == "ehr") return Method::kEhr;
  if (s == "semantic") return Method::kSemantic;
  throw InvalidArgument("unknown method: " + std::string(s));
}

nlohmann::json to_json(const AbstractionRecord& r) {
  nlohmann::json j{{"task_id", r.task_id},
                   {"abstractor_id", r.abstractor_id},
                   {"patient_id", r.patient_id},
                   {"method", to_string(r.method)},
                   {"time_seconds", r.time_seconds}};
  if (r.category) {
    j["value"] = *r.category;
  } else if (r.numeric) {
    j["value"] = *r.numeric;
  } else {
    j["value"] = nullptr;
  }
  return j;
}

AbstractionRecord abstraction_record_from_json(const nlohmann::json& j) {
  AbstractionRecord r;
  r.task_id = j.at("task_id").get<std::string>();
  r.abstractor_id = j.at("abstractor_id").get<std::string>();
  r.patient_id = j.at("patient_id").get<std::string>();
  r.method = parse_method(j.at("method").get<std::string>());
  r.time_seconds = j.at("time_seconds").get<double>();
  const auto& v = j.at("value");
  if (v.is_string()) {
    r.category = v.get<std::string>();
  } else if (v.is_number()) {
    r.numeric = v.get<double>();
  } else if (!v.is_null()) {
    throw InvalidArgument("value must be a string, a number or null");
  }
  return r;
}

std::vector<AbstractionRecord> read_abstraction_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw StorageError("cannot open " + path.string());
  std::vector<AbstractionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(abstraction_record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

namespace {

struct RatingPair {
  std::string cat_a, cat_b;
  double num_a = 0.0, num_b = 0.0;
};

struct PatientPairs {
  std::vector<RatingPair> within;
  std::vector<RatingPair> cross;
};

struct Prepared {
  bool categorical = true;
  std::vector<PatientPairs> patients;
};

Prepared prepare(std::span<const AbstractionRecord> records) {
  if (records.empty()) throw InvalidArgument("no abstraction records");
  Prepared out;
  const auto& task = records.front().task_id;
  std::size_t n_cat = 0, n_num = 0;
  std::set<std::pair<std::string, std::string>> seen;
  std::set<Method> methods;
  std::set<std::string> raters;
  std::map<std::string, std::vector<const AbstractionRecord*>> by_patient;
  for (const auto& r : records) {
    if (r.task_id != task) throw InvalidArgument("records span more than one task");
    if (!seen.emplace(r.abstractor_id, r.patient_id).second) {
      throw InvalidArgument("duplicate record for abstractor " + r.abstractor_id + " and patient " + r.patient_id);
    }
    if (r.category) ++n_cat;
    if (r.numeric) ++n_num;
    methods.insert(r.method);
    raters.insert(r.abstractor_id);
    by_patient[r.patient_id].push_back(&r);
  }
  if (n_cat > 0 && n_num > 0) throw InvalidArgument("task mixes categorical and numeric values");
  if (methods.size() < 2) throw InvalidArgument("records must span both methods");
  if (raters.size() < 2) throw InvalidArgument("records must span at least two abstractors");
  out.categorical = n_num == 0;

  for (auto& [patient, rs] : by_patient) {
    std::sort(rs.begin(), rs.end(), [](const auto* x, const auto* y) { return x->abstractor_id < y->abstractor_id; });
    PatientPairs pp;
    for (std::size_t i = 0; i < rs.size(); ++i) {
      for (std::size_t j = i + 1; j < rs.size(); ++j) {
        const AbstractionRecord* a = rs[i];
        const AbstractionRecord* b = rs[j];
        const bool has_values = out.categorical ? (a->category && b->category) : (a->numeric && b->numeric);
        if (!has_values) continue;
        if (a->method == Method::kSemantic && b->method == Method::kSemantic) continue;
        const bool cross = a->method != b->method;
        if (cross && a->method == Method::kSemantic) std::swap(a, b);
        RatingPair p;
        if (out.categorical) {
          p.cat_a = *a->category;
          p.cat_b = *b->category;
        } else {
          p.num_a = *a->numeric;
          p.num_b = *b->numeric;
        }
        (cross ? pp.cross : pp.within).push_back(std::move(p));
      }
    }
    out.patients.push_back(std::move(pp));
  }
  return out;
}

double agreement_of(const std::vector<const RatingPair*>& pairs, bool categorical) {
  if (pairs.empty()) throw UndefinedStatistic("no rating pairs");
  if (categorical) {
    std::vector<std::string> a, b;
    a.reserve(pairs.size());
    b.reserve(pairs.size());
    for (const auto* p : pairs) {
      a.push_back(p->cat_a);
      b.push_back(p->cat_b);
    }
    return cohens_kappa(a, b);
  }
  std::vector<std::vector<std::optional<double>>> items;
  items.reserve(pairs.size());
  for (const auto* p : pairs) items.push_back({p->num_a, p->num_b});
  return krippendorff_alpha_interval(items);
}

PairwiseAgreement agreement_for(const Prepared& prep, std::span<const std::size_t> patients) {
  std::vector<const RatingPair*> within, cross;
  for (auto idx : patients) {
    for (const auto& p : prep.patients[idx].within) within.push_back(&p);
    for (const auto& p : prep.patients[idx].cross) cross.push_back(&p);
  }
  PairwiseAgreement out;
  out.within_pairs = within.size();
  out.cross_pairs = cross.size();
  out.within = agreement_of(within, prep.categorical);
  out.cross = agreement_of(cross, prep.categorical);
  return out;
}

}  // namespace

PairwiseAgreement pairwise_agreement(std::span<const AbstractionRecord> records) {
  const auto prep = prepare(records);
  std::vector<std::size_t> all(prep.patients.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return agreement_for(prep, all);
}

double overall_agreement(std::span<const AbstractionRecord> records) {
  const auto prep = prepare(records);
  std::set<std::string> rater_set;
  for (const auto& r : records) rater_set.insert(r.abstractor_id);
  const std::vector<std::string> raters(rater_set.begin(), rater_set.end());
  std::map<std::string, std::map<std::string, const AbstractionRecord*>> grid;
  for (const auto& r : records) grid[r.patient_id][r.abstractor_id] = &r;

  if (prep.categorical) {
    std::vector<std::vector<std::string>> matrix;
    for (const auto& [patient, row] : grid) {
      std::vector<std::string> item;
      for (const auto& [rater, rec] : row) {
        if (rec->category) item.push_back(*rec->category);
      }
      matrix.push_back(std::move(item));
    }
    return fleiss_kappa(matrix);
  }
  std::vector<std::vector<std::optional<double>>> matrix;
  for (const auto& [patient, row] : grid) {
    std::vector<std::optional<double>> item(raters.size());
    for (std::size_t k = 0; k < raters.size(); ++k) {
      auto it = row.find(raters[k]);
      if (it != row.end()) item[k] = it->second->numeric;
    }
    matrix.push_back(std::move(item));
  }
  return krippendorff_alpha_interval(matrix);
}

BootstrapResult bootstrap_agreement_diff(std::span<const AbstractionRecord> records, std::size_t resamples,
                                         std::uint64_t seed) {
  if (resamples == 0) throw InvalidArgument("resamples must be positive");
  const auto prep = prepare(records);
  const std::size_t n = prep.patients.size();
  std::vector<std::size_t> draw(n);
  for (std::size_t i = 0; i < n; ++i) draw[i] = i;
  const auto observed = agreement_for(prep, draw);

  BootstrapResult out;
  out.delta = observed.within - observed.cross;
  out.resamples = resamples;
  std::mt19937_64 rng(seed);
  const std::size_t max_redraws = 100 * resamples + 1000;
  std::size_t at_least = 0;
  for (std::size_t b = 0; b < resamples;) {
    for (auto& d : draw) d = static_cast<std::size_t>(rng() % n);
    double delta_star = 0.0;
    try {
      const auto a = agreement_for(prep, draw);
      delta_star = a.within - a.cross;
    } catch (const UndefinedStatistic&) {
      if (++out.redrawn > max_redraws) throw UndefinedStatistic("too many degenerate bootstrap resamples");
      continue;
    }
    if (delta_star - out.delta >= out.delta) ++at_least;
    ++b;
  }
  out.p_value = static_cast<double>(at_least) / static_cast<double>(resamples);
  return out;
}

}  // namespace notesearch::stats
