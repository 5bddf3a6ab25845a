#include <map>
#include <numeric>

#include "notesearch/errors.hpp"
#include "notesearch/stats.hpp"

namespace notesearch::stats {

double cohens_kappa(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() != b.size()) throw InvalidArgument("rating vectors differ in length");
  if (a.empty()) throw InvalidArgument("rating vectors are empty");
  const double n = static_cast<double>(a.size());
  std::map<std::string_view, std::pair<std::size_t, std::size_t>> marginals;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) ++agree;
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
  }
  double pe = 0.0;
  for (const auto& [cat, m] : marginals) pe += (static_cast<double>(m.first) / n) * (static_cast<double>(m.second) / n);
  if (pe >= 1.0) throw UndefinedStatistic("Cohen's kappa undefined: chance agreement is 1");
  const double po = static_cast<double>(agree) / n;
  return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.size() < 2) throw InvalidArgument("Fleiss' kappa needs at least two items");
  const std::size_t raters = ratings.front().size();
  if (raters < 2) throw InvalidArgument("Fleiss' kappa needs at least two raters");
  std::map<std::string_view, std::size_t> totals;
  double sum_pi = 0.0;
  for (const auto& item : ratings) {
    if (item.size() != raters) throw InvalidArgument("ragged rating matrix");
    std::map<std::string_view, std::size_t> counts;
    for (const auto& r : item) ++counts[r];
    double agree = 0.0;
    for (const auto& [cat, c] : counts) {
      agree += static_cast<double>(c) * static_cast<double>(c - 1);
      totals[cat] += c;
    }
    sum_pi += agree / (static_cast<double>(raters) * static_cast<double>(raters - 1));
  }
  const double n_items = static_cast<double>(ratings.size());
  const double p_bar = sum_pi / n_items;
  double pe = 0.0;
  for (const auto& [cat, c] : totals) {
    const double pj = static_cast<double>(c) / (n_items * static_cast<double>(raters));
    pe += pj * pj;
  }
  if (pe >= 1.0) throw UndefinedStatistic("Fleiss' kappa undefined: a single category was used");
  return (p_bar - pe) / (1.0 - pe);
}

double krippendorff_alpha_interval(const std::vector<std::vector<std::optional<double>>>& ratings) {
  std::vector<double> pooled;
  double within = 0.0;
  for (const auto& item : ratings) {
    std::vector<double> v;
    for (const auto& r : item) {
      if (r) v.push_back(*r);
    }
    if (v.size() < 2) continue;
    const double m = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / m;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    // Sum over ordered pairs i != j of (v_i - v_j)^2 is 2 m ss.
    within += 2.0 * m * ss / (m - 1.0);
    pooled.insert(pooled.end(), v.begin(), v.end());
  }
  if (pooled.size() < 2) throw InvalidArgument("Krippendorff's alpha needs at least two pairable values");
  const double n = static_cast<double>(pooled.size());
  const double mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : pooled) ss += (x - mean) * (x - mean);
  const double d_o = within / n;
  const double d_e = 2.0 * n * ss / (n * (n - 1.0));
  if (d_e == 0.0) throw UndefinedStatistic("Krippendorff's alpha undefined: no variation in values");
  return 1.0 - d_o / d_e;
}

}  // namespace notesearch::stats
