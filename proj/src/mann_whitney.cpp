#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "notesearch/errors.hpp"
#include "notesearch/stats.hpp"

namespace notesearch::stats {

namespace {

constexpr std::size_t kMaxExactTotal = 100;

struct Ranking {
  std::vector<std::int64_t> doubled;  // 2 * midrank, per pooled observation (a first, then b)
  double tie_term = 0.0;              // sum of t^3 - t over tie groups
};

Ranking rank_pooled(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size() + b.size();
  std::vector<double> values(a.begin(), a.end());
  values.insert(values.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  Ranking r;
  r.doubled.assign(n, 0);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const auto twice = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) r.doubled[order[k]] = twice;
    const double t = static_cast<double>(j - i + 1);
    r.tie_term += t * t * t - t;
    i = j + 1;
  }
  return r;
}

double exact_p(const Ranking& r, std::size_t n1, std::int64_t observed_doubled_sum) {
  const std::size_t n = r.doubled.size();
  const auto max_sum = static_cast<std::size_t>(std::accumulate(r.doubled.begin(), r.doubled.end(), std::int64_t{0}));
  // ways[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<long double>> ways(n1 + 1, std::vector<long double>(max_sum + 1, 0.0L));
  ways[0][0] = 1.0L;
  for (std::size_t i = 0; i < n; ++i) {
    const auto d = static_cast<std::size_t>(r.doubled[i]);
    for (std::size_t k = std::min(n1, i + 1); k >= 1; --k) {
      auto& dst = ways[k];
      const auto& src = ways[k - 1];
      for (std::size_t s = max_sum; s >= d; --s) {
        if (src[s - d] != 0.0L) dst[s] += src[s - d];
        if (s == d) break;
      }
    }
  }
  const auto centre = static_cast<std::int64_t>(n1) * static_cast<std::int64_t>(n + 1);
  const auto observed = std::llabs(observed_doubled_sum - centre);
  long double extreme = 0.0L;
  long double total = 0.0L;
  for (std::size_t s = 0; s <= max_sum; ++s) {
    const long double w = ways[n1][s];
    if (w == 0.0L) continue;
    total += w;
    if (std::llabs(static_cast<std::int64_t>(s) - centre) >= observed) extreme += w;
  }
  return static_cast<double>(std::min(1.0L, extreme / total));
}

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, MwMethod method) {
  if (a.empty() || b.empty()) throw InvalidArgument("Mann-Whitney U needs two nonempty samples");
  for (const auto* s : {&a, &b}) {
    for (double x : *s) {
      if (!std::isfinite(x)) throw InvalidArgument("Mann-Whitney U samples must be finite");
    }
  }
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  const std::size_t n = n1 + n2;
  const auto ranking = rank_pooled(a, b);
  std::int64_t doubled_sum = 0;
  for (std::size_t i = 0; i < n1; ++i) doubled_sum += ranking.doubled[i];

  MannWhitneyResult out;
  out.u = static_cast<double>(doubled_sum) / 2.0 - static_cast<double>(n1 * (n1 + 1)) / 2.0;
  out.method = method == MwMethod::kAuto ? (n <= kExactLimit ? MwMethod::kExact : MwMethod::kNormal) : method;

  if (out.method == MwMethod::kExact) {
    if (n > kMaxExactTotal) throw InvalidArgument("exact Mann-Whitney limited to 100 observations");
    out.p_value = exact_p(ranking, n1, doubled_sum);
    return out;
  }
  const double dn1 = static_cast<double>(n1);
  const double dn2 = static_cast<double>(n2);
  const double dn = static_cast<double>(n);
  const double mean = dn1 * dn2 / 2.0;
  const double var = dn1 * dn2 / 12.0 * ((dn + 1.0) - ranking.tie_term / (dn * (dn - 1.0)));
  if (var <= 0.0) {
    out.p_value = 1.0;
    return out;
  }
  const double z = std::max(std::fabs(out.u - mean) - 0.5, 0.0) / std::sqrt(var);
  out.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

}  // namespace notesearch::stats
