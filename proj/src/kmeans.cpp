#include "notesearch/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "notesearch/errors.hpp"
#include "notesearch/kernels.hpp"

namespace notesearch::index {

namespace {

// Uniform [0, 1) from the top 53 bits; avoids implementation-defined
// distributions so sequences match across standard libraries.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void normalize_row(std::span<const double> sum, std::span<float> out) {
  double sq = 0.0;
  for (double x : sum) sq += x * x;
  if (sq <= 0.0) return;  // keep the previous centroid
  const double norm = std::sqrt(sq);
  for (std::size_t i = 0; i < sum.size(); ++i) out[i] = static_cast<float>(sum[i] / norm);
}

}  // namespace

std::vector<float> train_partitions(std::span<const float> sample, std::size_t dim, std::size_t k,
                                    std::uint64_t seed, const KMeansOptions& options) {
  if (dim == 0) throw InvalidArgument("dimension must be positive");
  if (sample.empty()) throw InvalidArgument("training sample is empty");
  if (sample.size() % dim != 0) throw InvalidArgument("sample size is not a multiple of dimension");
  const std::size_t n = sample.size() / dim;
  if (k == 0) throw InvalidArgument("num_partitions must be positive");
  if (k > n) {
    throw InvalidArgument("num_partitions (" + std::to_string(k) + ") exceeds sample size (" +
                          std::to_string(n) + ")");
  }
  auto row = [&](std::size_t i) { return sample.data() + i * dim; };

  std::vector<float> centroids(k * dim);
  std::mt19937_64 rng(seed);

  // k-means++ seeding on squared chord distance 2 - 2<x, c>.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<char> chosen(n, 0);
  std::size_t first = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n));
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pick = first;
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
      if (total <= 0.0) {
        pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
      } else {
        const double target = unit_uniform(rng) * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          if (chosen[i] || d2[i] <= 0.0) continue;
          acc += d2[i];
          pick = i;
          if (acc > target) break;
        }
      }
    }
    chosen[pick] = 1;
    std::copy_n(row(pick), dim, centroids.begin() + static_cast<std::ptrdiff_t>(c * dim));
    for (std::size_t i = 0; i < n; ++i) {
      const double d = std::max(0.0, 2.0 - 2.0 * kernels::dot(row(i), row(pick), dim));
      d2[i] = std::min(d2[i], d);
    }
  }

  std::vector<std::uint32_t> assign(n, 0);
  std::vector<float> best_sim(n, 0.0f);
  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  double prev_objective = -std::numeric_limits<double>::infinity();

  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = iter == 0;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      float best_s = -std::numeric_limits<float>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const float s = kernels::dot(row(i), centroids.data() + c * dim, dim);
        if (s > best_s) {
          best_s = s;
          best = static_cast<std::uint32_t>(c);
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      best_sim[i] = best_s;
      objective += best_s;
    }
    objective /= static_cast<double>(n);

    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      double* s = sums.data() + assign[i] * dim;
      const float* x = row(i);
      for (std::size_t d = 0; d < dim; ++d) s[d] += x[d];
    }

    // Re-seed empty clusters with the worst-served point of a cluster that can
    // spare one.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t worst = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] < 2) continue;
        if (worst == n || best_sim[i] < best_sim[worst]) worst = i;
      }
      if (worst == n) break;
      const auto old = assign[worst];
      double* so = sums.data() + old * dim;
      double* sc = sums.data() + c * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        so[d] -= row(worst)[d];
        sc[d] = row(worst)[d];
      }
      --counts[old];
      counts[c] = 1;
      assign[worst] = static_cast<std::uint32_t>(c);
      best_sim[worst] = 1.0f;
      changed = true;
    }

    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      normalize_row(std::span<const double>(sums.data() + c * dim, dim),
                    std::span<float>(centroids.data() + c * dim, dim));
    }

    if (!changed) break;
    if (objective - prev_objective < options.tolerance && iter > 0) break;
    prev_objective = objective;
  }
  return centroids;
}

std::vector<embedding::Embedding> train_partitions(std::span<const embedding::Embedding> sample,
                                                   std::size_t num_partitions, std::uint64_t seed,
                                                   const KMeansOptions& options) {
  if (sample.empty()) throw InvalidArgument("training sample is empty");
  const std::size_t dim = sample.front().dimension();
  std::vector<float> flat;
  flat.reserve(sample.size() * dim);
  for (const auto& e : sample) {
    if (e.dimension() != dim) throw InvalidArgument("training sample has mixed dimensions");
    flat.insert(flat.end(), e.values().begin(), e.values().end());
  }
  const auto raw = train_partitions(flat, dim, num_partitions, seed, options);
  std::vector<embedding::Embedding> out;
  out.reserve(num_partitions);
  for (std::size_t c = 0; c < num_partitions; ++c) {
    out.push_back(embedding::Embedding::normalize(std::span<const float>(raw.data() + c * dim, dim)));
  }
  return out;
}

}  // namespace notesearch::index
