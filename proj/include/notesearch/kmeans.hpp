#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "notesearch/embedding.hpp"

namespace notesearch::index {

struct KMeansOptions {
  std::size_t max_iterations = 25;
  // Stop when the mean assigned similarity improves by less than this.
  double tolerance = 1e-7;
};

// Spherical k-means (maximize dot product to the assigned centroid) with
// k-means++ seeding. `sample` is row-major n x dimension, rows unit norm.
// Returns num_partitions unit centroids, row-major. Deterministic given seed.
// Throws InvalidArgument on an empty sample or num_partitions > n.
std::vector<float> train_partitions(std::span<const float> sample, std::size_t dimension,
                                    std::size_t num_partitions, std::uint64_t seed,
                                    const KMeansOptions& options = {});

std::vector<embedding::Embedding> train_partitions(std::span<const embedding::Embedding> sample,
                                                   std::size_t num_partitions, std::uint64_t seed,
                                                   const KMeansOptions& options = {});

}  // namespace notesearch::index
