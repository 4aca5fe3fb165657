#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vidq/numcore.hpp"
#include "vidq/quantizer.hpp"

namespace vidq {

struct KMeansResult {
  Matrix centroids;  // k x d
  std::vector<std::size_t> assignments;
  double inertia = 0.0;  // sum of squared distances to the assigned centroid
  // Inertia after each assignment step; nonincreasing.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

std::size_t count_distinct(std::span<const Vector> points);

// Lloyd's algorithm with k-means++ seeding. An emptied cluster is re-seeded at
// the point farthest from its current centroid. Stops at an assignment
// fixpoint or after max_iters update steps.
KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::size_t max_iters,
                    std::uint64_t seed);

// Two-stage baseline: hard coarse k-means, then k-means per residual segment.
// When a corpus has fewer distinct vectors than a codebook needs, the missing
// codewords are copies of the ones found, so the output keeps the configured
// shape.
CodebookSet two_stage_fit(std::span<const Vector> features, const QuantizerConfig& cfg,
                          std::uint64_t seed, std::size_t max_iters = 50);

}  // namespace vidq
