#include "vidq/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

std::size_t count_distinct(std::span<const Vector> points) {
  std::vector<Vector> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

namespace {

Matrix seed_plus_plus(std::span<const Vector> points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t dim = points[0].size();
  Matrix centroids(k, dim);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.uniform_index(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy(points[pick].begin(), points[pick].end(), centroids.row(c).begin());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      closest[i] = std::min(closest[i], squared_distance(points[i], centroids.row(c)));
      total += closest[i];
    }
    if (c + 1 == k) break;
    // total > 0 while fewer than `distinct` centroids have been placed.
    double target = rng.uniform() * total;
    pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (closest[i] <= 0.0) continue;
      target -= closest[i];
      pick = i;
      if (target <= 0.0) break;
    }
  }
  return centroids;
}

double assign(std::span<const Vector> points, const Matrix& centroids,
              std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    assignments[i] = nearest_row(points[i], centroids);
    inertia += squared_distance(points[i], centroids.row(assignments[i]));
  }
  return inertia;
}

}  // namespace

KMeansResult kmeans(std::span<const Vector> points, std::size_t k, std::size_t max_iters,
                    std::uint64_t seed) {
  if (points.empty()) throw InvalidArgument("kmeans: no points");
  if (k == 0) throw InvalidArgument("kmeans: k must be positive");
  if (max_iters == 0) throw InvalidArgument("kmeans: max_iters must be >= 1");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) {
    if (p.size() != dim) throw InvalidArgument("kmeans: points have differing dimensions");
  }
  const std::size_t distinct = count_distinct(points);
  if (k > distinct) {
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds the " +
                          std::to_string(distinct) + " distinct points");
  }

  Rng rng(seed);
  KMeansResult res;
  res.centroids = seed_plus_plus(points, k, rng);
  res.assignments.assign(points.size(), 0);
  res.inertia = assign(points, res.centroids, res.assignments);
  res.inertia_history.push_back(res.inertia);

  std::vector<std::size_t> counts(k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    Matrix sums(k, dim);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      axpy(1.0, points[i], sums.row(res.assignments[i]));
      ++counts[res.assignments[i]];
    }
    std::vector<bool> taken(points.size(), false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < dim; ++j) res.centroids(c, j) = sums(c, j) / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (taken[i]) continue;
        const double d = squared_distance(points[i], res.centroids.row(res.assignments[i]));
        if (d > far_dist) {
          far_dist = d;
          far = i;
        }
      }
      taken[far] = true;
      std::copy(points[far].begin(), points[far].end(), res.centroids.row(c).begin());
    }

    std::vector<std::size_t> next(points.size());
    res.inertia = assign(points, res.centroids, next);
    res.inertia_history.push_back(res.inertia);
    res.iterations = iter + 1;
    const bool fixpoint = next == res.assignments;
    res.assignments = std::move(next);
    if (fixpoint) break;
  }
  return res;
}

namespace {

Matrix fit_book(std::span<const Vector> points, std::size_t size, std::uint64_t seed,
                std::size_t max_iters) {
  const std::size_t k = std::min(size, count_distinct(points));
  const KMeansResult km = kmeans(points, k, max_iters, seed);
  Matrix book(size, points[0].size());
  for (std::size_t r = 0; r < size; ++r) {
    const auto src = km.centroids.row(r % k);
    std::copy(src.begin(), src.end(), book.row(r).begin());
  }
  return book;
}

}  // namespace

CodebookSet two_stage_fit(std::span<const Vector> features, const QuantizerConfig& cfg,
                          std::uint64_t seed, std::size_t max_iters) {
  cfg.validate();
  if (features.empty()) throw InvalidArgument("two_stage_fit: no features");
  for (const auto& f : features) {
    if (f.size() != cfg.dim) throw InvalidArgument("two_stage_fit: feature dim does not match config");
  }

  Matrix coarse = fit_book(features, cfg.coarse_size, seed, max_iters);
  std::vector<Matrix> segments;
  if (cfg.use_residual) {
    const std::size_t seg = cfg.dim / cfg.num_segments;
    std::vector<std::vector<Vector>> slices(cfg.num_segments);
    for (const auto& f : features) {
      const auto centre = coarse.row(nearest_row(f, coarse));
      for (std::size_t k = 0; k < cfg.num_segments; ++k) {
        Vector r(seg);
        for (std::size_t j = 0; j < seg; ++j) r[j] = f[k * seg + j] - centre[k * seg + j];
        slices[k].push_back(std::move(r));
      }
    }
    for (std::size_t k = 0; k < cfg.num_segments; ++k) {
      segments.push_back(fit_book(slices[k], cfg.segment_size, seed + 1 + k, max_iters));
    }
  }
  return CodebookSet(std::move(coarse), std::move(segments));
}

}  // namespace vidq
