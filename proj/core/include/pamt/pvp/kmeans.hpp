#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pamt/numerics/tensor.hpp"

namespace pamt {

/// C x D cluster centres, frozen once fitted.
struct Centroids {
    Tensor mu;

    std::size_t count() const { return mu.dim(0); }
    std::size_t dim() const { return mu.dim(1); }
};

struct KMeansResult {
    Centroids centroids;
    std::vector<std::size_t> assignment;  // per input row
    std::vector<double> sse_trace;        // after each Lloyd iteration
    std::size_t iterations = 0;
    bool converged = false;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// k-means++ seeding followed by Lloyd iterations.
///
/// Seeding: the first centre is row uniform_int(N); each further centre is
/// the first row whose running sum of D^2 exceeds uniform() * sum(D^2).
/// Each iteration assigns every row to its nearest centre (ties to the
/// lower index), moves any emptied centre onto the row farthest from its own
/// centre, then recomputes means. Stops when no centre moves by tol or more,
/// or after max_iters. Throws if SSE ever increases.
KMeansResult kmeans_fit(const Tensor& features, std::size_t clusters, std::uint64_t seed,
                        std::size_t max_iters = 100, double tol = 1e-6);

/// argmin_c ||feature - mu_c||, ties to the lower index.
std::size_t assign(std::span<const double> feature, const Centroids& centroids);

}  // namespace pamt
