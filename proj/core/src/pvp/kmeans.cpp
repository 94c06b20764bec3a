#include "pamt/pvp/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/rng.hpp"

namespace pamt {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

namespace {

std::span<const double> row_of(const Tensor& m, std::size_t r) {
    return m.data().subspan(r * m.dim(1), m.dim(1));
}

std::span<double> row_of(Tensor& m, std::size_t r) { return m.data().subspan(r * m.dim(1), m.dim(1)); }

Tensor seed_plus_plus(const Tensor& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.dim(0), d = x.dim(1);
    Tensor mu({k, d});
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = static_cast<std::size_t>(rng.uniform_int(n));
    for (std::size_t c = 0;; ++c) {
        std::copy_n(row_of(x, chosen).begin(), d, row_of(mu, c).begin());
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(row_of(x, i), row_of(mu, c)));
            total += nearest[i];
        }
        if (!(total > 0.0)) throw InvalidArgument("kmeans: fewer distinct points than clusters");
        const double r = rng.uniform() * total;
        double acc = 0.0;
        chosen = n;
        for (std::size_t i = 0; i < n; ++i) {
            acc += nearest[i];
            if (acc > r && nearest[i] > 0.0) {
                chosen = i;
                break;
            }
        }
        if (chosen == n) {
            // r landed in the rounding slack at the very end of the sum
            for (std::size_t i = n; i-- > 0;)
                if (nearest[i] > 0.0) {
                    chosen = i;
                    break;
                }
        }
    }
    return mu;
}

}  // namespace

std::size_t assign(std::span<const double> feature, const Centroids& centroids) {
    if (feature.size() != centroids.dim()) throw ShapeError("assign", Shape{feature.size()}, centroids.mu.shape());
    std::size_t best = 0;
    double best_d = squared_distance(feature, row_of(centroids.mu, 0));
    for (std::size_t c = 1; c < centroids.count(); ++c) {
        const double dist = squared_distance(feature, row_of(centroids.mu, c));
        if (dist < best_d) {
            best_d = dist;
            best = c;
        }
    }
    return best;
}

KMeansResult kmeans_fit(const Tensor& features, std::size_t clusters, std::uint64_t seed, std::size_t max_iters,
                        double tol) {
    if (features.rank() != 2) throw ShapeError("kmeans_fit", features.shape(), Shape{0, 0});
    if (clusters == 0) throw InvalidArgument("kmeans: C must be at least 1");
    const std::size_t n = features.dim(0), d = features.dim(1);
    if (n < clusters) {
        throw InvalidArgument("kmeans: N (" + std::to_string(n) + ") < C (" + std::to_string(clusters) + ")");
    }

    Rng rng(seed);
    KMeansResult res;
    res.centroids.mu = seed_plus_plus(features, clusters, rng);
    Tensor& mu = res.centroids.mu;
    res.assignment.assign(n, 0);
    double prev_sse = std::numeric_limits<double>::infinity();

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<double> dist(n);
        std::vector<std::size_t> counts(clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            res.assignment[i] = assign(row_of(features, i), res.centroids);
            dist[i] = squared_distance(row_of(features, i), row_of(mu, res.assignment[i]));
            ++counts[res.assignment[i]];
        }
        // Re-seed empty clusters on the row farthest from its centre.
        for (std::size_t c = 0; c < clusters; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[res.assignment[i]] <= 1) continue;
                if (far == n || dist[i] > dist[far]) far = i;
            }
            if (far == n) throw InvalidArgument("kmeans: cannot re-seed empty cluster");
            --counts[res.assignment[far]];
            res.assignment[far] = c;
            counts[c] = 1;
            dist[far] = 0.0;
            std::copy_n(row_of(features, far).begin(), d, row_of(mu, c).begin());
        }

        Tensor next({clusters, d});
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = row_of(next, res.assignment[i]);
            auto src = row_of(features, i);
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < clusters; ++c) {
            auto row = row_of(next, c);
            for (double& v : row) v /= static_cast<double>(counts[c]);
            shift = std::max(shift, std::sqrt(squared_distance(row, row_of(mu, c))));
        }
        mu = std::move(next);

        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i) sse += squared_distance(row_of(features, i), row_of(mu, res.assignment[i]));
        if (sse > prev_sse * (1.0 + 1e-12) + 1e-12) {
            throw Error("kmeans: SSE increased from " + std::to_string(prev_sse) + " to " + std::to_string(sse));
        }
        res.sse_trace.push_back(sse);
        prev_sse = sse;
        res.iterations = iter + 1;
        if (shift < tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace pamt
