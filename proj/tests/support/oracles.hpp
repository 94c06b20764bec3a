#pragma once

// Independent reference implementations used as test oracles. Each one is
// deliberately the most direct formulation, sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "pamt/numerics/rng.hpp"

namespace pamt::oracle {

/// O(n^2) pairwise AUC: correctly ordered pairs plus half the ties.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            pairs += 1;
            if (scores[i] > scores[j]) good += 1;
            else if (scores[i] == scores[j]) good += 0.5;
        }
    }
    return good / pairs;
}

/// Full stable sort by descending score, take K, sort indices ascending.
inline std::vector<std::size_t> sort_topk(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(std::min(k, idx.size()));
    std::sort(idx.begin(), idx.end());
    return idx;
}

using Points = std::vector<std::vector<double>>;

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

inline std::size_t nearest(const std::vector<double>& x, const Points& centres) {
    std::size_t best = 0;
    double bd = sq_dist(x, centres[0]);
    for (std::size_t c = 1; c < centres.size(); ++c) {
        const double d = sq_dist(x, centres[c]);
        if (d < bd) {
            bd = d;
            best = c;
        }
    }
    return best;
}

struct LloydResult {
    Points centres;
    std::vector<std::size_t> assignment;
    std::vector<double> sse;
};

/// Textbook k-means++ seeding followed by Lloyd iterations, written from the
/// documented procedure: first centre uniform, later centres drawn with
/// probability proportional to D^2 (inverse-CDF on one uniform draw, skipping
/// zero-weight points); assignment ties to the lower centre index; an empty
/// cluster takes the point farthest from its own centre among clusters with
/// more than one member; stop when the largest centre move is below tol.
inline LloydResult lloyd(const Points& x, std::size_t k, std::uint64_t seed, std::size_t max_iters, double tol) {
    Rng rng(seed);
    const std::size_t n = x.size();
    LloydResult r;
    r.centres.push_back(x[rng.uniform_int(n)]);
    while (r.centres.size() < k) {
        std::vector<double> w(n);
        double total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : r.centres) best = std::min(best, sq_dist(x[i], c));
            w[i] = best;
            total += best;
        }
        const double target = rng.uniform() * total;
        double cum = 0;
        std::size_t pick = n;
        for (std::size_t i = 0; i < n; ++i) {
            cum += w[i];
            if (cum > target && w[i] > 0) {
                pick = i;
                break;
            }
        }
        if (pick == n)
            for (std::size_t i = n; i-- > 0;)
                if (w[i] > 0) {
                    pick = i;
                    break;
                }
        r.centres.push_back(x[pick]);
    }
    r.assignment.assign(n, 0);
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) r.assignment[i] = nearest(x[i], r.centres);
        for (std::size_t c = 0; c < k; ++c) {
            std::vector<std::size_t> counts(k, 0);
            for (auto a : r.assignment) ++counts[a];
            if (counts[c] > 0) continue;
            std::size_t far = n;
            double fd = -1;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[r.assignment[i]] <= 1) continue;
                const double d = sq_dist(x[i], r.centres[r.assignment[i]]);
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            r.assignment[far] = c;
            r.centres[c] = x[far];
        }
        Points next(k, std::vector<double>(x[0].size(), 0.0));
        std::vector<double> counts(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            counts[r.assignment[i]] += 1;
            for (std::size_t d = 0; d < x[i].size(); ++d) next[r.assignment[i]][d] += x[i][d];
        }
        double shift = 0;
        for (std::size_t c = 0; c < k; ++c) {
            for (auto& v : next[c]) v /= counts[c];
            shift = std::max(shift, std::sqrt(sq_dist(next[c], r.centres[c])));
        }
        r.centres = next;
        double sse = 0;
        for (std::size_t i = 0; i < n; ++i) sse += sq_dist(x[i], r.centres[r.assignment[i]]);
        r.sse.push_back(sse);
        if (shift < tol) break;
    }
    return r;
}

/// Hand-written Adam with L2 decay folded into the gradient.
struct AdamLoop {
    double lr, decay, b1, b2, eps;
    double m = 0, v = 0;
    std::size_t t = 0;
    double step(double theta, double grad) {
        ++t;
        const double g = grad + decay * theta;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
        const double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
        return theta - lr * mh / (std::sqrt(vh) + eps);
    }
};

}  // namespace pamt::oracle
