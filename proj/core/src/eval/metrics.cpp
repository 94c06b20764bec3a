#include "pamt/eval/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/tensor.hpp"

namespace pamt {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, const char* fn) {
    if (scores.size() != labels.size()) {
        throw ShapeError(fn, Shape{scores.size()}, Shape{labels.size()});
    }
    for (int l : labels)
        if (l != 0 && l != 1) throw InvalidArgument(std::string(fn) + ": labels must be 0 or 1");
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
    check_inputs(scores, labels, "auc");
    const auto n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Rank-sum form with mid-ranks for ties; equals the pairwise count.
    double pos = 0, neg = 0, rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (labels[order[k]] == 1) {
                pos += 1;
                rank_sum_pos += mid_rank;
            } else {
                neg += 1;
            }
        }
        i = j + 1;
    }
    if (pos == 0 || neg == 0) throw InvalidArgument("auc: both classes must be present");
    return (rank_sum_pos - pos * (pos + 1) / 2.0) / (pos * neg);
}

F1Acc f1_acc(std::span<const double> scores, std::span<const int> labels, double threshold) {
    check_inputs(scores, labels, "f1_acc");
    if (scores.empty()) throw InvalidArgument("f1_acc: no samples");
    std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
        if (pred == 1 && labels[i] == 1) ++tp;
        if (pred == 1 && labels[i] == 0) ++fp;
        if (pred == 0 && labels[i] == 1) ++fn;
    }
    F1Acc r;
    r.acc = static_cast<double>(correct) / static_cast<double>(scores.size());
    const std::size_t denom = 2 * tp + fp + fn;
    r.f1 = (tp == 0 || denom == 0) ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    return r;
}

}  // namespace pamt
