#pragma once

#include <span>

namespace pamt {

/// Mann-Whitney AUC: (correctly ordered pairs + half the ties) / (pos * neg).
/// Throws unless both labels (0/1) are present.
double auc(std::span<const double> scores, std::span<const int> labels);

struct F1Acc {
    double f1 = 0.0;
    double acc = 0.0;
};

/// Predictions are score >= threshold. F1 is the positive-class F1 and is 0
/// when nothing is predicted positive.
F1Acc f1_acc(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace pamt
