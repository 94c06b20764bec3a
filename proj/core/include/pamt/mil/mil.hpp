#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/tape.hpp"

namespace pamt {

enum class MilHeadKind { gated_attention, mean_pooling, max_pooling };

std::string_view to_string(MilHeadKind kind);
MilHeadKind parse_mil_head_kind(std::string_view name);

/// Bag-level classifier over patch features.
///
/// Gated attention: alpha = softmax_j(w^T(tanh(V1 f_j) * sigmoid(V2 f_j))),
/// embedding = sum_j alpha_j f_j. Mean/max pooling heads carry only the
/// linear classifier. Every head ends in logit = c^T e + b.
struct MilHead {
    MilHeadKind kind = MilHeadKind::gated_attention;
    std::size_t feature_dim = 0;
    std::size_t attention_dim = 0;
    ParamId v1;  // (L x D), gated attention only
    ParamId v2;  // (L x D), gated attention only
    ParamId w;   // (L), gated attention only
    ParamId classifier_weight;  // (D)
    ParamId classifier_bias;    // (1)
};

/// Registers "{prefix}.V1|V2|w|classifier.weight|classifier.bias".
/// He initialisation for V1, V2, w; zeros for the classifier.
MilHead make_mil_head(ParamRegistry& registry, const std::string& prefix, MilHeadKind kind, std::size_t feature_dim,
                      std::size_t attention_dim, Rng& rng);

/// Scalar count of the head's parameters.
std::size_t parameter_count(const MilHead& head, const ParamRegistry& registry);

struct BoundHead {
    MilHeadKind kind = MilHeadKind::gated_attention;
    std::size_t feature_dim = 0;
    std::size_t attention_dim = 0;
    Var v1, v2, w, classifier_weight, classifier_bias;
};

BoundHead bind_head(Tape& tape, ParamRegistry& registry, const MilHead& head);

/// (M x D) features -> (M) attention weights. Gated-attention heads only.
Var attention_scores(Tape& tape, Var features, const BoundHead& head);
/// (M x D) features -> (D) bag embedding.
Var aggregate(Tape& tape, Var features, const BoundHead& head);
/// (D) embedding -> (1) logit.
Var classify_logit(Tape& tape, Var embedding, const BoundHead& head);
/// Binary cross-entropy with logits; label must be 0 or 1.
Var bag_loss(Tape& tape, Var logit, int label);

double sigmoid(double x);

struct BagPrediction {
    Tensor alpha;  // attention weights, or empty (shape (1), zero) for pooling heads
    Tensor embedding;
    double logit = 0.0;
    double probability = 0.5;
};

/// Forward-only evaluation of one bag.
BagPrediction predict_bag(const Tensor& features, const MilHead& head, ParamRegistry& registry);

}  // namespace pamt
