#include "pamt/mil/mil.hpp"

#include <cmath>

#include "pamt/numerics/errors.hpp"

namespace pamt {

std::string_view to_string(MilHeadKind kind) {
    switch (kind) {
        case MilHeadKind::gated_attention: return "gated_attention";
        case MilHeadKind::mean_pooling: return "mean_pooling";
        case MilHeadKind::max_pooling: return "max_pooling";
    }
    return "unknown";
}

MilHeadKind parse_mil_head_kind(std::string_view name) {
    for (auto k : {MilHeadKind::gated_attention, MilHeadKind::mean_pooling, MilHeadKind::max_pooling})
        if (to_string(k) == name) return k;
    throw InvalidArgument("unknown MIL head '" + std::string(name) +
                          "' (valid: gated_attention, mean_pooling, max_pooling)");
}

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : t.storage()) v = rng.normal(0.0, std);
    return t;
}

}  // namespace

MilHead make_mil_head(ParamRegistry& registry, const std::string& prefix, MilHeadKind kind, std::size_t feature_dim,
                      std::size_t attention_dim, Rng& rng) {
    if (feature_dim == 0) throw InvalidArgument("mil: feature_dim must be positive");
    MilHead h;
    h.kind = kind;
    h.feature_dim = feature_dim;
    if (kind == MilHeadKind::gated_attention) {
        if (attention_dim == 0) throw InvalidArgument("mil: attention_dim must be positive");
        h.attention_dim = attention_dim;
        h.v1 = registry.add(prefix + ".V1", he_normal({attention_dim, feature_dim}, feature_dim, rng));
        h.v2 = registry.add(prefix + ".V2", he_normal({attention_dim, feature_dim}, feature_dim, rng));
        h.w = registry.add(prefix + ".w", he_normal({attention_dim}, attention_dim, rng));
    }
    h.classifier_weight = registry.add(prefix + ".classifier.weight", Tensor({feature_dim}));
    h.classifier_bias = registry.add(prefix + ".classifier.bias", Tensor({1}));
    return h;
}

std::size_t parameter_count(const MilHead& head, const ParamRegistry& registry) {
    std::size_t n = registry.at(head.classifier_weight).value.size() + registry.at(head.classifier_bias).value.size();
    if (head.kind == MilHeadKind::gated_attention) {
        n += registry.at(head.v1).value.size() + registry.at(head.v2).value.size() + registry.at(head.w).value.size();
    }
    return n;
}

BoundHead bind_head(Tape& tape, ParamRegistry& registry, const MilHead& head) {
    BoundHead b;
    b.kind = head.kind;
    b.feature_dim = head.feature_dim;
    b.attention_dim = head.attention_dim;
    if (head.kind == MilHeadKind::gated_attention) {
        b.v1 = tape.param(registry, head.v1);
        b.v2 = tape.param(registry, head.v2);
        b.w = tape.param(registry, head.w);
    }
    b.classifier_weight = tape.param(registry, head.classifier_weight);
    b.classifier_bias = tape.param(registry, head.classifier_bias);
    return b;
}

namespace {

void check_features(const Tape& tape, Var features, const BoundHead& head, const char* op) {
    const Tensor& f = tape.value(features);
    if (f.rank() != 2 || f.dim(1) != head.feature_dim) throw ShapeError(op, f.shape(), Shape{0, head.feature_dim});
}

}  // namespace

Var attention_scores(Tape& tape, Var features, const BoundHead& head) {
    if (head.kind != MilHeadKind::gated_attention) throw InvalidArgument("attention_scores: head has no attention");
    check_features(tape, features, head, "attention_scores");
    const std::size_t m = tape.value(features).dim(0);
    // (M x D)(D x L) -> (M x L)
    Var u = tape.tanh(tape.matmul(features, head.v1, false, true));
    Var g = tape.sigmoid(tape.matmul(features, head.v2, false, true));
    Var logits = tape.matmul(tape.mul(u, g), tape.reshape(head.w, {head.attention_dim, 1}));
    return tape.softmax(tape.reshape(logits, {m}), 0);
}

Var aggregate(Tape& tape, Var features, const BoundHead& head) {
    check_features(tape, features, head, "aggregate");
    switch (head.kind) {
        case MilHeadKind::gated_attention: {
            const std::size_t m = tape.value(features).dim(0);
            Var alpha = tape.reshape(attention_scores(tape, features, head), {1, m});
            return tape.reshape(tape.matmul(alpha, features), {head.feature_dim});
        }
        case MilHeadKind::mean_pooling: return tape.mean_rows(features);
        case MilHeadKind::max_pooling: return tape.max_rows(features);
    }
    throw InvalidArgument("aggregate: unknown head kind");
}

Var classify_logit(Tape& tape, Var embedding, const BoundHead& head) {
    const Tensor& e = tape.value(embedding);
    if (e.size() != head.feature_dim) throw ShapeError("classify_bag", e.shape(), Shape{head.feature_dim});
    Var e_row = tape.reshape(embedding, {1, head.feature_dim});
    Var z = tape.matmul(e_row, tape.reshape(head.classifier_weight, {head.feature_dim, 1}));
    return tape.add(tape.reshape(z, {1}), head.classifier_bias);
}

Var bag_loss(Tape& tape, Var logit, int label) {
    if (label != 0 && label != 1) throw InvalidArgument("bag_loss: label must be 0 or 1");
    return tape.bce_with_logits(logit, static_cast<double>(label));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

BagPrediction predict_bag(const Tensor& features, const MilHead& head, ParamRegistry& registry) {
    if (features.rank() != 2 || features.dim(0) == 0) throw InvalidArgument("predict_bag: empty bag");
    Tape tape(false);
    BoundHead bh = bind_head(tape, registry, head);
    Var f = tape.constant(features);
    BagPrediction out;
    if (head.kind == MilHeadKind::gated_attention) {
        Var alpha = attention_scores(tape, f, bh);
        out.alpha = tape.value(alpha);
        const std::size_t m = features.dim(0);
        Var e = tape.reshape(tape.matmul(tape.reshape(alpha, {1, m}), f), {head.feature_dim});
        out.embedding = tape.value(e);
        out.logit = tape.value(classify_logit(tape, e, bh))[0];
    } else {
        Var e = aggregate(tape, f, bh);
        out.embedding = tape.value(e);
        out.logit = tape.value(classify_logit(tape, e, bh))[0];
    }
    out.probability = sigmoid(out.logit);
    return out;
}

}  // namespace pamt
