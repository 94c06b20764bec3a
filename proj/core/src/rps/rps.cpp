#include "pamt/rps/rps.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/rng.hpp"

namespace pamt {

std::vector<double> Scorer::score(const Tensor& features) {
    const Tensor alpha = predict_bag(features, head, registry).alpha;
    return alpha.storage();
}

Scorer pretrain_scorer(std::span<const Tensor> bag_features, std::span<const int> labels, const ScorerConfig& config) {
    if (bag_features.size() != labels.size()) throw InvalidArgument("pretrain_scorer: features/labels size mismatch");
    if (bag_features.size() < 2) throw InvalidArgument("pretrain_scorer: need at least two bags");
    const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
    const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
    if (!has_pos || !has_neg) throw InvalidArgument("pretrain_scorer: training set must contain both classes");

    Scorer s;
    Rng init_rng(mix_seed(config.seed, 0x73636f72));
    const std::size_t d = bag_features.front().dim(1);
    s.head = make_mil_head(s.registry, "rps", MilHeadKind::gated_attention, d, config.attention_dim, init_rng);

    Adam adam(config.adam);
    std::vector<std::size_t> order(bag_features.size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(mix_seed(config.seed, 0x1000 + epoch));
        shuffle_rng.shuffle(order);
        double total = 0.0;
        for (std::size_t idx : order) {
            s.registry.zero_grad();
            Tape tape;
            BoundHead h = bind_head(tape, s.registry, s.head);
            Var f = tape.constant(bag_features[idx]);
            Var loss = bag_loss(tape, classify_logit(tape, aggregate(tape, f, h), h), labels[idx]);
            total += tape.value(loss)[0];
            tape.backward(loss);
            adam.step(s.registry);
        }
        s.loss_trace.push_back(total / static_cast<double>(order.size()));
    }
    s.registry.zero_grad();
    return s;
}

std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k) {
    if (scores.empty()) throw InvalidArgument("select_topk: empty score vector");
    if (k == 0) throw InvalidArgument("select_topk: K must be positive");
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (k >= scores.size()) return idx;
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), better);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

SampledBag sample_bag(std::size_t bag_id, int label, std::span<const double> scores, std::size_t k) {
    SampledBag out;
    out.bag_id = bag_id;
    out.label = label;
    out.selected_indices = select_topk(scores, k);
    for (auto i : out.selected_indices) out.scores.push_back(scores[i]);
    return out;
}

void write_sampled_csv(const std::filesystem::path& path, std::span<const SampledBag> bags) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "bag_id,original_index,score\n" << std::setprecision(17);
    for (const auto& b : bags)
        for (std::size_t j = 0; j < b.selected_indices.size(); ++j)
            out << b.bag_id << ',' << b.selected_indices[j] << ',' << b.scores[j] << '\n';
}

}  // namespace pamt
