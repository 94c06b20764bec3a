#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pamt/mil/mil.hpp"
#include "pamt/numerics/param.hpp"
#include "pamt/trainer/optim.hpp"

namespace pamt {

struct ScorerConfig {
    std::size_t epochs = 20;
    AdamConfig adam{};
    std::size_t attention_dim = 128;
    std::uint64_t seed = 0;
};

/// Gated-attention head trained on frozen features, plus its loss trace
/// (mean bag loss per epoch).
struct Scorer {
    ParamRegistry registry;
    MilHead head;
    std::vector<double> loss_trace;

    /// Attention weights over the rows of a bag's (M x D) feature matrix.
    std::vector<double> score(const Tensor& features);
    std::string checksum() const { return registry.checksum(); }
};

/// Trains the scorer with Adam on bag cross-entropy, one step per bag, bags
/// reshuffled each epoch. Requires at least two bags and both labels.
Scorer pretrain_scorer(std::span<const Tensor> bag_features, std::span<const int> labels, const ScorerConfig& config);

/// Indices of the K largest scores, ties to the lower index, returned in
/// ascending index order. K >= M returns every index.
std::vector<std::size_t> select_topk(std::span<const double> scores, std::size_t k);

struct SampledBag {
    std::size_t bag_id = 0;
    std::vector<std::size_t> selected_indices;  // strictly increasing
    std::vector<double> scores;                 // alpha of each selected patch
    int label = 0;
};

SampledBag sample_bag(std::size_t bag_id, int label, std::span<const double> scores, std::size_t k);

/// CSV with header bag_id,original_index,score.
void write_sampled_csv(const std::filesystem::path& path, std::span<const SampledBag> bags);

}  // namespace pamt
