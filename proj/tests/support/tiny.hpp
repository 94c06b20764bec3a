#pragma once

#include "pamt/data/dataset.hpp"
#include "pamt/trainer/pipeline.hpp"

namespace pamt::testing {

/// A dataset small enough to train end to end in well under a second.
inline SyntheticConfig tiny_data_config(std::uint64_t seed = 1) {
    SyntheticConfig cfg;
    cfg.n_bags = 24;
    cfg.min_patches = 4;
    cfg.max_patches = 8;
    cfg.patch_size = 8;
    cfg.witness_rate = 0.25;
    cfg.blob_sigma = 1.5;
    cfg.seed = seed;
    return cfg;
}

inline TrainConfig tiny_train_config(TuningStrategy strategy, std::uint64_t seed = 1) {
    TrainConfig cfg;
    cfg.strategy = strategy;
    cfg.seed = seed;
    cfg.epochs = 2;
    cfg.topk = 3;
    cfg.clusters = 2;
    cfg.pad_size = 1;
    cfg.scorer_epochs = 2;
    cfg.attention_dim = 8;
    cfg.adam.lr = 1e-2;
    cfg.backbone.block_channels = {4, 6};
    cfg.ratios = {0.5, 0.25, 0.25};
    return cfg;
}

}  // namespace pamt::testing
