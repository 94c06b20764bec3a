#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pamt/backbone/backbone.hpp"
#include "pamt/data/dataset.hpp"
#include "pamt/mil/mil.hpp"
#include "pamt/numerics/param.hpp"
#include "pamt/pvp/kmeans.hpp"
#include "pamt/pvp/prompt.hpp"
#include "pamt/rps/rps.hpp"
#include "pamt/trainer/optim.hpp"

namespace pamt {

enum class TuningStrategy { frozen_baseline, pamt, fully_tuning, partial_last_layer, bias_only };

std::string_view to_string(TuningStrategy strategy);
/// Throws InvalidArgument listing the valid names.
TuningStrategy parse_tuning_strategy(std::string_view name);
std::vector<TuningStrategy> all_strategies();

/// Component switches. PVP and AMT only take effect under the pamt strategy.
struct ComponentToggles {
    bool rps = true;
    bool pvp = true;
    bool amt = true;

    /// "baseline", "RPS", "RPS+PVP", "RPS+AMT", "RPS+PVP+AMT", or "PVP+AMT" etc.
    std::string label() const;
};

struct TrainConfig {
    TuningStrategy strategy = TuningStrategy::pamt;
    ComponentToggles components;
    MilHeadKind head = MilHeadKind::gated_attention;
    std::size_t attention_dim = 128;

    std::size_t epochs = 100;
    AdamConfig adam;
    double prompt_lr0 = 40.0;

    std::size_t topk = 64;
    std::size_t clusters = 4;
    std::size_t pad_size = 2;

    std::size_t scorer_epochs = 20;
    double scorer_lr = 1e-4;

    std::size_t kmeans_max_iters = 100;
    double kmeans_tol = 1e-6;

    std::uint64_t seed = 0;
    double train_fraction = 1.0;

    BackboneConfig backbone;
    std::uint64_t backbone_seed = 0;
    std::uint64_t split_seed = 0;
    SplitRatios ratios;

    void validate() const;
    bool uses_prompts() const noexcept { return strategy == TuningStrategy::pamt && components.pvp; }
    bool uses_adapters() const noexcept { return strategy == TuningStrategy::pamt && components.amt; }
};

/// Raw frozen stage-1 features of every bag (M_i x D), reusable across runs
/// that share the dataset and backbone weights.
struct Stage1Cache {
    std::string key;
    std::vector<Tensor> features;
};

struct SplitMetrics {
    double auc = 0.0;
    double f1 = 0.0;
    double acc = 0.0;
    std::size_t n_samples = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
    double prompt_lr = 0.0;
};

struct BagScore {
    std::size_t bag_id = 0;
    int label = 0;
    double probability = 0.0;
};

struct RunResult {
    TrainConfig config;
    std::string dataset_checksum;
    std::string backbone_checksum;  // conv weights at init
    std::string final_backbone_checksum;
    std::string scorer_checksum;  // empty without RPS
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    std::size_t selected_patches = 0;  // over all bags

    std::size_t best_epoch = 0;
    SplitMetrics val;
    SplitMetrics test;
    std::vector<BagScore> test_scores;

    std::vector<EpochRecord> trace;
    std::vector<double> scorer_trace;

    std::size_t head_params = 0;
    std::size_t trainable_params = 0;  // prompts counted by border entries
    std::size_t additional_params() const noexcept { return trainable_params - head_params; }

    std::map<std::string, std::string> initial_checksums;  // per parameter
    std::map<std::string, std::string> final_checksums;
    std::vector<std::string> trainable_names;

    std::vector<NamedTensor> snapshot;  // best-validation parameter values
    std::vector<SampledBag> sampled;
    std::optional<Centroids> centroids;
    Assignment assignment;
    double elapsed_seconds = 0.0;
};

/// The four-stage pipeline: frozen features, representative patch sampling,
/// prototype clustering, then end-to-end training of the strategy's
/// trainable set. Backbone features pass through fixed per-channel
/// standardisations: stage-1 features for scoring and clustering use
/// training-bag statistics; stage-4 features use statistics of the initial
/// (untrained) stage-4 extractor over the selected training patches.
/// Construct, then call run(); after run() (or prepare() plus a snapshot
/// restore) evaluate() scores any split with the current weights.
class Pipeline {
public:
    Pipeline(std::span<const WsiBag> bags, TrainConfig config, Stage1Cache* cache = nullptr);

    /// Stages 1-3 and model construction. Called by run() if needed.
    void prepare();
    RunResult run();

    SplitMetrics evaluate(std::span<const std::size_t> positions, std::vector<BagScore>* scores = nullptr);
    void restore(const std::vector<NamedTensor>& snapshot);
    /// Cross-entropy graph of one bag (by position), exactly as a training
    /// step builds it.
    Var step_loss(Tape& tape, std::size_t position);

    const DatasetSplit& split() const noexcept { return split_; }
    const std::vector<std::size_t>& train_positions() const noexcept { return train_; }
    ParamRegistry& registry() noexcept { return registry_; }
    const Backbone& backbone() const noexcept { return backbone_; }
    const std::vector<SampledBag>& sampled() const noexcept { return sampled_; }
    const std::optional<PromptBank>& prompts() const noexcept { return bank_; }

private:
    void stage1();
    void stage2(RunResult& out);
    void stage3();
    void build_model();
    void cache_prefixes();
    bool param_trainable(const std::string& name) const;
    void fit_feature_standardiser();
    /// Un-standardised stage-4 backbone features of the bag's selected patches.
    std::vector<Var> raw_bag_features(Tape& tape, std::size_t position);
    Var standardise(Tape& tape, Var raw);
    Var bag_logit(Tape& tape, std::size_t position);
    double train_epoch(std::size_t epoch, Adam& adam);

    std::span<const WsiBag> bags_;
    TrainConfig config_;
    Stage1Cache* cache_;
    Stage1Cache own_cache_;
    bool prepared_ = false;

    DatasetSplit split_;
    std::vector<std::size_t> train_;
    ParamRegistry registry_;
    Backbone backbone_;
    std::vector<Tensor> features_;  // standardised stage-1 features, by position
    Tensor feature_shift_;          // stage-4 standardisation: -mean
    Tensor feature_scale_;          //   and 1 / std of the initial model's features
    std::vector<SampledBag> sampled_;                // by position
    std::string scorer_checksum_;
    std::vector<double> scorer_trace_;
    std::optional<Centroids> centroids_;
    Assignment assignment_;
    std::optional<PromptBank> bank_;
    MilHead head_;
    std::size_t prefix_depth_ = 0;           // leading blocks computed once
    std::vector<std::vector<Tensor>> prefix_;  // by position, per selected patch
};

/// Trainable-parameter count with prompts counted by border entries.
std::size_t count_trainable(const ParamRegistry& registry, const std::optional<PromptBank>& bank);

}  // namespace pamt
