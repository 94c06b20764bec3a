#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/tape.hpp"

namespace pamt {

struct BackboneConfig {
    std::vector<std::size_t> block_channels{16, 32, 64};
    std::size_t input_size = 32;
    std::size_t input_channels = 3;
    /// Blocks that receive an adapter; unset means the last block only.
    std::optional<std::set<std::size_t>> adapter_positions;
    std::size_t adapter_bottleneck_ratio = 4;

    /// Throws InvalidArgument on an inconsistent configuration.
    void validate() const;
    std::size_t block_count() const noexcept { return block_channels.size(); }
    std::size_t feature_dim() const { return block_channels.back(); }
    std::set<std::size_t> resolved_adapter_positions() const;
    std::size_t block_in_channels(std::size_t block) const;
};

/// 3x3 stride-1 convolution, ReLU, 2x2 average pool.
struct ConvBlock {
    ParamId weight;
    ParamId bias;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
};

/// Squeeze-style gate b = sigmoid(W2 relu(W1 GAP(f_prev))) for one block.
struct AdapterBlock {
    std::size_t block = 0;
    ParamId w1;  // (hidden x in_channels)
    ParamId w2;  // (out_channels x hidden)
    std::size_t in_channels = 0;
    std::size_t hidden = 0;
    std::size_t out_channels = 0;
};

/// Handles to the backbone parameters held in a ParamRegistry.
class Backbone {
public:
    /// Registers He-initialised, frozen conv weights (zero biases) under
    /// "backbone.block{i}.weight|bias". Deterministic in (config, seed).
    static Backbone init(const BackboneConfig& config, std::uint64_t seed, ParamRegistry& registry);

    /// Registers adapters at the configured positions as "adapter.{i}.W1|W2";
    /// W1 He-initialised, W2 zero so every gate starts at 0.5.
    void attach_adapters(ParamRegistry& registry, std::uint64_t seed);

    const BackboneConfig& config() const noexcept { return config_; }
    std::span<const ConvBlock> blocks() const noexcept { return blocks_; }
    std::span<const AdapterBlock> adapters() const noexcept { return adapters_; }
    const AdapterBlock* adapter_for(std::size_t block) const noexcept;

    /// Checksum over the conv block parameters only.
    std::string conv_checksum(const ParamRegistry& registry) const;

private:
    BackboneConfig config_;
    std::vector<ConvBlock> blocks_;
    std::vector<AdapterBlock> adapters_;
};

struct BoundAdapter {
    Var w1;
    Var w2;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
};

struct BoundBlock {
    Var weight;
    Var bias;
    std::optional<BoundAdapter> adapter;
};

/// Places the backbone parameters on `tape` once so that several patches can
/// share them.
std::vector<BoundBlock> bind_backbone(Tape& tape, ParamRegistry& registry, const Backbone& backbone,
                                      bool with_adapters);

/// b = sigmoid(W2 relu(W1 GAP(f_prev))), shape (out_channels).
Var adapter_gate(Tape& tape, Var f_prev, const BoundAdapter& adapter);

/// g(f_prev), multiplied channel-wise by the adapter gate when one is bound.
Var block_forward(Tape& tape, Var f_prev, const BoundBlock& block);

/// Runs blocks [first, last) on a (C,H,W) map.
Var run_blocks(Tape& tape, Var x, std::span<const BoundBlock> blocks, std::size_t first, std::size_t last);

/// Runs blocks [first, end) then global-average-pools to (D).
Var backbone_features(Tape& tape, Var x, std::span<const BoundBlock> blocks, std::size_t first = 0);

/// Forward-only feature extraction, one row per patch in input order.
/// All patches must share one (C,H,W) shape.
Tensor extract_features(std::span<const Tensor> patches, const Backbone& backbone, ParamRegistry& registry,
                        bool with_adapters = false);

/// Forward-only output of the first `depth` blocks for one patch.
Tensor extract_prefix(const Tensor& patch, const Backbone& backbone, ParamRegistry& registry, std::size_t depth);

}  // namespace pamt
