#include "pamt/backbone/backbone.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/rng.hpp"

namespace pamt {

void BackboneConfig::validate() const {
    if (block_channels.empty()) throw InvalidArgument("backbone: at least one block is required");
    for (auto c : block_channels)
        if (c == 0) throw InvalidArgument("backbone: block channel counts must be positive");
    if (input_channels == 0) throw InvalidArgument("backbone: input_channels must be positive");
    if (input_size < 4 * block_count()) {
        throw InvalidArgument("backbone: input_size " + std::to_string(input_size) + " < 4 * blocks (" +
                              std::to_string(4 * block_count()) + ")");
    }
    if (adapter_bottleneck_ratio == 0) throw InvalidArgument("backbone: adapter_bottleneck_ratio must be positive");
    if (adapter_positions) {
        for (auto p : *adapter_positions)
            if (p >= block_count()) throw InvalidArgument("backbone: adapter position " + std::to_string(p) + " out of range");
    }
}

std::set<std::size_t> BackboneConfig::resolved_adapter_positions() const {
    if (adapter_positions) return *adapter_positions;
    return {block_count() - 1};
}

std::size_t BackboneConfig::block_in_channels(std::size_t block) const {
    return block == 0 ? input_channels : block_channels.at(block - 1);
}

Backbone Backbone::init(const BackboneConfig& config, std::uint64_t seed, ParamRegistry& registry) {
    config.validate();
    Backbone b;
    b.config_ = config;
    Rng rng(mix_seed(seed, 0x6261636b));
    for (std::size_t i = 0; i < config.block_count(); ++i) {
        const std::size_t cin = config.block_in_channels(i);
        const std::size_t cout = config.block_channels[i];
        Tensor w({cout, cin, 3, 3});
        const double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
        for (double& v : w.storage()) v = rng.normal(0.0, std);
        const std::string prefix = "backbone.block" + std::to_string(i);
        ConvBlock block;
        block.weight = registry.add(prefix + ".weight", std::move(w), false);
        block.bias = registry.add(prefix + ".bias", Tensor({cout}), false);
        block.in_channels = cin;
        block.out_channels = cout;
        b.blocks_.push_back(block);
    }
    return b;
}

void Backbone::attach_adapters(ParamRegistry& registry, std::uint64_t seed) {
    if (!adapters_.empty()) throw InvalidArgument("backbone: adapters already attached");
    Rng rng(mix_seed(seed, 0x61647074));
    for (std::size_t pos : config_.resolved_adapter_positions()) {
        AdapterBlock a;
        a.block = pos;
        a.in_channels = config_.block_in_channels(pos);
        a.out_channels = config_.block_channels[pos];
        a.hidden = std::max<std::size_t>(1, a.in_channels / config_.adapter_bottleneck_ratio);
        Tensor w1({a.hidden, a.in_channels});
        const double std = std::sqrt(2.0 / static_cast<double>(a.in_channels));
        for (double& v : w1.storage()) v = rng.normal(0.0, std);
        const std::string prefix = "adapter." + std::to_string(pos);
        a.w1 = registry.add(prefix + ".W1", std::move(w1), true);
        a.w2 = registry.add(prefix + ".W2", Tensor({a.out_channels, a.hidden}), true);
        adapters_.push_back(a);
    }
}

const AdapterBlock* Backbone::adapter_for(std::size_t block) const noexcept {
    for (const auto& a : adapters_)
        if (a.block == block) return &a;
    return nullptr;
}

std::string Backbone::conv_checksum(const ParamRegistry& registry) const {
    std::string out;
    for (const auto& b : blocks_) {
        out += checksum(registry.at(b.weight).value);
        out += checksum(registry.at(b.bias).value);
    }
    std::uint64_t h = fnv1a({reinterpret_cast<const unsigned char*>(out.data()), out.size()});
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<BoundBlock> bind_backbone(Tape& tape, ParamRegistry& registry, const Backbone& backbone,
                                      bool with_adapters) {
    std::vector<BoundBlock> bound;
    for (std::size_t i = 0; i < backbone.blocks().size(); ++i) {
        const ConvBlock& b = backbone.blocks()[i];
        BoundBlock bb{tape.param(registry, b.weight), tape.param(registry, b.bias), std::nullopt};
        if (with_adapters) {
            if (const AdapterBlock* a = backbone.adapter_for(i)) {
                bb.adapter = BoundAdapter{tape.param(registry, a->w1), tape.param(registry, a->w2), a->in_channels,
                                          a->out_channels};
            }
        }
        bound.push_back(bb);
    }
    return bound;
}

Var adapter_gate(Tape& tape, Var f_prev, const BoundAdapter& adapter) {
    const Tensor& f = tape.value(f_prev);
    if (f.rank() != 3 || f.dim(0) != adapter.in_channels) {
        throw ShapeError("adapter_gate", f.shape(), Shape{adapter.in_channels, 0, 0});
    }
    Var pooled = tape.reshape(tape.global_avg_pool(f_prev), {adapter.in_channels, 1});
    Var hidden = tape.relu(tape.matmul(adapter.w1, pooled));
    Var gate = tape.sigmoid(tape.matmul(adapter.w2, hidden));
    return tape.reshape(gate, {adapter.out_channels});
}

Var block_forward(Tape& tape, Var f_prev, const BoundBlock& block) {
    Var g = tape.avg_pool2(tape.relu(tape.conv2d(f_prev, block.weight, block.bias, 1, 1)));
    if (!block.adapter) return g;
    return tape.channel_mul(g, adapter_gate(tape, f_prev, *block.adapter));
}

Var run_blocks(Tape& tape, Var x, std::span<const BoundBlock> blocks, std::size_t first, std::size_t last) {
    for (std::size_t i = first; i < last; ++i) x = block_forward(tape, x, blocks[i]);
    return x;
}

Var backbone_features(Tape& tape, Var x, std::span<const BoundBlock> blocks, std::size_t first) {
    return tape.global_avg_pool(run_blocks(tape, x, blocks, first, blocks.size()));
}

namespace {

void check_patch(const Tensor& p, const Tensor& first, const Backbone& backbone) {
    if (p.shape() != first.shape()) throw ShapeError("extract_features", first.shape(), p.shape());
    const std::size_t min_size = std::size_t{1} << backbone.config().block_count();
    if (p.rank() != 3 || p.dim(0) != backbone.config().input_channels || p.dim(1) < min_size || p.dim(2) < min_size) {
        throw ShapeError("extract_features", p.shape(), Shape{backbone.config().input_channels, min_size, min_size});
    }
}

}  // namespace

Tensor extract_features(std::span<const Tensor> patches, const Backbone& backbone, ParamRegistry& registry,
                        bool with_adapters) {
    if (patches.empty()) throw InvalidArgument("extract_features: empty batch");
    const std::size_t d = backbone.config().feature_dim();
    Tensor out({patches.size(), d});
    for (std::size_t n = 0; n < patches.size(); ++n) {
        check_patch(patches[n], patches.front(), backbone);
        Tape tape(false);
        auto blocks = bind_backbone(tape, registry, backbone, with_adapters);
        const Tensor& f = tape.value(backbone_features(tape, tape.constant(patches[n]), blocks));
        std::copy(f.storage().begin(), f.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(n * d));
    }
    return out;
}

Tensor extract_prefix(const Tensor& patch, const Backbone& backbone, ParamRegistry& registry, std::size_t depth) {
    if (depth > backbone.blocks().size()) throw InvalidArgument("extract_prefix: depth exceeds block count");
    check_patch(patch, patch, backbone);
    Tape tape(false);
    auto blocks = bind_backbone(tape, registry, backbone, false);
    return tape.value(run_blocks(tape, tape.constant(patch), blocks, 0, depth));
}

}  // namespace pamt
