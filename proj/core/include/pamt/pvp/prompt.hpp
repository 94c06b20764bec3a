#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/tape.hpp"
#include "pamt/pvp/kmeans.hpp"
#include "pamt/rps/rps.hpp"

namespace pamt {

/// Binary (C, H+2S, W+2S) mask: 1 on the S-wide border, 0 inside.
Tensor border_mask(std::size_t channels, std::size_t height, std::size_t width, std::size_t pad);

/// C trainable padding prompts "pvp.prompt.{c}" plus their shared mask.
/// Prompts start at zero and their interior stays exactly zero.
struct PromptBank {
    std::vector<ParamId> prompts;
    Tensor mask;
    std::size_t pad = 0;
    std::size_t channels = 0;
    std::size_t height = 0;  // raw patch size, before padding
    std::size_t width = 0;

    std::size_t count() const noexcept { return prompts.size(); }
    /// Number of border entries per prompt.
    std::size_t border_entries() const;
};

PromptBank make_prompt_bank(ParamRegistry& registry, std::size_t clusters, std::size_t pad, std::size_t channels,
                            std::size_t height, std::size_t width);

/// Zeroes any interior entry of every prompt.
void enforce_prompt_mask(const PromptBank& bank, ParamRegistry& registry);

/// zero_pad(patch, S) with the prompt added on the border; interior pixels
/// are copied bit-exactly.
Tensor apply_prompt(const Tensor& patch, const Tensor& prompt, const Tensor& mask, std::size_t pad);
Var apply_prompt(Tape& tape, const Tensor& patch, Var prompt, const Tensor& mask, std::size_t pad);

struct PatchKey {
    std::size_t bag_id = 0;
    std::size_t patch_index = 0;
    auto operator<=>(const PatchKey&) const = default;
};

struct ClusterAssignment {
    std::size_t cluster = 0;
    double distance = 0.0;  // Euclidean distance to the assigned centroid
};

/// (bag, patch) -> nearest-centroid cluster.
using Assignment = std::map<PatchKey, ClusterAssignment>;

/// Assigns each selected patch of `bag` from its row in `features` (rows
/// follow bag.selected_indices order).
void assign_bag(Assignment& out, const SampledBag& bag, const Tensor& features, const Centroids& centroids);

/// Prompted patches of one sampled bag, in selected_indices order; patch j
/// receives prompt p[assignment(bag, j)].
std::vector<Var> build_prompted_bag(Tape& tape, const SampledBag& bag, const Assignment& assignment,
                                    std::span<const Var> prompts, const PromptBank& bank,
                                    std::span<const Tensor> raw_patches);

/// CSV: cluster,f0,...,f{D-1}
void write_centroids_csv(const std::filesystem::path& path, const Centroids& centroids);
Centroids read_centroids_csv(const std::filesystem::path& path);
/// CSV: bag_id,patch_index,cluster,distance
void write_assignments_csv(const std::filesystem::path& path, const Assignment& assignment);
Assignment read_assignments_csv(const std::filesystem::path& path);

}  // namespace pamt
