#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pamt/numerics/tensor.hpp"

namespace pamt {

/// Synthetic bag-labelled patches. Negative patches are smooth colour
/// texture with small dark "nuclei"; witness patches additionally carry a
/// Gaussian colour blob of peak amplitude `signal_strength`.
struct SyntheticConfig {
    std::size_t n_bags = 300;
    std::size_t min_patches = 30;
    std::size_t max_patches = 60;
    std::size_t patch_size = 32;
    double witness_rate = 0.08;
    double signal_strength = 0.5;
    double noise_std = 0.08;
    double blob_sigma = 7.0;     // witness blob radius in pixels
    std::size_t max_nuclei = 4;  // distractor dots per patch, drawn in [0, max]
    std::uint64_t seed = 0;

    void validate() const;
    /// max(1, round(witness_rate * m))
    std::size_t witness_count(std::size_t m) const;
};

struct WsiBag {
    std::size_t bag_id = 0;
    std::vector<Tensor> patches;  // each (3, H, W), values in [0, 1]
    int label = 0;
    std::vector<int> instance_labels;

    std::size_t size() const noexcept { return patches.size(); }
    std::size_t witness_count() const;
};

std::vector<WsiBag> generate_dataset(const SyntheticConfig& config);
/// Bag `bag_id` of the dataset generated by `config`, independent of the others.
WsiBag generate_bag(const SyntheticConfig& config, std::size_t bag_id, int label);
/// Labels of all bags: exactly floor(n/2) positives in a seeded order.
std::vector<int> generate_labels(const SyntheticConfig& config);

std::string dataset_checksum(std::span<const WsiBag> bags);

/// dataset.bin (snapshot record layout) + manifest.csv
/// (bag_id,n_patches,label,n_witnesses).
void save_dataset(const std::filesystem::path& dir, std::span<const WsiBag> bags);
std::vector<WsiBag> load_dataset(const std::filesystem::path& dir);

struct SplitRatios {
    double train = 0.65;
    double val = 0.10;
    double test = 0.25;
};

struct DatasetSplit {
    std::vector<std::size_t> train;  // positions into the bag list
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    SplitRatios ratios;
};

/// Seeded bag-level partition. n_train = round(n * train), n_val =
/// round(n * val), test gets the rest. Every split must hold both classes;
/// an empty split is an error unless `allow_empty`.
DatasetSplit split_dataset(std::span<const WsiBag> bags, const SplitRatios& ratios, std::uint64_t seed,
                           bool allow_empty = false);

/// Stratified subsample keeping round(fraction * count) bags per class
/// (at least one of each), in original order.
std::vector<std::size_t> subsample_stratified(std::span<const WsiBag> bags, std::span<const std::size_t> positions,
                                              double fraction, std::uint64_t seed);

}  // namespace pamt
