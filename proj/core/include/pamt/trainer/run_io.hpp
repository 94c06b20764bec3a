#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pamt/trainer/pipeline.hpp"

namespace pamt {

/// SHA-1 of "blob <size>\0<content>", as `git hash-object` computes it.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

/// Fully resolved configuration as JSON text (stable key order).
std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& text);

/// Writes a run directory:
///   manifest.json      config, input hashes, timing (the only time-dependent file)
///   metrics.json       val/test metrics, best epoch, parameter counts
///   loss_trace.csv     epoch,train_loss,val_auc,prompt_lr
///   scorer_trace.csv   epoch,loss
///   test_scores.csv    bag_id,label,probability
///   snapshot.bin       best-validation parameters
///   sampled.csv        bag_id,original_index,score
///   sampled_manifest.json
///   centroids.csv, assignments.csv (when prompts are used)
/// `inputs` are hashed into the manifest.
void write_run(const std::filesystem::path& dir, const RunResult& result,
               const std::vector<std::filesystem::path>& inputs = {});

/// Headline fields of a metrics.json.
struct RunSummary {
    std::string strategy;
    std::string components;
    std::string head;
    std::uint64_t seed = 0;
    double train_fraction = 1.0;
    SplitMetrics test;
    std::size_t trainable_params = 0;
    std::size_t head_params = 0;
    std::size_t best_epoch = 0;
};

RunSummary summarize_run(const RunResult& result);
RunSummary read_run_summary(const std::filesystem::path& metrics_json);

}  // namespace pamt
