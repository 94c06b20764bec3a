#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pamt/trainer/run_io.hpp"

namespace pamt {

struct MeanStd {
    double mean = 0.0;
    std::optional<double> std;  // sample std, present for two or more runs
};

MeanStd mean_std(std::span<const double> values);

/// One (strategy, components, head, train_fraction) group across seeds.
struct ReportRow {
    std::string strategy;
    std::string components;
    std::string head;
    double train_fraction = 1.0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> aucs;  // per seed, in input order
    MeanStd auc, f1, acc;
    std::size_t trainable_params = 0;
    std::size_t head_params = 0;
    std::size_t additional_params() const noexcept { return trainable_params - head_params; }
};

/// Groups runs in order of first appearance.
std::vector<ReportRow> build_report(std::span<const RunSummary> runs);

/// table.csv, report.json and curve.csv (fraction,mean_auc,std per group).
void write_report(const std::filesystem::path& dir, std::span<const ReportRow> rows);

}  // namespace pamt
