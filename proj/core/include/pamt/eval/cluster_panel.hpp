#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "pamt/data/dataset.hpp"
#include "pamt/pvp/kmeans.hpp"
#include "pamt/pvp/prompt.hpp"

namespace pamt {

/// For each cluster, the `per_row` assigned patches nearest its centroid,
/// ordered by (distance, bag, patch). Clusters with fewer members yield
/// shorter lists; an empty cluster is an error.
std::vector<std::vector<PatchKey>> nearest_members(const Assignment& assignment, std::size_t clusters,
                                                   std::size_t per_row = 8);

/// PNG grid, one row per cluster, `per_row` patches per row, blank (white)
/// cells where a cluster has fewer members. Patches are looked up by bag_id.
void export_cluster_panel(const Centroids& centroids, const Assignment& assignment, std::span<const WsiBag> bags,
                          const std::filesystem::path& out_path, std::size_t per_row = 8);

}  // namespace pamt
