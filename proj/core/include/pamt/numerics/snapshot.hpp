#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "pamt/numerics/param.hpp"

namespace pamt {

/// Binary parameter snapshot:
///   "PAMT" | u32 version | records...
///   record = u32 name_len | name | u32 rank | u64 dims[rank] | f64 payload
/// All integers and doubles little-endian. Records run to end of stream.
inline constexpr std::uint32_t kSnapshotVersion = 1;

void write_snapshot(std::ostream& out, const std::vector<NamedTensor>& records);
void write_snapshot(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
void write_snapshot(const std::filesystem::path& path, const ParamRegistry& registry);

std::vector<NamedTensor> read_snapshot(std::istream& in);
std::vector<NamedTensor> read_snapshot(const std::filesystem::path& path);

}  // namespace pamt
