#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pamt/numerics/tensor.hpp"

namespace pamt {

/// Index of a parameter inside its registry.
struct ParamId {
    std::size_t index = static_cast<std::size_t>(-1);

    bool valid() const noexcept { return index != static_cast<std::size_t>(-1); }
    bool operator==(const ParamId&) const = default;
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;  // same shape as value
    bool trainable = true;
};

/// Insertion-ordered, name-unique collection of parameters.
///
/// References returned by `at` stay valid while the registry lives; adding
/// parameters never relocates existing ones.
class ParamRegistry {
public:
    ParamId add(std::string name, Tensor value, bool trainable = true);

    Parameter& at(ParamId id) { return params_.at(id.index); }
    const Parameter& at(ParamId id) const { return params_.at(id.index); }

    ParamId id(std::string_view name) const;
    bool contains(std::string_view name) const;
    Parameter& operator[](std::string_view name) { return at(id(name)); }
    const Parameter& operator[](std::string_view name) const { return at(id(name)); }

    std::size_t size() const noexcept { return params_.size(); }
    auto begin() noexcept { return params_.begin(); }
    auto end() noexcept { return params_.end(); }
    auto begin() const noexcept { return params_.begin(); }
    auto end() const noexcept { return params_.end(); }

    void zero_grad();
    void set_all_trainable(bool trainable);
    /// Sets `trainable` on each parameter to `pred(param)`.
    void set_trainable_where(const std::function<bool(const Parameter&)>& pred);

    /// Number of scalar entries across trainable parameters.
    std::size_t trainable_count() const;

    /// Combined FNV-1a over names and values, insertion order.
    std::string checksum() const;

private:
    std::deque<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Value-only copy of a registry (name, tensor) in insertion order.
struct NamedTensor {
    std::string name;
    Tensor value;
};

std::vector<NamedTensor> snapshot_values(const ParamRegistry& registry);
/// Overwrites registry values by name. Every snapshot entry must exist with a
/// matching shape.
void restore_values(ParamRegistry& registry, const std::vector<NamedTensor>& values);

}  // namespace pamt
