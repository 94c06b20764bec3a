#include "pamt/numerics/param.hpp"

#include <cstdio>

#include "pamt/numerics/errors.hpp"

namespace pamt {

ParamId ParamRegistry::add(std::string name, Tensor value, bool trainable) {
    if (index_.contains(name)) throw InvalidArgument("registry: duplicate parameter name '" + name + "'");
    const std::size_t idx = params_.size();
    Tensor grad(value.shape());
    index_.emplace(name, idx);
    params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad), trainable});
    return ParamId{idx};
}

ParamId ParamRegistry::id(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw InvalidArgument("registry: unknown parameter '" + std::string(name) + "'");
    return ParamId{it->second};
}

bool ParamRegistry::contains(std::string_view name) const { return index_.contains(std::string(name)); }

void ParamRegistry::zero_grad() {
    for (auto& p : params_) p.grad.fill(0.0);
}

void ParamRegistry::set_all_trainable(bool trainable) {
    for (auto& p : params_) p.trainable = trainable;
}

void ParamRegistry::set_trainable_where(const std::function<bool(const Parameter&)>& pred) {
    for (auto& p : params_) p.trainable = pred(p);
}

std::size_t ParamRegistry::trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.value.size();
    return n;
}

std::string ParamRegistry::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
        h = fnv1a({reinterpret_cast<const unsigned char*>(p.name.data()), p.name.size()}, h);
        h = fnv1a({reinterpret_cast<const unsigned char*>(p.value.storage().data()), p.value.size() * sizeof(double)}, h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<NamedTensor> snapshot_values(const ParamRegistry& registry) {
    std::vector<NamedTensor> out;
    out.reserve(registry.size());
    for (const auto& p : registry) out.push_back({p.name, p.value});
    return out;
}

void restore_values(ParamRegistry& registry, const std::vector<NamedTensor>& values) {
    for (const auto& nt : values) {
        Parameter& p = registry[nt.name];
        if (p.value.shape() != nt.value.shape()) throw ShapeError("restore:" + nt.name, p.value.shape(), nt.value.shape());
        p.value = nt.value;
    }
}

}  // namespace pamt
