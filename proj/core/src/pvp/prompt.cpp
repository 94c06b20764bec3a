#include "pamt/pvp/prompt.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "pamt/numerics/errors.hpp"

namespace pamt {

Tensor border_mask(std::size_t channels, std::size_t height, std::size_t width, std::size_t pad) {
    if (channels == 0 || height == 0 || width == 0) throw InvalidArgument("border_mask: empty patch geometry");
    Tensor m({channels, height + 2 * pad, width + 2 * pad}, 1.0);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) m.at(c, y + pad, x + pad) = 0.0;
    return m;
}

std::size_t PromptBank::border_entries() const {
    std::size_t n = 0;
    for (double v : mask.storage())
        if (v != 0.0) ++n;
    return n;
}

PromptBank make_prompt_bank(ParamRegistry& registry, std::size_t clusters, std::size_t pad, std::size_t channels,
                            std::size_t height, std::size_t width) {
    if (clusters == 0) throw InvalidArgument("prompt bank: need at least one prompt");
    PromptBank bank;
    bank.mask = border_mask(channels, height, width, pad);
    bank.pad = pad;
    bank.channels = channels;
    bank.height = height;
    bank.width = width;
    for (std::size_t c = 0; c < clusters; ++c)
        bank.prompts.push_back(registry.add("pvp.prompt." + std::to_string(c), Tensor(bank.mask.shape()), true));
    return bank;
}

void enforce_prompt_mask(const PromptBank& bank, ParamRegistry& registry) {
    for (ParamId id : bank.prompts) {
        Tensor& v = registry.at(id).value;
        for (std::size_t i = 0; i < v.size(); ++i)
            if (bank.mask[i] == 0.0) v[i] = 0.0;
    }
}

Tensor apply_prompt(const Tensor& patch, const Tensor& prompt, const Tensor& mask, std::size_t pad) {
    Tensor out = zero_pad(patch, pad);
    if (prompt.shape() != out.shape()) throw ShapeError("apply_prompt", out.shape(), prompt.shape());
    if (mask.shape() != out.shape()) throw ShapeError("apply_prompt", out.shape(), mask.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i] != 0.0) out[i] += prompt[i];
    return out;
}

Var apply_prompt(Tape& tape, const Tensor& patch, Var prompt, const Tensor& mask, std::size_t pad) {
    return tape.masked_add(tape.constant(zero_pad(patch, pad)), prompt, mask);
}

void assign_bag(Assignment& out, const SampledBag& bag, const Tensor& features, const Centroids& centroids) {
    if (features.rank() != 2 || features.dim(0) != bag.selected_indices.size()) {
        throw ShapeError("assign_bag", features.shape(), Shape{bag.selected_indices.size(), centroids.dim()});
    }
    for (std::size_t j = 0; j < bag.selected_indices.size(); ++j) {
        auto f = features.data().subspan(j * features.dim(1), features.dim(1));
        const std::size_t c = assign(f, centroids);
        const double d = std::sqrt(squared_distance(f, centroids.mu.data().subspan(c * centroids.dim(), centroids.dim())));
        out[PatchKey{bag.bag_id, bag.selected_indices[j]}] = ClusterAssignment{c, d};
    }
}

std::vector<Var> build_prompted_bag(Tape& tape, const SampledBag& bag, const Assignment& assignment,
                                    std::span<const Var> prompts, const PromptBank& bank,
                                    std::span<const Tensor> raw_patches) {
    std::vector<Var> out;
    out.reserve(bag.selected_indices.size());
    for (std::size_t idx : bag.selected_indices) {
        auto it = assignment.find(PatchKey{bag.bag_id, idx});
        if (it == assignment.end()) {
            throw InvalidArgument("build_prompted_bag: missing assignment for bag " + std::to_string(bag.bag_id) +
                                  ", patch " + std::to_string(idx));
        }
        if (idx >= raw_patches.size()) throw InvalidArgument("build_prompted_bag: patch index out of range");
        out.push_back(apply_prompt(tape, raw_patches[idx], prompts[it->second.cluster], bank.mask, bank.pad));
    }
    return out;
}

void write_centroids_csv(const std::filesystem::path& path, const Centroids& centroids) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "cluster";
    for (std::size_t j = 0; j < centroids.dim(); ++j) out << ",f" << j;
    out << '\n' << std::setprecision(17);
    for (std::size_t c = 0; c < centroids.count(); ++c) {
        out << c;
        for (std::size_t j = 0; j < centroids.dim(); ++j) out << ',' << centroids.mu.at(c, j);
        out << '\n';
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

Centroids read_centroids_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    const std::size_t d = split_csv(line).size() - 1;
    std::vector<double> data;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != d + 1) throw Error("centroids csv: ragged row in " + path.string());
        for (std::size_t j = 1; j <= d; ++j) data.push_back(std::stod(cells[j]));
        ++rows;
    }
    return Centroids{Tensor({rows, d}, std::move(data))};
}

void write_assignments_csv(const std::filesystem::path& path, const Assignment& assignment) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "bag_id,patch_index,cluster,distance\n" << std::setprecision(17);
    for (const auto& [key, a] : assignment)
        out << key.bag_id << ',' << key.patch_index << ',' << a.cluster << ',' << a.distance << '\n';
}

Assignment read_assignments_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    Assignment out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = split_csv(line);
        if (cells.size() != 4) throw Error("assignments csv: malformed row in " + path.string());
        out[PatchKey{std::stoul(cells[0]), std::stoul(cells[1])}] =
            ClusterAssignment{std::stoul(cells[2]), std::stod(cells[3])};
    }
    return out;
}

}  // namespace pamt
