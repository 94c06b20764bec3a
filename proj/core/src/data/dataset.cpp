#include "pamt/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include "pamt/numerics/errors.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/snapshot.hpp"

namespace pamt {

namespace {

constexpr std::array<std::array<double, 3>, 4> kPalettes{{
    {0.86, 0.62, 0.76},
    {0.72, 0.52, 0.74},
    {0.92, 0.84, 0.88},
    {0.78, 0.46, 0.62},
}};
constexpr std::array<double, 3> kNucleusColour{-0.35, -0.40, -0.15};
constexpr std::array<double, 3> kWitnessColour{0.15, -0.45, -0.75};
constexpr double kTextureSigma = 1.5;

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(2.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sq = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sq += k[i + radius] * k[i + radius];
    }
    // unit-variance output for white-noise input
    for (double& v : k) v /= std::sqrt(sq);
    return k;
}

std::size_t reflect(long i, std::size_t n) {
    const long m = static_cast<long>(n);
    if (i < 0) i = -i - 1;
    if (i >= m) i = 2 * m - i - 1;
    return static_cast<std::size_t>(std::clamp<long>(i, 0, m - 1));
}

// Low-pass filtered unit-variance noise of size n x n.
std::vector<double> smooth_noise(Rng& rng, std::size_t n, const std::vector<double>& kernel) {
    std::vector<double> raw(n * n), tmp(n * n), out(n * n);
    for (double& v : raw) v = rng.normal();
    const long r = static_cast<long>(kernel.size() / 2);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (long k = -r; k <= r; ++k) s += kernel[k + r] * raw[y * n + reflect(static_cast<long>(x) + k, n)];
            tmp[y * n + x] = s;
        }
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            double s = 0.0;
            for (long k = -r; k <= r; ++k) s += kernel[k + r] * tmp[reflect(static_cast<long>(y) + k, n) * n + x];
            out[y * n + x] = s;
        }
    return out;
}

void add_blob(Tensor& img, double cy, double cx, double sigma, double amplitude, const std::array<double, 3>& colour) {
    const std::size_t n = img.dim(1);
    for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
            const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            const double g = amplitude * std::exp(-0.5 * d2 / (sigma * sigma));
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) += g * colour[c];
        }
}

Tensor make_patch(const SyntheticConfig& cfg, std::uint64_t seed, bool witness) {
    Rng rng(seed);
    const std::size_t n = cfg.patch_size;
    const auto& base = kPalettes[rng.uniform_int(kPalettes.size())];
    std::array<double, 3> tint{};
    for (double& t : tint) t = rng.normal(0.0, 0.03);

    static thread_local std::vector<double> kernel = gaussian_kernel(kTextureSigma);
    const auto luminance = smooth_noise(rng, n, kernel);
    const auto chroma = smooth_noise(rng, n, kernel);

    Tensor img({3, n, n});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < n * n; ++i) {
            const double chroma_sign = c == 1 ? -0.5 : 0.5;
            img[c * n * n + i] = base[c] + tint[c] + cfg.noise_std * (luminance[i] + chroma_sign * chroma[i]);
        }

    const std::size_t nuclei = rng.uniform_int(cfg.max_nuclei + 1);
    for (std::size_t k = 0; k < nuclei; ++k) {
        const double cy = rng.uniform(0.0, static_cast<double>(n));
        const double cx = rng.uniform(0.0, static_cast<double>(n));
        const double sigma = rng.uniform(0.8, 1.5);
        const double amp = rng.uniform(0.5, 1.0);
        add_blob(img, cy, cx, sigma, amp, kNucleusColour);
    }

    // Blob geometry is drawn for every patch so the random stream does not
    // depend on the label.
    const double margin = std::min(cfg.blob_sigma + 2.0, n / 2.0);
    const double cy = rng.uniform(margin, n - margin);
    const double cx = rng.uniform(margin, n - margin);
    if (witness && cfg.signal_strength > 0.0) add_blob(img, cy, cx, cfg.blob_sigma, cfg.signal_strength, kWitnessColour);

    for (double& v : img.storage()) v = std::clamp(v, 0.0, 1.0);
    return img;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (n_bags < 2) throw InvalidArgument("synthetic: n_bags must be at least 2");
    if (min_patches < 1 || max_patches < min_patches) throw InvalidArgument("synthetic: need 1 <= min_patches <= max_patches");
    if (patch_size < 4) throw InvalidArgument("synthetic: patch_size must be at least 4");
    if (!(witness_rate > 0.0 && witness_rate < 1.0)) throw InvalidArgument("synthetic: witness_rate must lie in (0, 1)");
    if (!(signal_strength >= 0.0 && signal_strength <= 1.0)) throw InvalidArgument("synthetic: signal_strength must lie in [0, 1]");
    if (!(noise_std >= 0.0)) throw InvalidArgument("synthetic: noise_std must be non-negative");
    if (!(blob_sigma > 0.0)) throw InvalidArgument("synthetic: blob_sigma must be positive");
}

std::size_t SyntheticConfig::witness_count(std::size_t m) const {
    const auto w = static_cast<std::size_t>(std::llround(witness_rate * static_cast<double>(m)));
    return std::clamp<std::size_t>(w, 1, m);
}

std::size_t WsiBag::witness_count() const {
    return static_cast<std::size_t>(std::count(instance_labels.begin(), instance_labels.end(), 1));
}

std::vector<int> generate_labels(const SyntheticConfig& config) {
    std::vector<std::size_t> order(config.n_bags);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(config.seed, 0x6c61626c));
    rng.shuffle(order);
    std::vector<int> labels(config.n_bags, 0);
    for (std::size_t i = 0; i < config.n_bags / 2; ++i) labels[order[i]] = 1;
    return labels;
}

WsiBag generate_bag(const SyntheticConfig& config, std::size_t bag_id, int label) {
    const std::uint64_t bag_seed = mix_seed(config.seed, bag_id + 1);
    Rng rng(bag_seed);
    WsiBag bag;
    bag.bag_id = bag_id;
    bag.label = label;
    const std::size_t m = config.min_patches + rng.uniform_int(config.max_patches - config.min_patches + 1);
    std::vector<std::size_t> order(m);
    for (std::size_t i = 0; i < m; ++i) order[i] = i;
    rng.shuffle(order);
    bag.instance_labels.assign(m, 0);
    if (label == 1)
        for (std::size_t i = 0; i < config.witness_count(m); ++i) bag.instance_labels[order[i]] = 1;
    bag.patches.reserve(m);
    for (std::size_t j = 0; j < m; ++j)
        bag.patches.push_back(make_patch(config, mix_seed(bag_seed, 0x100 + j), bag.instance_labels[j] == 1));
    return bag;
}

std::vector<WsiBag> generate_dataset(const SyntheticConfig& config) {
    config.validate();
    const auto labels = generate_labels(config);
    std::vector<WsiBag> bags;
    bags.reserve(config.n_bags);
    for (std::size_t i = 0; i < config.n_bags; ++i) bags.push_back(generate_bag(config, i, labels[i]));
    return bags;
}

std::string dataset_checksum(std::span<const WsiBag> bags) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, std::size_t n) { h = fnv1a({static_cast<const unsigned char*>(p), n}, h); };
    for (const auto& b : bags) {
        const std::uint64_t header[3] = {b.bag_id, b.patches.size(), static_cast<std::uint64_t>(b.label)};
        mix(header, sizeof header);
        for (int l : b.instance_labels) mix(&l, sizeof l);
        for (const auto& p : b.patches) mix(p.storage().data(), p.size() * sizeof(double));
    }
    return hex64(h);
}

void save_dataset(const std::filesystem::path& dir, std::span<const WsiBag> bags) {
    std::filesystem::create_directories(dir);
    std::vector<NamedTensor> records;
    for (const auto& b : bags) {
        if (b.patches.empty()) throw InvalidArgument("save_dataset: empty bag " + std::to_string(b.bag_id));
        const std::string prefix = "bag/" + std::to_string(b.bag_id);
        Shape s{b.patches.size()};
        s.insert(s.end(), b.patches.front().shape().begin(), b.patches.front().shape().end());
        std::vector<double> data;
        data.reserve(shape_size(s));
        for (const auto& p : b.patches) {
            if (p.shape() != b.patches.front().shape()) throw ShapeError("save_dataset", b.patches.front().shape(), p.shape());
            data.insert(data.end(), p.storage().begin(), p.storage().end());
        }
        records.push_back({prefix + "/patches", Tensor(s, std::move(data))});
        records.push_back({prefix + "/label", Tensor::scalar(b.label)});
        const Shape inst_shape{b.instance_labels.size()};
        records.push_back({prefix + "/instance_labels",
                           Tensor(inst_shape, std::vector<double>(b.instance_labels.begin(), b.instance_labels.end()))});
    }
    write_snapshot(dir / "dataset.bin", records);

    std::ofstream out(dir / "manifest.csv");
    if (!out) throw Error("cannot write " + (dir / "manifest.csv").string());
    out << "bag_id,n_patches,label,n_witnesses\n";
    for (const auto& b : bags) out << b.bag_id << ',' << b.size() << ',' << b.label << ',' << b.witness_count() << '\n';
}

std::vector<WsiBag> load_dataset(const std::filesystem::path& dir) {
    const auto records = read_snapshot(dir / "dataset.bin");
    std::map<std::size_t, WsiBag> by_id;
    for (const auto& r : records) {
        const auto first = r.name.find('/');
        const auto second = r.name.find('/', first + 1);
        if (r.name.rfind("bag/", 0) != 0 || second == std::string::npos) throw Error("dataset: unexpected record " + r.name);
        const std::size_t id = std::stoul(r.name.substr(first + 1, second - first - 1));
        const std::string field = r.name.substr(second + 1);
        WsiBag& bag = by_id[id];
        bag.bag_id = id;
        if (field == "patches") {
            if (r.value.rank() != 4) throw Error("dataset: patches record must be rank 4");
            const Shape ps{r.value.dim(1), r.value.dim(2), r.value.dim(3)};
            const std::size_t n = shape_size(ps);
            for (std::size_t j = 0; j < r.value.dim(0); ++j) {
                auto begin = r.value.storage().begin() + static_cast<std::ptrdiff_t>(j * n);
                bag.patches.emplace_back(ps, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n)));
            }
        } else if (field == "label") {
            bag.label = static_cast<int>(r.value[0]);
        } else if (field == "instance_labels") {
            for (double v : r.value.storage()) bag.instance_labels.push_back(static_cast<int>(v));
        } else {
            throw Error("dataset: unexpected record " + r.name);
        }
    }
    std::vector<WsiBag> bags;
    for (auto& [id, bag] : by_id) {
        if (bag.patches.empty() || bag.instance_labels.size() != bag.patches.size())
            throw Error("dataset: incomplete bag " + std::to_string(id));
        bags.push_back(std::move(bag));
    }
    return bags;
}

namespace {

void require_both_classes(std::span<const WsiBag> bags, const std::vector<std::size_t>& split, const char* name) {
    bool pos = false, neg = false;
    for (auto i : split) (bags[i].label == 1 ? pos : neg) = true;
    if (!pos || !neg) {
        throw InvalidArgument(std::string("split_dataset: ") + name +
                              " split lacks a class; choose another split seed or ratios");
    }
}

}  // namespace

DatasetSplit split_dataset(std::span<const WsiBag> bags, const SplitRatios& ratios, std::uint64_t seed,
                           bool allow_empty) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw InvalidArgument("split_dataset: ratios must be non-negative and sum to 1");
    }
    const std::size_t n = bags.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x73706c74));
    rng.shuffle(order);
    const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(ratios.train * n)));
    const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(ratios.val * n)));

    DatasetSplit s;
    s.ratios = ratios;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    const std::pair<const std::vector<std::size_t>*, const char*> parts[] = {
        {&s.train, "train"}, {&s.val, "val"}, {&s.test, "test"}};
    for (const auto& [part, name] : parts) {
        if (part->empty()) {
            if (!allow_empty) throw InvalidArgument(std::string("split_dataset: ") + name + " split is empty");
            continue;
        }
        require_both_classes(bags, *part, name);
    }
    return s;
}

std::vector<std::size_t> subsample_stratified(std::span<const WsiBag> bags, std::span<const std::size_t> positions,
                                              double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1]");
    if (fraction == 1.0) return {positions.begin(), positions.end()};
    std::vector<std::size_t> pos, neg;
    for (auto p : positions) (bags[p].label == 1 ? pos : neg).push_back(p);
    Rng rng(mix_seed(seed, 0x66726163));
    std::vector<std::size_t> keep;
    for (auto* group : {&pos, &neg}) {
        if (group->empty()) continue;
        rng.shuffle(*group);
        const auto k = std::clamp<std::size_t>(
            static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group->size()))), 1, group->size());
        keep.insert(keep.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(k));
    }
    std::vector<std::size_t> out;
    for (auto p : positions)
        if (std::find(keep.begin(), keep.end(), p) != keep.end()) out.push_back(p);
    return out;
}

}  // namespace pamt
