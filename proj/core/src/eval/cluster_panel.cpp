#include "pamt/eval/cluster_panel.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <tuple>

#include "pamt/numerics/errors.hpp"

namespace pamt {

std::vector<std::vector<PatchKey>> nearest_members(const Assignment& assignment, std::size_t clusters,
                                                   std::size_t per_row) {
    std::vector<std::vector<std::pair<double, PatchKey>>> members(clusters);
    for (const auto& [key, a] : assignment) {
        if (a.cluster >= clusters) throw InvalidArgument("cluster panel: assignment outside the centroid range");
        members[a.cluster].push_back({a.distance, key});
    }
    std::vector<std::vector<PatchKey>> out(clusters);
    for (std::size_t c = 0; c < clusters; ++c) {
        if (members[c].empty()) throw Error("cluster panel: cluster " + std::to_string(c) + " has no members");
        auto& m = members[c];
        std::sort(m.begin(), m.end());
        for (std::size_t i = 0; i < std::min(per_row, m.size()); ++i) out[c].push_back(m[i].second);
    }
    return out;
}

namespace {

constexpr std::size_t kGap = 2;

struct PngWriter {
    std::FILE* file = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (file) std::fclose(file);
    }
};

}  // namespace

void export_cluster_panel(const Centroids& centroids, const Assignment& assignment, std::span<const WsiBag> bags,
                          const std::filesystem::path& out_path, std::size_t per_row) {
    if (per_row == 0) throw InvalidArgument("cluster panel: per_row must be positive");
    const auto rows = nearest_members(assignment, centroids.count(), per_row);
    std::map<std::size_t, const WsiBag*> by_id;
    for (const auto& b : bags) by_id[b.bag_id] = &b;
    if (bags.empty() || bags.front().patches.empty()) throw InvalidArgument("cluster panel: no patches");
    const std::size_t ph = bags.front().patches.front().dim(1);
    const std::size_t pw = bags.front().patches.front().dim(2);
    const std::size_t width = per_row * (pw + kGap) + kGap;
    const std::size_t height = rows.size() * (ph + kGap) + kGap;
    std::vector<unsigned char> pixels(width * height * 3, 255);

    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t k = 0; k < rows[r].size(); ++k) {
            const PatchKey key = rows[r][k];
            auto it = by_id.find(key.bag_id);
            if (it == by_id.end() || key.patch_index >= it->second->patches.size())
                throw InvalidArgument("cluster panel: missing patch for bag " + std::to_string(key.bag_id));
            const Tensor& patch = it->second->patches[key.patch_index];
            if (patch.dim(0) != 3 || patch.dim(1) != ph || patch.dim(2) != pw)
                throw ShapeError("export_cluster_panel", Shape{3, ph, pw}, patch.shape());
            const std::size_t y0 = kGap + r * (ph + kGap), x0 = kGap + k * (pw + kGap);
            for (std::size_t y = 0; y < ph; ++y)
                for (std::size_t x = 0; x < pw; ++x)
                    for (std::size_t c = 0; c < 3; ++c) {
                        const double v = std::clamp(patch.at(c, y, x), 0.0, 1.0);
                        pixels[((y0 + y) * width + x0 + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
                    }
        }
    }

    PngWriter w;
    w.file = std::fopen(out_path.string().c_str(), "wb");
    if (!w.file) throw Error("cannot write " + out_path.string());
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw Error("png: cannot create writer");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw Error("png: cannot create info");
    if (setjmp(png_jmpbuf(w.png))) throw Error("png: write failed for " + out_path.string());
    png_init_io(w.png, w.file);
    png_set_compression_level(w.png, 9);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (std::size_t y = 0; y < height; ++y) png_write_row(w.png, pixels.data() + y * width * 3);
    png_write_end(w.png, nullptr);
}

}  // namespace pamt
