#include "pamt/numerics/snapshot.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "pamt/numerics/errors.hpp"

namespace pamt {

namespace {

constexpr std::array<char, 4> kMagic{'P', 'A', 'M', 'T'};

template <typename U>
void put_le(std::ostream& out, U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf.data(), buf.size());
}

template <typename U>
bool get_le(std::istream& in, U& v) {
    std::array<unsigned char, sizeof(U)> buf{};
    if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) return false;
    v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return true;
}

[[noreturn]] void truncated() { throw Error("snapshot: truncated record"); }

}  // namespace

void write_snapshot(std::ostream& out, const std::vector<NamedTensor>& records) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kSnapshotVersion);
    for (const auto& r : records) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.value.rank()));
        for (auto d : r.value.shape()) put_le<std::uint64_t>(out, d);
        for (double v : r.value.storage()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw Error("snapshot: write failed");
}

void write_snapshot(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("snapshot: cannot open " + path.string() + " for writing");
    write_snapshot(out, records);
}

void write_snapshot(const std::filesystem::path& path, const ParamRegistry& registry) {
    write_snapshot(path, snapshot_values(registry));
}

std::vector<NamedTensor> read_snapshot(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw Error("snapshot: bad magic");
    std::uint32_t version = 0;
    if (!get_le(in, version)) truncated();
    if (version != kSnapshotVersion) throw Error("snapshot: unsupported version " + std::to_string(version));

    std::vector<NamedTensor> records;
    for (;;) {
        std::uint32_t name_len = 0;
        if (!get_le(in, name_len)) {
            if (in.eof() && in.gcount() == 0) break;
            truncated();
        }
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) truncated();
        std::uint32_t rank = 0;
        if (!get_le(in, rank)) truncated();
        Shape shape(rank);
        for (auto& d : shape) {
            std::uint64_t v = 0;
            if (!get_le(in, v)) truncated();
            d = static_cast<std::size_t>(v);
        }
        std::vector<double> data(shape_size(shape));
        for (double& v : data) {
            std::uint64_t bits = 0;
            if (!get_le(in, bits)) truncated();
            v = std::bit_cast<double>(bits);
        }
        records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return records;
}

std::vector<NamedTensor> read_snapshot(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("snapshot: cannot open " + path.string());
    return read_snapshot(in);
}

}  // namespace pamt
