#include "pamt/numerics/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>

#include "pamt/numerics/errors.hpp"

namespace pamt {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void validate_shape(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw InvalidArgument("tensor: zero-length dimension in shape " + format_shape(shape));
    }
}

}  // namespace

Tensor::Tensor() : shape_{1}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
        throw ShapeError("tensor", shape_, Shape{data_.size()});
    }
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) { return vector(std::vector<double>(values)); }

Tensor Tensor::vector(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("tensor.matrix", Shape{c}, Shape{row.size()});
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) throw ShapeError("reshape", shape_, shape);
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::row(std::size_t r) const {
    if (rank() != 2) throw ShapeError("row", shape_, Shape{r});
    const std::size_t c = shape_[1];
    return Tensor({c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * c),
                                           data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * c)));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

bool Tensor::bit_equal(const Tensor& other) const noexcept {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0;
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw InvalidArgument("stack_rows: no rows");
    const Shape& first = rows.front().shape();
    if (first.size() != 1) throw ShapeError("stack_rows", first, Shape{});
    std::vector<double> data;
    data.reserve(rows.size() * first[0]);
    for (const auto& r : rows) {
        if (r.shape() != first) throw ShapeError("stack_rows", first, r.shape());
        data.insert(data.end(), r.storage().begin(), r.storage().end());
    }
    return Tensor({rows.size(), first[0]}, std::move(data));
}

Tensor zero_pad(const Tensor& image, std::size_t pad) {
    if (image.rank() != 3) throw ShapeError("zero_pad", image.shape(), Shape{0, 0, 0});
    const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    Tensor out({c, h + 2 * pad, w + 2 * pad});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t y = 0; y < h; ++y)
            std::memcpy(out.storage().data() + (k * (h + 2 * pad) + y + pad) * (w + 2 * pad) + pad,
                        image.storage().data() + (k * h + y) * w, w * sizeof(double));
    return out;
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string checksum(const Tensor& t) {
    std::vector<std::uint64_t> dims(t.shape().begin(), t.shape().end());
    std::uint64_t h = fnv1a({reinterpret_cast<const unsigned char*>(dims.data()), dims.size() * sizeof(std::uint64_t)});
    h = fnv1a({reinterpret_cast<const unsigned char*>(t.storage().data()), t.size() * sizeof(double)}, h);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace pamt
