#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pamt {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The element count always equals the product of the dimensions. A
/// default-constructed tensor has shape (1) and holds a single zero.
class Tensor {
public:
    Tensor();
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double value);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor vector(std::vector<double> values);
    /// Rows of equal length become an (rows x cols) matrix.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }
    double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_.at(1) + y) * shape_.at(2) + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_.at(1) + y) * shape_.at(2) + x];
    }

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape shape) const;
    /// Copy of row `r` of a rank-2 tensor as a vector.
    Tensor row(std::size_t r) const;

    void fill(double value);
    bool all_finite() const noexcept;

    /// Bitwise equality of shape and payload.
    bool bit_equal(const Tensor& other) const noexcept;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stack equal-shape vectors into an (n x d) matrix.
Tensor stack_rows(std::span<const Tensor> rows);

/// Zero-pad a (C,H,W) tensor by `pad` pixels on each spatial border.
Tensor zero_pad(const Tensor& image, std::size_t pad);

/// FNV-1a over the raw bytes of shape and payload, as 16 hex digits.
std::string checksum(const Tensor& t);
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace pamt
