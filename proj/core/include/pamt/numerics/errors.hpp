#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace pamt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a primitive receives operands of incompatible shapes.
class ShapeError : public Error {
public:
    ShapeError(std::string primitive, std::vector<std::size_t> lhs, std::vector<std::size_t> rhs);

    const std::string& primitive() const noexcept { return primitive_; }
    const std::vector<std::size_t>& lhs() const noexcept { return lhs_; }
    const std::vector<std::size_t>& rhs() const noexcept { return rhs_; }

private:
    std::string primitive_;
    std::vector<std::size_t> lhs_;
    std::vector<std::size_t> rhs_;
};

/// Raised when a primitive produces a NaN or infinite value.
class NonFiniteError : public Error {
public:
    explicit NonFiniteError(std::string primitive, std::string stage = "forward");

    const std::string& primitive() const noexcept { return primitive_; }

private:
    std::string primitive_;
};

/// Violated precondition on user-supplied values (configs, arguments).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

std::string format_shape(const std::vector<std::size_t>& shape);

}  // namespace pamt
