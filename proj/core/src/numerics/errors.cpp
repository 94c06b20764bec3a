#include "pamt/numerics/errors.hpp"

#include <sstream>

namespace pamt {

std::string format_shape(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ')';
    return os.str();
}

ShapeError::ShapeError(std::string primitive, std::vector<std::size_t> lhs, std::vector<std::size_t> rhs)
    : Error(primitive + ": shape mismatch " + format_shape(lhs) + " vs " + format_shape(rhs)),
      primitive_(std::move(primitive)),
      lhs_(std::move(lhs)),
      rhs_(std::move(rhs)) {}

NonFiniteError::NonFiniteError(std::string primitive, std::string stage)
    : Error(primitive + ": non-finite value in " + stage + " pass"), primitive_(std::move(primitive)) {}

}  // namespace pamt
