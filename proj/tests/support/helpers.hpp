#pragma once

#include <string>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/rng.hpp"
#include "pamt/numerics/tape.hpp"
#include "pamt/numerics/tensor.hpp"

namespace pamt::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.storage()) v = rng.uniform(lo, hi);
    return t;
}

/// Generic scalar readout sum(y * r) with fixed random weights r, so every
/// output entry contributes a distinct sensitivity.
inline Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
    Rng rng(seed);
    return tape.sum(tape.mul(y, tape.constant(random_tensor(tape.value(y).shape(), rng))));
}

}  // namespace pamt::testing
