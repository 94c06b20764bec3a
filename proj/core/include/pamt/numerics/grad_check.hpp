#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/tape.hpp"

namespace pamt {

/// Builds a graph on the tape from `inputs` and returns its outputs; the
/// first output is the scalar loss that gets differentiated.
using GraphFn = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

struct ForwardBackwardResult {
    std::vector<Tensor> outputs;
};

/// Evaluates `graph` and back-propagates its first output. Gradients are
/// accumulated into the trainable parameters of `registry`.
ForwardBackwardResult forward_backward(const GraphFn& graph, std::span<const Tensor> inputs,
                                       ParamRegistry& registry);

/// Scalar loss built from registry parameters.
using LossFn = std::function<Var(Tape&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    std::size_t worst_index = 0;
    std::size_t entries_checked = 0;
};

/// Compares analytic gradients with central differences over every scalar
/// entry of every trainable parameter:
///   max |a - n| / max(1e-12, |a| + |n|).
/// Frozen parameters are skipped. Throws if two evaluations of the loss at
/// the same point disagree. Leaves parameter values unchanged and the
/// analytic gradient in Parameter::grad.
GradCheckResult grad_check(const LossFn& loss_fn, ParamRegistry& registry, double epsilon);

}  // namespace pamt
