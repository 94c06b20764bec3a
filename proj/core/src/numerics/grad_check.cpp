#include "pamt/numerics/grad_check.hpp"

#include <cmath>
#include <cstring>

#include "pamt/numerics/errors.hpp"

namespace pamt {

ForwardBackwardResult forward_backward(const GraphFn& graph, std::span<const Tensor> inputs,
                                       ParamRegistry& registry) {
    (void)registry;  // parameters are bound by the graph itself
    Tape tape;
    std::vector<Var> in;
    in.reserve(inputs.size());
    for (const auto& t : inputs) in.push_back(tape.constant(t));
    const std::vector<Var> outs = graph(tape, in);
    if (outs.empty()) throw InvalidArgument("forward_backward: graph produced no outputs");
    tape.backward(outs.front());
    ForwardBackwardResult result;
    for (Var v : outs) result.outputs.push_back(tape.value(v));
    return result;
}

namespace {

double evaluate(const LossFn& loss_fn) {
    Tape tape(false);
    const Var loss = loss_fn(tape);
    const Tensor& v = tape.value(loss);
    if (v.size() != 1) throw ShapeError("grad_check", v.shape(), Shape{1});
    return v[0];
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss_fn, ParamRegistry& registry, double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("grad_check: epsilon must be positive");

    registry.zero_grad();
    {
        Tape tape;
        tape.backward(loss_fn(tape));
    }
    const double base1 = evaluate(loss_fn);
    const double base2 = evaluate(loss_fn);
    if (std::memcmp(&base1, &base2, sizeof(double)) != 0) {
        throw Error("grad_check: loss function is not deterministic");
    }

    GradCheckResult result;
    for (auto& p : registry) {
        if (!p.trainable) continue;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double saved = p.value[i];
            p.value[i] = saved + epsilon;
            const double plus = evaluate(loss_fn);
            p.value[i] = saved - epsilon;
            const double minus = evaluate(loss_fn);
            p.value[i] = saved;

            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double analytic = p.grad[i];
            const double rel =
                std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
            ++result.entries_checked;
            if (rel > result.max_relative_error) {
                result.max_relative_error = rel;
                result.worst_parameter = p.name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace pamt
