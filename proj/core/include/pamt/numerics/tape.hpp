#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pamt/numerics/param.hpp"
#include "pamt/numerics/tensor.hpp"

namespace pamt {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Define-by-run reverse-mode differentiation over dense tensors.
///
/// Every primitive evaluates eagerly and, when recording, pushes a closure
/// that maps the output adjoint to input adjoints. A node requires a gradient
/// iff one of its inputs does; constants never do and parameters do iff they
/// are trainable. `backward` accumulates into Parameter::grad (callers zero
/// gradients themselves).
///
/// Image primitives accept (C,H,W) tensors. Every forward output is checked
/// for NaN/Inf and every propagated adjoint likewise.
class Tape {
public:
    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var param(ParamRegistry& registry, ParamId id);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    /// Adjoint of `v` after backward; zero tensor if nothing flowed into it.
    Tensor grad(Var v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    // (m,k)x(k,n), with optional transposition of either operand.
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    // x (Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout).
    Var conv2d(Var x, Var w, std::optional<Var> bias, std::size_t stride, std::size_t pad);
    Var relu(Var x);
    Var sigmoid(Var x);
    Var tanh(Var x);
    /// Max-subtracted softmax of a rank-1 (axis 0) or rank-2 tensor.
    Var softmax(Var x, std::size_t axis);
    /// (C,H,W) -> (C)
    Var global_avg_pool(Var x);
    /// (C,H,W) -> (C,H/2,W/2); trailing odd row/column dropped.
    Var avg_pool2(Var x);
    Var add(Var a, Var b);
    /// Elementwise product of equal shapes.
    Var mul(Var a, Var b);
    /// base + addend where mask != 0, base (bit-exact) elsewhere.
    Var masked_add(Var base, Var addend, const Tensor& mask);
    /// x (C,H,W) scaled per channel by gate (C).
    Var channel_mul(Var x, Var gate);
    /// (M,D) -> (D) column means.
    Var mean_rows(Var x);
    /// (M,D) -> (D) column maxima; gradient to the first arg-max row.
    Var max_rows(Var x);
    /// Numerically stable binary cross-entropy on a single logit.
    Var bce_with_logits(Var logit, double label);
    /// n vectors of length d -> (n,d)
    Var stack_rows(std::span<const Var> rows);
    Var reshape(Var x, Shape shape);
    /// Sum of all entries, shape (1).
    Var sum(Var x);

    /// Seeds d(loss)/d(loss) = 1; `loss` must hold exactly one value.
    void backward(Var loss);
    /// Seeds the adjoint of `out` with `seed` (same shape).
    void backward(Var out, const Tensor& seed);

private:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    struct Node {
        std::string_view op;
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    Var push(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var push(std::string_view op, Tensor value, bool requires_grad, BackwardFn fn);
    bool any_requires(std::initializer_list<Var> inputs) const;
    Tensor& grad_ref(std::size_t id);
    void run_backward(std::size_t start);

    bool record_;
    std::vector<Node> nodes_;
};

}  // namespace pamt
