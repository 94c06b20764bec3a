#include "pamt/numerics/tape.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "pamt/numerics/errors.hpp"

namespace pamt {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

MatMap as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
    return MatMap(t.storage().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

ConstMatMap as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatMap(t.storage().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) throw ShapeError(std::string(op), t.shape(), Shape(rank, 0));
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op), a.shape(), b.shape());
}

struct ConvGeometry {
    std::size_t cin, h, w, cout, kh, kw, stride, pad, ho, wo;
    std::size_t patch_rows() const { return cin * kh * kw; }
    std::size_t positions() const { return ho * wo; }
};

// cols[(c*kh + i)*kw + j][oy*wo + ox] = x[c][oy*s + i - p][ox*s + j - p]
void im2col(const ConvGeometry& g, const double* x, double* cols) {
    const std::size_t npos = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* dst = cols + ((c * g.kh + i) * g.kw + j) * npos;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    double* row = dst + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
                        std::fill(row, row + g.wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const double* cols, double* dx) {
    const std::size_t npos = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* src = cols + ((c * g.kh + i) * g.kw + j) * npos;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                    double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const double* row = src + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const auto ix =
                            static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += row[ox];
                    }
                }
            }
        }
    }
}

// Index helper for softmax over one axis of a rank-1/2 tensor.
struct AxisLayout {
    std::size_t outer, n, inner;
};

AxisLayout axis_layout(const Tensor& t, std::size_t axis) {
    if (t.rank() == 1 && axis == 0) return {1, t.dim(0), 1};
    if (t.rank() == 2 && axis == 0) return {1, t.dim(0), t.dim(1)};
    if (t.rank() == 2 && axis == 1) return {t.dim(0), t.dim(1), 1};
    throw ShapeError("softmax", t.shape(), Shape{axis});
}

}  // namespace

Tensor Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.has_grad ? n.grad : Tensor(n.value.shape());
}

Tensor& Tape::grad_ref(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

bool Tape::any_requires(std::initializer_list<Var> inputs) const {
    if (!record_) return false;
    return std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_[v.id].requires_grad; });
}

Var Tape::push(std::string_view op, Tensor value, bool requires_grad, BackwardFn fn) {
    if (!value.all_finite()) throw NonFiniteError(std::string(op));
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = record_ && requires_grad;
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::push(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(op, std::move(value), any_requires(inputs), std::move(fn));
}

Var Tape::constant(Tensor value) { return push("constant", std::move(value), false, {}); }

Var Tape::param(ParamRegistry& registry, ParamId id) {
    Parameter& p = registry.at(id);
    Var v = push("param", p.value, p.trainable, {});
    nodes_[v.id].param = &p;
    return v;
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.rank() != 2 || B.rank() != 2) throw ShapeError("matmul", A.shape(), B.shape());
    const std::size_t m = trans_a ? A.dim(1) : A.dim(0);
    const std::size_t k = trans_a ? A.dim(0) : A.dim(1);
    const std::size_t kb = trans_b ? B.dim(1) : B.dim(0);
    const std::size_t n = trans_b ? B.dim(0) : B.dim(1);
    if (k != kb) throw ShapeError("matmul", A.shape(), B.shape());

    Tensor C({m, n});
    {
        auto Am = as_matrix(A, A.dim(0), A.dim(1));
        auto Bm = as_matrix(B, B.dim(0), B.dim(1));
        auto Cm = as_matrix(C, m, n);
        if (!trans_a && !trans_b) Cm.noalias() = Am * Bm;
        else if (trans_a && !trans_b) Cm.noalias() = Am.transpose() * Bm;
        else if (!trans_a && trans_b) Cm.noalias() = Am * Bm.transpose();
        else Cm.noalias() = Am.transpose() * Bm.transpose();
    }
    return push("matmul", std::move(C), {a, b}, [a, b, trans_a, trans_b, m, n](Tape& t, std::size_t self) {
        const Tensor& A = t.nodes_[a.id].value;
        const Tensor& B = t.nodes_[b.id].value;
        auto Am = as_matrix(A, A.dim(0), A.dim(1));
        auto Bm = as_matrix(B, B.dim(0), B.dim(1));
        auto dC = as_matrix(t.nodes_[self].grad, m, n);
        if (t.nodes_[a.id].requires_grad) {
            auto dA = as_matrix(t.grad_ref(a.id), A.dim(0), A.dim(1));
            // d op(A) = dC op(B)^T
            if (!trans_a) {
                if (!trans_b) dA.noalias() += dC * Bm.transpose();
                else dA.noalias() += dC * Bm;
            } else {
                if (!trans_b) dA.noalias() += Bm * dC.transpose();
                else dA.noalias() += Bm.transpose() * dC.transpose();
            }
        }
        if (t.nodes_[b.id].requires_grad) {
            auto dB = as_matrix(t.grad_ref(b.id), B.dim(0), B.dim(1));
            // d op(B) = op(A)^T dC
            if (!trans_b) {
                if (!trans_a) dB.noalias() += Am.transpose() * dC;
                else dB.noalias() += Am * dC;
            } else {
                if (!trans_a) dB.noalias() += dC.transpose() * Am;
                else dB.noalias() += dC.transpose() * Am.transpose();
            }
        }
    });
}

Var Tape::conv2d(Var x, Var w, std::optional<Var> bias, std::size_t stride, std::size_t pad) {
    const Tensor& X = value(x);
    const Tensor& W = value(w);
    if (X.rank() != 3 || W.rank() != 4 || W.dim(1) != X.dim(0)) throw ShapeError("conv2d", X.shape(), W.shape());
    if (stride != 1 && stride != 2) throw InvalidArgument("conv2d: stride must be 1 or 2");
    ConvGeometry g{};
    g.cin = X.dim(0);
    g.h = X.dim(1);
    g.w = X.dim(2);
    g.cout = W.dim(0);
    g.kh = W.dim(2);
    g.kw = W.dim(3);
    g.stride = stride;
    g.pad = pad;
    if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) throw ShapeError("conv2d", X.shape(), W.shape());
    g.ho = (g.h + 2 * pad - g.kh) / stride + 1;
    g.wo = (g.w + 2 * pad - g.kw) / stride + 1;
    if (bias) {
        const Tensor& B = value(*bias);
        if (B.rank() != 1 || B.dim(0) != g.cout) throw ShapeError("conv2d.bias", B.shape(), Shape{g.cout});
    }

    std::vector<double> cols(g.patch_rows() * g.positions());
    im2col(g, X.storage().data(), cols.data());
    Tensor Y({g.cout, g.ho, g.wo});
    {
        ConstMatMap C(cols.data(), static_cast<Eigen::Index>(g.patch_rows()), static_cast<Eigen::Index>(g.positions()));
        auto Wm = as_matrix(W, g.cout, g.patch_rows());
        auto Ym = as_matrix(Y, g.cout, g.positions());
        Ym.noalias() = Wm * C;
        if (bias) {
            const Tensor& B = value(*bias);
            for (std::size_t o = 0; o < g.cout; ++o) Ym.row(static_cast<Eigen::Index>(o)).array() += B[o];
        }
    }

    const bool need = bias ? any_requires({x, w, *bias}) : any_requires({x, w});
    // Columns are only needed for the weight gradient.
    if (!(need && nodes_[w.id].requires_grad)) cols = {};
    return push("conv2d", std::move(Y), need,
                [x, w, bias, g, cols = std::move(cols)](Tape& t, std::size_t self) {
                    const Tensor& dY = t.nodes_[self].grad;
                    auto dYm = as_matrix(dY, g.cout, g.positions());
                    if (t.nodes_[w.id].requires_grad) {
                        ConstMatMap C(cols.data(), static_cast<Eigen::Index>(g.patch_rows()),
                                      static_cast<Eigen::Index>(g.positions()));
                        auto dW = as_matrix(t.grad_ref(w.id), g.cout, g.patch_rows());
                        dW.noalias() += dYm * C.transpose();
                    }
                    if (bias && t.nodes_[bias->id].requires_grad) {
                        Tensor& dB = t.grad_ref(bias->id);
                        for (std::size_t o = 0; o < g.cout; ++o) dB[o] += dYm.row(static_cast<Eigen::Index>(o)).sum();
                    }
                    if (t.nodes_[x.id].requires_grad) {
                        RowMat dcols = as_matrix(t.nodes_[w.id].value, g.cout, g.patch_rows()).transpose() * dYm;
                        col2im(g, dcols.data(), t.grad_ref(x.id).storage().data());
                    }
                });
}

Var Tape::relu(Var x) {
    Tensor y = value(x);
    for (double& v : y.storage()) v = v > 0.0 ? v : 0.0;
    return push("relu", std::move(y), {x}, [x](Tape& t, std::size_t self) {
        const Tensor& X = t.nodes_[x.id].value;
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < X.size(); ++i)
            if (X[i] > 0.0) dx[i] += dy[i];
    });
}

Var Tape::sigmoid(Var x) {
    Tensor y = value(x);
    for (double& v : y.storage()) v = stable_sigmoid(v);
    return push("sigmoid", std::move(y), {x}, [x](Tape& t, std::size_t self) {
        const Tensor& Y = t.nodes_[self].value;
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < Y.size(); ++i) dx[i] += dy[i] * Y[i] * (1.0 - Y[i]);
    });
}

Var Tape::tanh(Var x) {
    Tensor y = value(x);
    for (double& v : y.storage()) v = std::tanh(v);
    return push("tanh", std::move(y), {x}, [x](Tape& t, std::size_t self) {
        const Tensor& Y = t.nodes_[self].value;
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < Y.size(); ++i) dx[i] += dy[i] * (1.0 - Y[i] * Y[i]);
    });
}

Var Tape::softmax(Var x, std::size_t axis) {
    const Tensor& X = value(x);
    const AxisLayout L = axis_layout(X, axis);
    Tensor y(X.shape());
    for (std::size_t o = 0; o < L.outer; ++o) {
        for (std::size_t q = 0; q < L.inner; ++q) {
            auto idx = [&](std::size_t i) { return (o * L.n + i) * L.inner + q; };
            double mx = X[idx(0)];
            for (std::size_t i = 1; i < L.n; ++i) mx = std::max(mx, X[idx(i)]);
            double z = 0.0;
            for (std::size_t i = 0; i < L.n; ++i) {
                y[idx(i)] = std::exp(X[idx(i)] - mx);
                z += y[idx(i)];
            }
            for (std::size_t i = 0; i < L.n; ++i) y[idx(i)] /= z;
        }
    }
    return push("softmax", std::move(y), {x}, [x, L](Tape& t, std::size_t self) {
        const Tensor& Y = t.nodes_[self].value;
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t o = 0; o < L.outer; ++o) {
            for (std::size_t q = 0; q < L.inner; ++q) {
                auto idx = [&](std::size_t i) { return (o * L.n + i) * L.inner + q; };
                double dot = 0.0;
                for (std::size_t i = 0; i < L.n; ++i) dot += dy[idx(i)] * Y[idx(i)];
                for (std::size_t i = 0; i < L.n; ++i) dx[idx(i)] += Y[idx(i)] * (dy[idx(i)] - dot);
            }
        }
    });
}

Var Tape::global_avg_pool(Var x) {
    const Tensor& X = value(x);
    require_rank("global_avg_pool", X, 3);
    const std::size_t c = X.dim(0), hw = X.dim(1) * X.dim(2);
    Tensor y({c});
    for (std::size_t k = 0; k < c; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < hw; ++i) s += X[k * hw + i];
        y[k] = s / static_cast<double>(hw);
    }
    return push("global_avg_pool", std::move(y), {x}, [x, c, hw](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t k = 0; k < c; ++k) {
            const double g = dy[k] / static_cast<double>(hw);
            for (std::size_t i = 0; i < hw; ++i) dx[k * hw + i] += g;
        }
    });
}

Var Tape::avg_pool2(Var x) {
    const Tensor& X = value(x);
    require_rank("avg_pool2", X, 3);
    const std::size_t c = X.dim(0), h = X.dim(1), w = X.dim(2);
    if (h < 2 || w < 2) throw ShapeError("avg_pool2", X.shape(), Shape{c, 2, 2});
    const std::size_t ho = h / 2, wo = w / 2;
    Tensor y({c, ho, wo});
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox)
                y.at(k, oy, ox) = 0.25 * (X.at(k, 2 * oy, 2 * ox) + X.at(k, 2 * oy, 2 * ox + 1) +
                                          X.at(k, 2 * oy + 1, 2 * ox) + X.at(k, 2 * oy + 1, 2 * ox + 1));
    return push("avg_pool2", std::move(y), {x}, [x, c, ho, wo](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t k = 0; k < c; ++k)
            for (std::size_t oy = 0; oy < ho; ++oy)
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const double g = 0.25 * dy.at(k, oy, ox);
                    dx.at(k, 2 * oy, 2 * ox) += g;
                    dx.at(k, 2 * oy, 2 * ox + 1) += g;
                    dx.at(k, 2 * oy + 1, 2 * ox) += g;
                    dx.at(k, 2 * oy + 1, 2 * ox + 1) += g;
                }
    });
}

Var Tape::add(Var a, Var b) {
    require_same_shape("add", value(a), value(b));
    Tensor y = value(a);
    const Tensor& B = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
    return push("add", std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
        for (Var v : {a, b}) {
            if (!t.nodes_[v.id].requires_grad) continue;
            const Tensor& dy = t.nodes_[self].grad;
            Tensor& dv = t.grad_ref(v.id);
            for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += dy[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape("mul", value(a), value(b));
    Tensor y = value(a);
    const Tensor& B = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
    return push("mul", std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        const Tensor& A = t.nodes_[a.id].value;
        const Tensor& B = t.nodes_[b.id].value;
        if (t.nodes_[a.id].requires_grad) {
            Tensor& da = t.grad_ref(a.id);
            for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * B[i];
        }
        if (t.nodes_[b.id].requires_grad) {
            Tensor& db = t.grad_ref(b.id);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * A[i];
        }
    });
}

Var Tape::masked_add(Var base, Var addend, const Tensor& mask) {
    require_same_shape("masked_add", value(base), value(addend));
    require_same_shape("masked_add", value(base), mask);
    Tensor y = value(base);
    const Tensor& P = value(addend);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (mask[i] != 0.0) y[i] += P[i];
    return push("masked_add", std::move(y), {base, addend}, [base, addend, mask](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        if (t.nodes_[base.id].requires_grad) {
            Tensor& db = t.grad_ref(base.id);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i];
        }
        if (t.nodes_[addend.id].requires_grad) {
            Tensor& dp = t.grad_ref(addend.id);
            for (std::size_t i = 0; i < dp.size(); ++i)
                if (mask[i] != 0.0) dp[i] += dy[i];
        }
    });
}

Var Tape::channel_mul(Var x, Var gate) {
    const Tensor& X = value(x);
    const Tensor& G = value(gate);
    if (X.rank() != 3 || G.rank() != 1 || G.dim(0) != X.dim(0)) throw ShapeError("channel_mul", X.shape(), G.shape());
    const std::size_t c = X.dim(0), hw = X.dim(1) * X.dim(2);
    Tensor y = X;
    for (std::size_t k = 0; k < c; ++k)
        for (std::size_t i = 0; i < hw; ++i) y[k * hw + i] *= G[k];
    return push("channel_mul", std::move(y), {x, gate}, [x, gate, c, hw](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        const Tensor& X = t.nodes_[x.id].value;
        const Tensor& G = t.nodes_[gate.id].value;
        if (t.nodes_[x.id].requires_grad) {
            Tensor& dx = t.grad_ref(x.id);
            for (std::size_t k = 0; k < c; ++k)
                for (std::size_t i = 0; i < hw; ++i) dx[k * hw + i] += dy[k * hw + i] * G[k];
        }
        if (t.nodes_[gate.id].requires_grad) {
            Tensor& dg = t.grad_ref(gate.id);
            for (std::size_t k = 0; k < c; ++k) {
                double s = 0.0;
                for (std::size_t i = 0; i < hw; ++i) s += dy[k * hw + i] * X[k * hw + i];
                dg[k] += s;
            }
        }
    });
}

Var Tape::mean_rows(Var x) {
    const Tensor& X = value(x);
    require_rank("mean_rows", X, 2);
    const std::size_t m = X.dim(0), d = X.dim(1);
    Tensor y({d});
    for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += X.at(i, j);
        y[j] = s / static_cast<double>(m);
    }
    return push("mean_rows", std::move(y), {x}, [x, m, d](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < d; ++j) dx.at(i, j) += dy[j] / static_cast<double>(m);
    });
}

Var Tape::max_rows(Var x) {
    const Tensor& X = value(x);
    require_rank("max_rows", X, 2);
    const std::size_t m = X.dim(0), d = X.dim(1);
    Tensor y({d});
    std::vector<std::size_t> argmax(d, 0);
    for (std::size_t j = 0; j < d; ++j) {
        y[j] = X.at(0, j);
        for (std::size_t i = 1; i < m; ++i) {
            if (X.at(i, j) > y[j]) {
                y[j] = X.at(i, j);
                argmax[j] = i;
            }
        }
    }
    return push("max_rows", std::move(y), {x}, [x, d, argmax = std::move(argmax)](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t j = 0; j < d; ++j) dx.at(argmax[j], j) += dy[j];
    });
}

Var Tape::bce_with_logits(Var logit, double label) {
    const Tensor& Z = value(logit);
    if (Z.size() != 1) throw ShapeError("bce_with_logits", Z.shape(), Shape{1});
    const double z = Z[0];
    const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
    return push("bce_with_logits", Tensor::scalar(loss), {logit}, [logit, label, z](Tape& t, std::size_t self) {
        const double dy = t.nodes_[self].grad[0];
        t.grad_ref(logit.id)[0] += dy * (stable_sigmoid(z) - label);
    });
}

Var Tape::stack_rows(std::span<const Var> rows) {
    if (rows.empty()) throw InvalidArgument("stack_rows: no rows");
    const Tensor& first = value(rows.front());
    if (first.rank() != 1) throw ShapeError("stack_rows", first.shape(), Shape{first.size()});
    const std::size_t d = first.dim(0);
    Tensor y({rows.size(), d});
    bool need = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Tensor& r = value(rows[i]);
        if (r.shape() != first.shape()) throw ShapeError("stack_rows", first.shape(), r.shape());
        std::copy(r.storage().begin(), r.storage().end(), y.storage().begin() + static_cast<std::ptrdiff_t>(i * d));
        need = need || (record_ && nodes_[rows[i].id].requires_grad);
    }
    std::vector<Var> ids(rows.begin(), rows.end());
    return push("stack_rows", std::move(y), need, [ids = std::move(ids), d](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!t.nodes_[ids[i].id].requires_grad) continue;
            Tensor& dr = t.grad_ref(ids[i].id);
            for (std::size_t j = 0; j < d; ++j) dr[j] += dy[i * d + j];
        }
    });
}

Var Tape::reshape(Var x, Shape shape) {
    Tensor y = value(x).reshaped(std::move(shape));
    return push("reshape", std::move(y), {x}, [x](Tape& t, std::size_t self) {
        const Tensor& dy = t.nodes_[self].grad;
        Tensor& dx = t.grad_ref(x.id);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i];
    });
}

Var Tape::sum(Var x) {
    double s = 0.0;
    for (double v : value(x).storage()) s += v;
    return push("sum", Tensor::scalar(s), {x}, [x](Tape& t, std::size_t self) {
        const double dy = t.nodes_[self].grad[0];
        Tensor& dx = t.grad_ref(x.id);
        for (double& v : dx.storage()) v += dy;
    });
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) throw ShapeError("backward", value(loss).shape(), Shape{1});
    backward(loss, Tensor(value(loss).shape(), 1.0));
}

void Tape::backward(Var out, const Tensor& seed) {
    if (!record_) throw Error("backward: tape was created without recording");
    require_same_shape("backward", value(out), seed);
    if (!nodes_[out.id].requires_grad) return;
    Tensor& g = grad_ref(out.id);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    run_backward(out.id);
}

void Tape::run_backward(std::size_t start) {
    for (std::size_t i = start + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.has_grad) continue;
        if (!n.grad.all_finite()) throw NonFiniteError(std::string(n.op), "backward");
        if (n.param) {
            Tensor& pg = n.param->grad;
            for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
        } else if (n.backward) {
            n.backward(*this, i);
        }
    }
}

}  // namespace pamt
