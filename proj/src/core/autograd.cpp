#include "slim/core/autograd.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace slim {
namespace ag {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Var make_node(Tensor v, std::vector<Var> parents) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->val.same_shape(b->val))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape()) + " vs " +
                                    shape_str(b->shape()));
}

// true when b broadcasts over the channel axis of a
bool chan_broadcast(const Shape& a, const Shape& b) {
    return a.size() == 4 && b.size() == 4 && b[0] == a[0] && b[1] == 1 && b[2] == a[2] && b[3] == a[3] && a[1] != 1;
}

Tensor reduce_to_chan1(const Tensor& g, const Shape& bshape) {
    Tensor out(bshape, 0.0);
    const int B = g.shape()[0], C = g.shape()[1], H = g.shape()[2], W = g.shape()[3];
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) out.at(b, 0, h, w) += g.at(b, c, h, w);
    return out;
}

template <class FwdFn, class GradFn>
Var unary_ew(const Var& a, FwdFn f, GradFn df) {
    Tensor v(a->shape());
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = f(a->val[i]);
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa, df](const Tensor& gy) {
            if (!pa->requires_grad) return;
            Tensor g(pa->shape());
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = gy[i] * df(pa->val[i]);
            accumulate(pa, g);
        };
    }
    return out;
}

}  // namespace

Var leaf(Tensor v, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor v) { return leaf(std::move(v), false); }

void accumulate(const Var& v, const Tensor& g) {
    if (!v->grad_ready) {
        v->grad = g;
        v->grad_ready = true;
    } else {
        for (int64_t i = 0; i < g.numel(); ++i) v->grad[i] += g[i];
    }
}

void backward(const Var& root) {
    // topological order via iterative DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::unordered_map<Node*, Var> keep;
    std::vector<std::pair<Var, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Var p = n->parents[idx++];
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n.get());
            keep.emplace(n.get(), n);
            stack.pop_back();
        }
    }
    Tensor seed(root->shape());
    seed.fill(1.0);
    accumulate(root, seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->grad_ready) n->backprop(n->grad);
    }
}

Var add(const Var& a, const Var& b) {
    if (chan_broadcast(a->shape(), b->shape())) {
        Tensor v(a->shape());
        const int B = a->shape()[0], C = a->shape()[1], H = a->shape()[2], W = a->shape()[3];
        for (int bb = 0; bb < B; ++bb)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) v.at(bb, c, h, w) = a->val.at(bb, c, h, w) + b->val.at(bb, 0, h, w);
        Var out = make_node(std::move(v), {a, b});
        if (out->requires_grad) {
            Var pa = a, pb = b;
            out->backprop = [pa, pb](const Tensor& gy) {
                if (pa->requires_grad) accumulate(pa, gy);
                if (pb->requires_grad) accumulate(pb, reduce_to_chan1(gy, pb->shape()));
            };
        }
        return out;
    }
    check_same_shape(a, b, "add");
    Tensor v(a->shape());
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->val[i] + b->val[i];
    Var out = make_node(std::move(v), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb](const Tensor& gy) {
            if (pa->requires_grad) accumulate(pa, gy);
            if (pb->requires_grad) accumulate(pb, gy);
        };
    }
    return out;
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor v(a->shape());
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->val[i] - b->val[i];
    Var out = make_node(std::move(v), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb](const Tensor& gy) {
            if (pa->requires_grad) accumulate(pa, gy);
            if (pb->requires_grad) {
                Tensor g(gy.shape());
                for (int64_t i = 0; i < g.numel(); ++i) g[i] = -gy[i];
                accumulate(pb, g);
            }
        };
    }
    return out;
}

Var mul(const Var& a, const Var& b) {
    if (chan_broadcast(a->shape(), b->shape())) {
        Tensor v(a->shape());
        const int B = a->shape()[0], C = a->shape()[1], H = a->shape()[2], W = a->shape()[3];
        for (int bb = 0; bb < B; ++bb)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) v.at(bb, c, h, w) = a->val.at(bb, c, h, w) * b->val.at(bb, 0, h, w);
        Var out = make_node(std::move(v), {a, b});
        if (out->requires_grad) {
            Var pa = a, pb = b;
            out->backprop = [pa, pb](const Tensor& gy) {
                const int B = gy.shape()[0], C = gy.shape()[1], H = gy.shape()[2], W = gy.shape()[3];
                if (pa->requires_grad) {
                    Tensor g(pa->shape());
                    for (int bb = 0; bb < B; ++bb)
                        for (int c = 0; c < C; ++c)
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < W; ++w) g.at(bb, c, h, w) = gy.at(bb, c, h, w) * pb->val.at(bb, 0, h, w);
                    accumulate(pa, g);
                }
                if (pb->requires_grad) {
                    Tensor g(pb->shape(), 0.0);
                    for (int bb = 0; bb < B; ++bb)
                        for (int c = 0; c < C; ++c)
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < W; ++w) g.at(bb, 0, h, w) += gy.at(bb, c, h, w) * pa->val.at(bb, c, h, w);
                    accumulate(pb, g);
                }
            };
        }
        return out;
    }
    check_same_shape(a, b, "mul");
    Tensor v(a->shape());
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->val[i] * b->val[i];
    Var out = make_node(std::move(v), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb](const Tensor& gy) {
            if (pa->requires_grad) {
                Tensor g(gy.shape());
                for (int64_t i = 0; i < g.numel(); ++i) g[i] = gy[i] * pb->val[i];
                accumulate(pa, g);
            }
            if (pb->requires_grad) {
                Tensor g(gy.shape());
                for (int64_t i = 0; i < g.numel(); ++i) g[i] = gy[i] * pa->val[i];
                accumulate(pb, g);
            }
        };
    }
    return out;
}

Var div(const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor v(a->shape());
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = a->val[i] / b->val[i];
    Var out = make_node(std::move(v), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb](const Tensor& gy) {
            if (pa->requires_grad) {
                Tensor g(gy.shape());
                for (int64_t i = 0; i < g.numel(); ++i) g[i] = gy[i] / pb->val[i];
                accumulate(pa, g);
            }
            if (pb->requires_grad) {
                Tensor g(gy.shape());
                for (int64_t i = 0; i < g.numel(); ++i) g[i] = -gy[i] * pa->val[i] / (pb->val[i] * pb->val[i]);
                accumulate(pb, g);
            }
        };
    }
    return out;
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double c) {
    return unary_ew(a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

Var mul_scalar(const Var& a, double c) {
    return unary_ew(a, [c](double x) { return x * c; }, [c](double) { return c; });
}

Var relu(const Var& a) {
    return unary_ew(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var leaky_relu(const Var& a, double slope) {
    return unary_ew(a, [slope](double x) { return x > 0 ? x : slope * x; },
                    [slope](double x) { return x > 0 ? 1.0 : slope; });
}

Var gelu(const Var& a) {
    auto phi = [](double x) { return 0.5 * std::erfc(-x * kInvSqrt2); };
    return unary_ew(a, [phi](double x) { return x * phi(x); },
                    [phi](double x) { return phi(x) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x); });
}

Var tanh(const Var& a) {
    return unary_ew(a, [](double x) { return std::tanh(x); },
                    [](double x) {
                        const double t = std::tanh(x);
                        return 1.0 - t * t;
                    });
}

Var sigmoid(const Var& a) {
    auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    return unary_ew(a, s, [s](double x) {
        const double v = s(x);
        return v * (1.0 - v);
    });
}

Var softplus(const Var& a) {
    return unary_ew(a, [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
                    [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var exp(const Var& a) {
    return unary_ew(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(const Var& a) {
    return unary_ew(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sqrt(const Var& a) {
    return unary_ew(a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var square(const Var& a) {
    return unary_ew(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var clamp_min(const Var& a, double lo) {
    return unary_ew(a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x) { return x < lo ? 0.0 : 1.0; });
}

Var normal_cdf(const Var& a) {
    return unary_ew(a, [](double x) { return 0.5 * std::erfc(-x * kInvSqrt2); },
                    [](double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); });
}

Var sum(const Var& a) {
    Var out = make_node(Tensor::scalar(a->val.sum()), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa](const Tensor& gy) {
            Tensor g(pa->shape(), gy[0]);
            accumulate(pa, g);
        };
    }
    return out;
}

Var mean(const Var& a) { return mul_scalar(sum(a), 1.0 / static_cast<double>(a->val.numel())); }

Var mse(const Var& a, const Var& b) {
    check_same_shape(a, b, "mse");
    const int64_t n = a->val.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = a->val[i] - b->val[i];
        acc += d * d;
    }
    Var out = make_node(Tensor::scalar(acc / static_cast<double>(n)), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb, n](const Tensor& gy) {
            const double s = 2.0 * gy[0] / static_cast<double>(n);
            Tensor g(pa->shape());
            for (int64_t i = 0; i < n; ++i) g[i] = s * (pa->val[i] - pb->val[i]);
            if (pa->requires_grad) accumulate(pa, g);
            if (pb->requires_grad) {
                for (int64_t i = 0; i < n; ++i) g[i] = -g[i];
                accumulate(pb, g);
            }
        };
    }
    return out;
}

Var sum_channels(const Var& a) {
    const Shape& s = a->shape();
    Tensor v(Shape{s[0], 1, s[2], s[3]}, 0.0);
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c)
            for (int h = 0; h < s[2]; ++h)
                for (int w = 0; w < s[3]; ++w) v.at(b, 0, h, w) += a->val.at(b, c, h, w);
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa](const Tensor& gy) {
            const Shape& s = pa->shape();
            Tensor g(s);
            for (int b = 0; b < s[0]; ++b)
                for (int c = 0; c < s[1]; ++c)
                    for (int h = 0; h < s[2]; ++h)
                        for (int w = 0; w < s[3]; ++w) g.at(b, c, h, w) = gy.at(b, 0, h, w);
            accumulate(pa, g);
        };
    }
    return out;
}

Var global_avg_pool(const Var& a) {
    const Shape& s = a->shape();
    const double inv = 1.0 / static_cast<double>(s[2] * s[3]);
    Tensor v(Shape{s[0], s[1]}, 0.0);
    for (int b = 0; b < s[0]; ++b)
        for (int c = 0; c < s[1]; ++c) {
            double acc = 0.0;
            for (int h = 0; h < s[2]; ++h)
                for (int w = 0; w < s[3]; ++w) acc += a->val.at(b, c, h, w);
            v.at(b, c) = acc * inv;
        }
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa, inv](const Tensor& gy) {
            const Shape& s = pa->shape();
            Tensor g(s);
            for (int b = 0; b < s[0]; ++b)
                for (int c = 0; c < s[1]; ++c) {
                    const double gv = gy.at(b, c) * inv;
                    for (int h = 0; h < s[2]; ++h)
                        for (int w = 0; w < s[3]; ++w) g.at(b, c, h, w) = gv;
                }
            accumulate(pa, g);
        };
    }
    return out;
}

Var reshape(const Var& a, Shape s) {
    Var out = make_node(a->val.reshaped(std::move(s)), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa](const Tensor& gy) { accumulate(pa, gy.reshaped(pa->shape())); };
    }
    return out;
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("concat_channels: empty input");
    const Shape& s0 = xs[0]->shape();
    int ctot = 0;
    for (const auto& x : xs) {
        const Shape& s = x->shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3])
            throw std::invalid_argument("concat_channels: incompatible shapes");
        ctot += s[1];
    }
    const int B = s0[0], H = s0[2], W = s0[3];
    Tensor v(Shape{B, ctot, H, W});
    int coff = 0;
    for (const auto& x : xs) {
        const int C = x->shape()[1];
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) v.at(b, coff + c, h, w) = x->val.at(b, c, h, w);
        coff += C;
    }
    Var out = make_node(std::move(v), xs);
    if (out->requires_grad) {
        std::vector<Var> ps = xs;
        out->backprop = [ps](const Tensor& gy) {
            const int B = gy.shape()[0], H = gy.shape()[2], W = gy.shape()[3];
            int coff = 0;
            for (const auto& p : ps) {
                const int C = p->shape()[1];
                if (p->requires_grad) {
                    Tensor g(p->shape());
                    for (int b = 0; b < B; ++b)
                        for (int c = 0; c < C; ++c)
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < W; ++w) g.at(b, c, h, w) = gy.at(b, coff + c, h, w);
                    accumulate(p, g);
                }
                coff += C;
            }
        };
    }
    return out;
}

Var slice_channels(const Var& a, int c0, int c1) {
    const Shape& s = a->shape();
    if (c0 < 0 || c1 > s[1] || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
    const int B = s[0], H = s[2], W = s[3];
    Tensor v(Shape{B, c1 - c0, H, W});
    for (int b = 0; b < B; ++b)
        for (int c = c0; c < c1; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) v.at(b, c - c0, h, w) = a->val.at(b, c, h, w);
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa, c0, c1](const Tensor& gy) {
            Tensor g(pa->shape(), 0.0);
            const int B = gy.shape()[0], H = gy.shape()[2], W = gy.shape()[3];
            for (int b = 0; b < B; ++b)
                for (int c = c0; c < c1; ++c)
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w) g.at(b, c, h, w) = gy.at(b, c - c0, h, w);
            accumulate(pa, g);
        };
    }
    return out;
}

Var channel_as_column(const Var& a, int c) {
    const Shape& s = a->shape();
    const int B = s[0], H = s[2], W = s[3];
    Tensor v(Shape{B * H * W, 1});
    int64_t k = 0;
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) v[k++] = a->val.at(b, c, h, w);
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa, c](const Tensor& gy) {
            const Shape& s = pa->shape();
            Tensor g(s, 0.0);
            int64_t k = 0;
            for (int b = 0; b < s[0]; ++b)
                for (int h = 0; h < s[2]; ++h)
                    for (int w = 0; w < s[3]; ++w) g.at(b, c, h, w) = gy[k++];
            accumulate(pa, g);
        };
    }
    return out;
}

Var column_scatter_channel(const Var& col, const Shape& full, int c) {
    Tensor v(full, 0.0);
    int64_t k = 0;
    for (int b = 0; b < full[0]; ++b)
        for (int h = 0; h < full[2]; ++h)
            for (int w = 0; w < full[3]; ++w) v.at(b, c, h, w) = col->val[k++];
    Var out = make_node(std::move(v), {col});
    if (out->requires_grad) {
        Var pc = col;
        out->backprop = [pc, c](const Tensor& gy) {
            Tensor g(pc->shape());
            int64_t k = 0;
            for (int b = 0; b < gy.shape()[0]; ++b)
                for (int h = 0; h < gy.shape()[2]; ++h)
                    for (int w = 0; w < gy.shape()[3]; ++w) g[k++] = gy.at(b, c, h, w);
            accumulate(pc, g);
        };
    }
    return out;
}

Var transpose2d(const Var& a) {
    const Shape& s = a->shape();
    if (s.size() != 2) throw std::invalid_argument("transpose2d: expected rank 2, got " + shape_str(s));
    Tensor v(Shape{s[1], s[0]});
    for (int r = 0; r < s[0]; ++r)
        for (int c = 0; c < s[1]; ++c) v.at(c, r) = a->val.at(r, c);
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        out->backprop = [pa](const Tensor& gy) {
            const Shape& s = pa->shape();
            Tensor g(s);
            for (int r = 0; r < s[0]; ++r)
                for (int c = 0; c < s[1]; ++c) g.at(r, c) = gy.at(c, r);
            accumulate(pa, g);
        };
    }
    return out;
}

Var matmul(const Var& a, const Var& b) {
    const Shape& sa = a->shape();
    const Shape& sb = b->shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
        throw std::invalid_argument("matmul: bad shapes " + shape_str(sa) + " x " + shape_str(sb));
    Tensor v(Shape{sa[0], sb[1]});
    {
        CMapMat A(a->val.data(), sa[0], sa[1]);
        CMapMat B(b->val.data(), sb[0], sb[1]);
        MapMat Y(v.data(), sa[0], sb[1]);
        Y.noalias() = A * B;
    }
    Var out = make_node(std::move(v), {a, b});
    if (out->requires_grad) {
        Var pa = a, pb = b;
        out->backprop = [pa, pb](const Tensor& gy) {
            const Shape& sa = pa->shape();
            const Shape& sb = pb->shape();
            CMapMat G(gy.data(), sa[0], sb[1]);
            if (pa->requires_grad) {
                Tensor ga(sa);
                CMapMat B(pb->val.data(), sb[0], sb[1]);
                MapMat GA(ga.data(), sa[0], sa[1]);
                GA.noalias() = G * B.transpose();
                accumulate(pa, ga);
            }
            if (pb->requires_grad) {
                Tensor gb(sb);
                CMapMat A(pa->val.data(), sa[0], sa[1]);
                MapMat GB(gb.data(), sb[0], sb[1]);
                GB.noalias() = A.transpose() * G;
                accumulate(pb, gb);
            }
        };
    }
    return out;
}

Var linear(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    if (!b) return y;
    const Shape& sy = y->shape();
    Tensor v(sy);
    for (int r = 0; r < sy[0]; ++r)
        for (int c = 0; c < sy[1]; ++c) v.at(r, c) = y->val.at(r, c) + b->val[c];
    Var out = make_node(std::move(v), {y, b});
    if (out->requires_grad) {
        Var py = y, pb = b;
        out->backprop = [py, pb](const Tensor& gy) {
            if (py->requires_grad) accumulate(py, gy);
            if (pb->requires_grad) {
                Tensor g(pb->shape(), 0.0);
                for (int r = 0; r < gy.shape()[0]; ++r)
                    for (int c = 0; c < gy.shape()[1]; ++c) g[c] += gy.at(r, c);
                accumulate(pb, g);
            }
        };
    }
    return out;
}

Var softmax_rows(const Var& a) {
    const Shape& s = a->shape();
    Tensor v(s);
    for (int r = 0; r < s[0]; ++r) {
        double mx = -1e300;
        for (int c = 0; c < s[1]; ++c) mx = std::max(mx, a->val.at(r, c));
        double z = 0.0;
        for (int c = 0; c < s[1]; ++c) {
            const double e = std::exp(a->val.at(r, c) - mx);
            v.at(r, c) = e;
            z += e;
        }
        for (int c = 0; c < s[1]; ++c) v.at(r, c) /= z;
    }
    Var out = make_node(std::move(v), {a});
    if (out->requires_grad) {
        Var pa = a;
        Tensor sm = out->val;
        out->backprop = [pa, sm](const Tensor& gy) {
            const Shape& s = pa->shape();
            Tensor g(s);
            for (int r = 0; r < s[0]; ++r) {
                double dot = 0.0;
                for (int c = 0; c < s[1]; ++c) dot += gy.at(r, c) * sm.at(r, c);
                for (int c = 0; c < s[1]; ++c) g.at(r, c) = sm.at(r, c) * (gy.at(r, c) - dot);
            }
            accumulate(pa, g);
        };
    }
    return out;
}

// ---- convolution ----

namespace {

void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, double* cols) {
    // cols is (C*kh*kw, Ho*Wo) row-major
    for (int c = 0; c < C; ++c)
        for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
                double* row = cols + (static_cast<int64_t>(c) * kh * kw + u * kw + v) * Ho * Wo;
                for (int i = 0; i < Ho; ++i) {
                    const int hi = i * stride - pad + u;
                    for (int j = 0; j < Wo; ++j) {
                        const int wj = j * stride - pad + v;
                        row[i * Wo + j] = (hi >= 0 && hi < H && wj >= 0 && wj < W)
                                              ? x[(static_cast<int64_t>(c) * H + hi) * W + wj]
                                              : 0.0;
                    }
                }
            }
}

void col2im(const double* cols, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho, int Wo, double* x) {
    for (int c = 0; c < C; ++c)
        for (int u = 0; u < kh; ++u)
            for (int v = 0; v < kw; ++v) {
                const double* row = cols + (static_cast<int64_t>(c) * kh * kw + u * kw + v) * Ho * Wo;
                for (int i = 0; i < Ho; ++i) {
                    const int hi = i * stride - pad + u;
                    if (hi < 0 || hi >= H) continue;
                    for (int j = 0; j < Wo; ++j) {
                        const int wj = j * stride - pad + v;
                        if (wj < 0 || wj >= W) continue;
                        x[(static_cast<int64_t>(c) * H + hi) * W + wj] += row[i * Wo + j];
                    }
                }
            }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const Shape& sx = x->shape();
    const Shape& sw = w->shape();
    if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[1])
        throw std::invalid_argument("conv2d: bad shapes " + shape_str(sx) + " w " + shape_str(sw));
    const int B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
    const int Cout = sw[0], kh = sw[2], kw = sw[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: output would be empty");
    const int K = Cin * kh * kw;
    Tensor v(Shape{B, Cout, Ho, Wo});
    std::vector<double> cols(static_cast<size_t>(K) * Ho * Wo);
    CMapMat Wm(w->val.data(), Cout, K);
    for (int bb = 0; bb < B; ++bb) {
        im2col(x->val.data() + static_cast<int64_t>(bb) * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
               cols.data());
        CMapMat M(cols.data(), K, Ho * Wo);
        MapMat Y(v.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo, Cout, Ho * Wo);
        Y.noalias() = Wm * M;
        if (b) {
            for (int c = 0; c < Cout; ++c) Y.row(c).array() += b->val[c];
        }
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    Var out = make_node(std::move(v), std::move(parents));
    if (out->requires_grad) {
        Var px = x, pw = w, pb = b;
        out->backprop = [px, pw, pb, stride, pad, Ho, Wo](const Tensor& gy) {
            const Shape& sx = px->shape();
            const Shape& sw = pw->shape();
            const int B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
            const int Cout = sw[0], kh = sw[2], kw = sw[3];
            const int K = Cin * kh * kw;
            Tensor gx(sx, 0.0), gw(sw, 0.0);
            Tensor gb;
            if (pb) gb = Tensor(pb->shape(), 0.0);
            std::vector<double> cols(static_cast<size_t>(K) * Ho * Wo);
            std::vector<double> dcols(static_cast<size_t>(K) * Ho * Wo);
            CMapMat Wm(pw->val.data(), Cout, K);
            MapMat GW(gw.data(), Cout, K);
            for (int bb = 0; bb < B; ++bb) {
                CMapMat GY(gy.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo, Cout, Ho * Wo);
                if (pw->requires_grad || px->requires_grad)
                    im2col(px->val.data() + static_cast<int64_t>(bb) * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho,
                           Wo, cols.data());
                if (pw->requires_grad) {
                    CMapMat M(cols.data(), K, Ho * Wo);
                    GW.noalias() += GY * M.transpose();
                }
                if (px->requires_grad) {
                    MapMat DM(dcols.data(), K, Ho * Wo);
                    DM.noalias() = Wm.transpose() * GY;
                    col2im(dcols.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                           gx.data() + static_cast<int64_t>(bb) * Cin * H * W);
                }
                if (pb && pb->requires_grad)
                    for (int c = 0; c < Cout; ++c) gb[c] += GY.row(c).sum();
            }
            if (px->requires_grad) accumulate(px, gx);
            if (pw->requires_grad) accumulate(pw, gw);
            if (pb && pb->requires_grad) accumulate(pb, gb);
        };
    }
    return out;
}

Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad) {
    const Shape& sx = x->shape();
    const Shape& sw = w->shape();
    if (sx.size() != 4 || sw.size() != 4 || sx[1] != sw[0])
        throw std::invalid_argument("conv_transpose2d: bad shapes " + shape_str(sx) + " w " + shape_str(sw));
    const int B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
    const int Cout = sw[1], kh = sw[2], kw = sw[3];
    const int Ho = (H - 1) * stride - 2 * pad + kh + out_pad;
    const int Wo = (W - 1) * stride - 2 * pad + kw + out_pad;
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv_transpose2d: output would be empty");
    const int K = Cout * kh * kw;
    Tensor v(Shape{B, Cout, Ho, Wo}, 0.0);
    std::vector<double> cols(static_cast<size_t>(K) * H * W);
    CMapMat Wm(w->val.data(), Cin, K);
    for (int bb = 0; bb < B; ++bb) {
        CMapMat X(x->val.data() + static_cast<int64_t>(bb) * Cin * H * W, Cin, H * W);
        MapMat M(cols.data(), K, H * W);
        M.noalias() = Wm.transpose() * X;
        col2im(cols.data(), Cout, Ho, Wo, kh, kw, stride, pad, H, W,
               v.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo);
        if (b) {
            MapMat Y(v.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo, Cout, Ho * Wo);
            for (int c = 0; c < Cout; ++c) Y.row(c).array() += b->val[c];
        }
    }
    std::vector<Var> parents{x, w};
    if (b) parents.push_back(b);
    Var out = make_node(std::move(v), std::move(parents));
    if (out->requires_grad) {
        Var px = x, pw = w, pb = b;
        out->backprop = [px, pw, pb, stride, pad](const Tensor& gy) {
            const Shape& sx = px->shape();
            const Shape& sw = pw->shape();
            const int B = sx[0], Cin = sx[1], H = sx[2], W = sx[3];
            const int Cout = sw[1], kh = sw[2], kw = sw[3];
            const int Ho = gy.shape()[2], Wo = gy.shape()[3];
            const int K = Cout * kh * kw;
            Tensor gx(sx, 0.0), gw(sw, 0.0);
            Tensor gb;
            if (pb) gb = Tensor(pb->shape(), 0.0);
            std::vector<double> dcols(static_cast<size_t>(K) * H * W);
            CMapMat Wm(pw->val.data(), Cin, K);
            MapMat GW(gw.data(), Cin, K);
            for (int bb = 0; bb < B; ++bb) {
                // dcols = im2col(gy) under the same gather pattern
                im2col(gy.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo, Cout, Ho, Wo, kh, kw, stride, pad, H, W,
                       dcols.data());
                CMapMat DM(dcols.data(), K, H * W);
                if (px->requires_grad) {
                    MapMat GX(gx.data() + static_cast<int64_t>(bb) * Cin * H * W, Cin, H * W);
                    GX.noalias() = Wm * DM;
                }
                if (pw->requires_grad) {
                    CMapMat X(px->val.data() + static_cast<int64_t>(bb) * Cin * H * W, Cin, H * W);
                    GW.noalias() += X * DM.transpose();
                }
                if (pb && pb->requires_grad) {
                    CMapMat GY(gy.data() + static_cast<int64_t>(bb) * Cout * Ho * Wo, Cout, Ho * Wo);
                    for (int c = 0; c < Cout; ++c) gb[c] += GY.row(c).sum();
                }
            }
            if (px->requires_grad) accumulate(px, gx);
            if (pw->requires_grad) accumulate(pw, gw);
            if (pb && pb->requires_grad) accumulate(pb, gb);
        };
    }
    return out;
}

Var add_bc(const Var& x, const Var& t) {
    const Shape& sx = x->shape();
    const Shape& st = t->shape();
    if (sx.size() != 4 || st.size() != 2 || st[0] != sx[0] || st[1] != sx[1])
        throw std::invalid_argument("add_bc: bad shapes " + shape_str(sx) + " + " + shape_str(st));
    Tensor v(sx);
    for (int b = 0; b < sx[0]; ++b)
        for (int c = 0; c < sx[1]; ++c) {
            const double tv = t->val.at(b, c);
            for (int h = 0; h < sx[2]; ++h)
                for (int w = 0; w < sx[3]; ++w) v.at(b, c, h, w) = x->val.at(b, c, h, w) + tv;
        }
    Var out = make_node(std::move(v), {x, t});
    if (out->requires_grad) {
        Var px = x, pt = t;
        out->backprop = [px, pt](const Tensor& gy) {
            if (px->requires_grad) accumulate(px, gy);
            if (pt->requires_grad) {
                const Shape& s = gy.shape();
                Tensor g(pt->shape(), 0.0);
                for (int b = 0; b < s[0]; ++b)
                    for (int c = 0; c < s[1]; ++c) {
                        double acc = 0.0;
                        for (int h = 0; h < s[2]; ++h)
                            for (int w = 0; w < s[3]; ++w) acc += gy.at(b, c, h, w);
                        g.at(b, c) = acc;
                    }
                accumulate(pt, g);
            }
        };
    }
    return out;
}

Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const Shape& s = logits->shape();
    if (s.size() != 2 || static_cast<size_t>(s[0]) != labels.size())
        throw std::invalid_argument("softmax_cross_entropy: bad shapes");
    const int B = s[0], K = s[1];
    for (int lbl : labels)
        if (lbl < 0 || lbl >= K) throw std::out_of_range("softmax_cross_entropy: label out of range");
    Tensor sm(s);
    double loss = 0.0;
    for (int r = 0; r < B; ++r) {
        double mx = -1e300;
        for (int c = 0; c < K; ++c) mx = std::max(mx, logits->val.at(r, c));
        double z = 0.0;
        for (int c = 0; c < K; ++c) {
            const double e = std::exp(logits->val.at(r, c) - mx);
            sm.at(r, c) = e;
            z += e;
        }
        for (int c = 0; c < K; ++c) sm.at(r, c) /= z;
        loss -= std::log(std::max(sm.at(r, labels[static_cast<size_t>(r)]), 1e-300));
    }
    Var out = make_node(Tensor::scalar(loss / B), {logits});
    if (out->requires_grad) {
        Var pl = logits;
        std::vector<int> lab = labels;
        out->backprop = [pl, sm, lab](const Tensor& gy) {
            const int B = pl->shape()[0], K = pl->shape()[1];
            Tensor g(pl->shape());
            const double sc = gy[0] / B;
            for (int r = 0; r < B; ++r)
                for (int c = 0; c < K; ++c)
                    g.at(r, c) = sc * (sm.at(r, c) - (c == lab[static_cast<size_t>(r)] ? 1.0 : 0.0));
            accumulate(pl, g);
        };
    }
    return out;
}

Var detach(const Var& a) { return constant(a->val); }

}  // namespace ag
}  // namespace slim
