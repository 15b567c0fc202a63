#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "slim/core/tensor.hpp"

namespace slim {
namespace ag {

struct Node;
using Var = std::shared_ptr<Node>;

// One tape node. `backprop` receives the accumulated output gradient and adds
// into the parents' grads; closures hold shared_ptrs to parents only, so the
// graph is acyclic and frees itself when results go out of scope.
struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    bool grad_ready = false;
    std::vector<Var> parents;
    std::function<void(const Tensor& gy)> backprop;

    const Shape& shape() const { return val.shape(); }
};

Var leaf(Tensor v, bool requires_grad = true);
Var constant(Tensor v);

void accumulate(const Var& v, const Tensor& g);

// Reverse pass from a scalar (or any) root; seeds the root gradient with ones.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);        // same shape, or b with C==1 broadcast over channels
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);        // same shape, or b with C==1 broadcast
Var div(const Var& a, const Var& b);        // same shape
Var neg(const Var& a);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var gelu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var clamp_min(const Var& a, double lo);     // subgradient 0 where clamped
Var normal_cdf(const Var& a);               // Phi(x); d/dx = pdf

// ---- reductions ----
Var sum(const Var& a);                      // -> scalar
Var mean(const Var& a);                     // -> scalar
Var mse(const Var& a, const Var& b);        // mean((a-b)^2) -> scalar
Var sum_channels(const Var& a);             // (B,C,H,W) -> (B,1,H,W)
Var global_avg_pool(const Var& a);          // (B,C,H,W) -> (B,C)

// ---- shape ----
Var reshape(const Var& a, Shape s);
Var concat_channels(const std::vector<Var>& xs);
Var slice_channels(const Var& a, int c0, int c1);            // [c0, c1)
Var channel_as_column(const Var& a, int c);                  // (B,C,H,W) -> (B*H*W, 1)
Var column_scatter_channel(const Var& col, const Shape& full, int c);  // inverse embed, rest zero

// ---- linear algebra ----
Var transpose2d(const Var& a);              // (N,M) -> (M,N)
Var matmul(const Var& a, const Var& b);     // (N,K) x (K,M)
Var linear(const Var& x, const Var& w, const Var& b);  // x (N,K), w (K,M), b (M) or nullptr
Var softmax_rows(const Var& a);             // (N,M) row softmax

// ---- conv ----
// x (B,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout).
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x (B,Cin,H,W), w (Cin,Cout,kh,kw); Ho=(H-1)*stride-2*pad+kh+out_pad.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad);

// Adds a per-(batch,channel) bias t (B,C) to x (B,C,H,W).
Var add_bc(const Var& x, const Var& t);

// ---- classification ----
// logits (B,K); labels values in [0,K). Returns mean cross-entropy (natural log).
Var softmax_cross_entropy(const Var& logits, const std::vector<int>& labels);

// Detached copy: same value, no gradient flow.
Var detach(const Var& a);

}  // namespace ag
}  // namespace slim
