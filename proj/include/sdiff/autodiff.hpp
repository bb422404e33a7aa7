#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sdiff/tensor.hpp"

// Reverse-mode autodiff over Tensor values. A Tape records every operation as
// it runs; backward() walks the record once in reverse creation order (a
// reverse topological order, since inputs always precede their consumers) and
// accumulates gradients per node. Every operation checks its output for
// non-finite values and throws naming the operation, the enclosing scope and
// the offending index.

namespace sdiff {

class Tape;

struct Var {
    int id = -1;
    Tape* tape = nullptr;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& dout)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // register a leaf value (parameter or data input)
    Var leaf(Tensor value);

    Var emit(const std::string& op, Tensor value, BackwardFn fn);

    const Tensor& value(int id) const { return nodes_[size_t(id)].value; }
    size_t node_count() const { return nodes_.size(); }

    // gradient of a scalar loss w.r.t. every recorded node
    void backward(Var loss);

    // gradient of the last backward() w.r.t. v; zero tensor if v was never
    // reached by the backward sweep
    Tensor grad_of(Var v) const;

    // called by backward functions to push gradient into a parent node
    void accumulate(int id, const Tensor& g);

    // error-message context, e.g. the denoiser block being evaluated
    void push_scope(const std::string& s) { scopes_.push_back(s); }
    void pop_scope() { scopes_.pop_back(); }
    std::string scope() const;

private:
    struct Node {
        Tensor value;
        BackwardFn backward;  // empty for leaves
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<std::string> scopes_;
    bool ran_backward_ = false;
};

struct ScopeGuard {
    Tape& tape;
    ScopeGuard(Tape& t, const std::string& s) : tape(t) { tape.push_scope(s); }
    ~ScopeGuard() { tape.pop_scope(); }
};

// ---------------------------------------------------------------------------
// operation suite
// ---------------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var vtanh(Var a);
Var square(Var a);

// y = x - c and y = x * c with a constant (non-differentiated) tensor
Var sub_const(Var x, const Tensor& c);
Var mul_const(Var x, const Tensor& c);

Var matmul(Var a, Var b);     // [m,k] x [k,n]
Var matmul_nt(Var a, Var b);  // [m,k] x [n,k]^T -> [m,n]

Var softmax(Var a);  // along the last axis

// normalize over the last axis, then per-feature affine
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-10);

// 1-d convolution along the channel (last) axis at every site, zero padded;
// kernel shape [window] (shared) or [channels, window] (per channel), window odd
Var conv1d_channels(Var x, Var kernel);

// depthwise 3-d convolution over (frames, height, width) of an [F,H,W,C]
// tensor, kernel [C,kf,kh,kw] with odd extents, zero padded
Var conv3d_depthwise(Var x, Var kernel);

Var avg_pool2d(Var x, int factor);          // [B,H,W,C] -> [B,H/g,W/g,C]
Var upsample2d_nearest(Var x, int factor);  // [B,H,W,C] -> [B,H*g,W*g,C]

// y = x W + b applied to the last axis at every leading position
Var linear(Var x, Var w, Var b);

Var add_rowvec(Var x, Var v);  // broadcast add of v[d] along the last axis

Var sum(Var a);  // -> scalar

Var reshape(Var a, std::vector<int> shape);
Var slice_last(Var a, int start, int len);
Var concat_last(const std::vector<Var>& parts);

// multi-head scaled dot-product self-attention over tokens x[n,d];
// wq/wk/wv/wo are [d,d], d divisible by heads
Var self_attention(Var x, Var wq, Var wk, Var wv, Var wo, int heads);

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

// max over coordinates of |analytic - central difference| /
// max(1e-8, |central difference|) for a scalar-valued f
double gradcheck(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps);

}  // namespace sdiff
