#include "sdiff/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "sdiff/kernels.hpp"

namespace sdiff {

namespace {

[[noreturn]] void shape_fail(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        shape_fail(op, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

Tape* same_tape(const std::string& op, std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (const Var& v : vars) {
        if (!v.valid()) shape_fail(op, "operand not attached to a tape");
        if (t == nullptr) t = v.tape;
        if (v.tape != t) shape_fail(op, "operands belong to different tapes");
    }
    return t;
}

// rows/cols view of a tensor collapsed onto its last axis
std::pair<int, int> rows_cols(const Tensor& t) {
    const int cols = t.dim(t.ndim() - 1);
    return {int(t.size() / size_t(cols)), cols};
}

}  // namespace

const Tensor& Var::val() const { return tape->value(id); }

Var Tape::leaf(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}});
    return Var{int(nodes_.size()) - 1, this};
}

std::string Tape::scope() const {
    std::string s;
    for (const auto& part : scopes_) s += part + "/";
    return s;
}

Var Tape::emit(const std::string& op, Tensor value, BackwardFn fn) {
    const size_t bad = value.first_nonfinite();
    if (bad != value.size())
        throw std::runtime_error(scope() + op + ": non-finite value at index " +
                                 std::to_string(bad));
    nodes_.push_back(Node{std::move(value), std::move(fn)});
    return Var{int(nodes_.size()) - 1, this};
}

void Tape::accumulate(int id, const Tensor& g) {
    Tensor& slot = grads_[size_t(id)];
    if (!slot.defined()) {
        slot = g;
        return;
    }
    Tensor out(slot.shape());
    kernels::ew_add(slot.data(), g.data(), out.mutable_data(), out.size());
    slot = out;
}

void Tape::backward(Var loss) {
    if (!loss.valid() || loss.tape != this)
        throw std::invalid_argument("backward: loss does not belong to this tape");
    if (loss.val().size() != 1)
        throw std::invalid_argument("backward: loss of shape " + loss.val().shape_str() +
                                    " is not scalar");
    grads_.assign(nodes_.size(), Tensor());
    grads_[size_t(loss.id)] = Tensor::scalar(1.0);
    for (int id = loss.id; id >= 0; --id) {
        const Node& node = nodes_[size_t(id)];
        if (!grads_[size_t(id)].defined() || !node.backward) continue;
        node.backward(*this, grads_[size_t(id)]);
    }
    ran_backward_ = true;
}

Tensor Tape::grad_of(Var v) const {
    if (!ran_backward_) throw std::logic_error("grad_of: backward() has not run");
    if (!v.valid() || v.tape != this)
        throw std::invalid_argument("grad_of: var does not belong to this tape");
    const Tensor& g = grads_[size_t(v.id)];
    if (g.defined()) return g;
    return Tensor::zeros(nodes_[size_t(v.id)].value.shape());
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
    Tape* t = same_tape("add", {a, b});
    require_same_shape("add", a.val(), b.val());
    Tensor out(a.val().shape());
    kernels::ew_add(a.val().data(), b.val().data(), out.mutable_data(), out.size());
    const int ia = a.id, ib = b.id;
    return t->emit("add", std::move(out), [ia, ib](Tape& tp, const Tensor& dout) {
        tp.accumulate(ia, dout);
        tp.accumulate(ib, dout);
    });
}

Var sub(Var a, Var b) {
    Tape* t = same_tape("sub", {a, b});
    require_same_shape("sub", a.val(), b.val());
    Tensor out(a.val().shape());
    kernels::ew_sub(a.val().data(), b.val().data(), out.mutable_data(), out.size());
    const int ia = a.id, ib = b.id;
    return t->emit("sub", std::move(out), [ia, ib](Tape& tp, const Tensor& dout) {
        tp.accumulate(ia, dout);
        Tensor neg(dout.shape());
        kernels::ew_scale(dout.data(), -1.0, neg.mutable_data(), neg.size());
        tp.accumulate(ib, neg);
    });
}

Var mul(Var a, Var b) {
    Tape* t = same_tape("mul", {a, b});
    require_same_shape("mul", a.val(), b.val());
    Tensor out(a.val().shape());
    kernels::ew_mul(a.val().data(), b.val().data(), out.mutable_data(), out.size());
    const int ia = a.id, ib = b.id;
    const Tensor av = a.val(), bv = b.val();
    return t->emit("mul", std::move(out), [ia, ib, av, bv](Tape& tp, const Tensor& dout) {
        Tensor da(av.shape()), db(bv.shape());
        kernels::ew_mul(dout.data(), bv.data(), da.mutable_data(), da.size());
        kernels::ew_mul(dout.data(), av.data(), db.mutable_data(), db.size());
        tp.accumulate(ia, da);
        tp.accumulate(ib, db);
    });
}

Var scale(Var a, double s) {
    Tape* t = same_tape("scale", {a});
    Tensor out(a.val().shape());
    kernels::ew_scale(a.val().data(), s, out.mutable_data(), out.size());
    const int ia = a.id;
    return t->emit("scale", std::move(out), [ia, s](Tape& tp, const Tensor& dout) {
        Tensor da(dout.shape());
        kernels::ew_scale(dout.data(), s, da.mutable_data(), da.size());
        tp.accumulate(ia, da);
    });
}

Var vtanh(Var a) {
    Tape* t = same_tape("tanh", {a});
    Tensor out(a.val().shape());
    kernels::ew_tanh(a.val().data(), out.mutable_data(), out.size());
    const int ia = a.id;
    const Tensor y = out;
    return t->emit("tanh", std::move(out), [ia, y](Tape& tp, const Tensor& dout) {
        Tensor da(y.shape());
        double* d = da.mutable_data();
        for (size_t i = 0; i < y.size(); ++i) d[i] = dout[i] * (1.0 - y[i] * y[i]);
        tp.accumulate(ia, da);
    });
}

Var square(Var a) { return mul(a, a); }

Var sub_const(Var x, const Tensor& c) {
    Tape* t = same_tape("sub_const", {x});
    require_same_shape("sub_const", x.val(), c);
    Tensor out(x.val().shape());
    kernels::ew_sub(x.val().data(), c.data(), out.mutable_data(), out.size());
    const int ix = x.id;
    return t->emit("sub_const", std::move(out),
                   [ix](Tape& tp, const Tensor& dout) { tp.accumulate(ix, dout); });
}

Var mul_const(Var x, const Tensor& c) {
    Tape* t = same_tape("mul_const", {x});
    require_same_shape("mul_const", x.val(), c);
    Tensor out(x.val().shape());
    kernels::ew_mul(x.val().data(), c.data(), out.mutable_data(), out.size());
    const int ix = x.id;
    return t->emit("mul_const", std::move(out), [ix, c](Tape& tp, const Tensor& dout) {
        Tensor dx(c.shape());
        kernels::ew_mul(dout.data(), c.data(), dx.mutable_data(), dx.size());
        tp.accumulate(ix, dx);
    });
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape* t = same_tape("matmul", {a, b});
    const Tensor va = a.val(), vb = b.val();
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0))
        shape_fail("matmul", "incompatible shapes " + va.shape_str() + " x " + vb.shape_str());
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor out({m, n});
    kernels::matmul_nn(va.data(), vb.data(), out.mutable_data(), m, k, n);
    const int ia = a.id, ib = b.id;
    return t->emit("matmul", std::move(out),
                   [ia, ib, va, vb, m, k, n](Tape& tp, const Tensor& dout) {
                       Tensor da({m, k}), db({k, n});
                       // dA = dC B^T, dB = A^T dC
                       kernels::matmul_nt(dout.data(), vb.data(), da.mutable_data(), m, n, k);
                       kernels::matmul_tn(va.data(), dout.data(), db.mutable_data(), m, k, n);
                       tp.accumulate(ia, da);
                       tp.accumulate(ib, db);
                   });
}

Var matmul_nt(Var a, Var b) {
    Tape* t = same_tape("matmul_nt", {a, b});
    const Tensor va = a.val(), vb = b.val();
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(1))
        shape_fail("matmul_nt",
                   "incompatible shapes " + va.shape_str() + " x " + vb.shape_str() + "^T");
    const int m = va.dim(0), k = va.dim(1), n = vb.dim(0);
    Tensor out({m, n});
    kernels::matmul_nt(va.data(), vb.data(), out.mutable_data(), m, k, n);
    const int ia = a.id, ib = b.id;
    return t->emit("matmul_nt", std::move(out),
                   [ia, ib, va, vb, m, k, n](Tape& tp, const Tensor& dout) {
                       // C = A B^T: dA = dC B, dB = dC^T A
                       Tensor da({m, k}), db({n, k});
                       kernels::matmul_nn(dout.data(), vb.data(), da.mutable_data(), m, n, k);
                       kernels::matmul_tn(dout.data(), va.data(), db.mutable_data(), m, n, k);
                       tp.accumulate(ia, da);
                       tp.accumulate(ib, db);
                   });
}

// ---------------------------------------------------------------------------
// row-wise nonlinearities
// ---------------------------------------------------------------------------

Var softmax(Var a) {
    Tape* t = same_tape("softmax", {a});
    const Tensor va = a.val();
    if (va.ndim() < 1) shape_fail("softmax", "rank-0 input");
    auto [rows, cols] = rows_cols(va);
    Tensor out(va.shape());
    kernels::softmax_rows(va.data(), out.mutable_data(), rows, cols);
    const int ia = a.id;
    const Tensor y = out;
    return t->emit("softmax", std::move(out),
                   [ia, y, rows, cols](Tape& tp, const Tensor& dout) {
                       Tensor dx(y.shape());
                       kernels::softmax_rows_bwd(y.data(), dout.data(), dx.mutable_data(), rows,
                                                 cols);
                       tp.accumulate(ia, dx);
                   });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape* t = same_tape("layer_norm", {x, gain, bias});
    const Tensor vx = x.val(), vg = gain.val(), vb = bias.val();
    auto [rows, cols] = rows_cols(vx);
    if (vg.size() != size_t(cols) || vb.size() != size_t(cols))
        shape_fail("layer_norm", "affine params " + vg.shape_str() + "/" + vb.shape_str() +
                                     " do not match feature width " + std::to_string(cols));
    Tensor out(vx.shape());
    Tensor xhat(vx.shape());
    Tensor inv_std({rows});
    kernels::layer_norm_rows(vx.data(), vg.data(), vb.data(), out.mutable_data(),
                             xhat.mutable_data(), inv_std.mutable_data(), rows, cols, eps);
    const int ix = x.id, ig = gain.id, ib = bias.id;
    return t->emit("layer_norm", std::move(out),
                   [ix, ig, ib, xhat, inv_std, vg, rows, cols](Tape& tp, const Tensor& dout) {
                       Tensor dx(xhat.shape()), dg({cols}), db({cols});
                       kernels::layer_norm_rows_bwd(dout.data(), xhat.data(), inv_std.data(),
                                                    vg.data(), dx.mutable_data(),
                                                    dg.mutable_data(), db.mutable_data(), rows,
                                                    cols);
                       tp.accumulate(ix, dx);
                       tp.accumulate(ig, dg);
                       tp.accumulate(ib, db);
                   });
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

Var conv1d_channels(Var x, Var kernel) {
    Tape* t = same_tape("conv1d_channels", {x, kernel});
    const Tensor vx = x.val(), vk = kernel.val();
    auto [sites, chans] = rows_cols(vx);
    bool per_channel;
    int window;
    if (vk.ndim() == 1) {
        per_channel = false;
        window = vk.dim(0);
    } else if (vk.ndim() == 2 && vk.dim(0) == chans) {
        per_channel = true;
        window = vk.dim(1);
    } else {
        shape_fail("conv1d_channels", "kernel " + vk.shape_str() + " does not match " +
                                          std::to_string(chans) + " channels");
    }
    if (window % 2 == 0)
        shape_fail("conv1d_channels", "window " + std::to_string(window) + " must be odd");
    Tensor out(vx.shape());
    kernels::conv1d_channels(vx.data(), vk.data(), out.mutable_data(), sites, chans, window,
                             per_channel);
    const int ix = x.id, ik = kernel.id;
    return t->emit(
        "conv1d_channels", std::move(out),
        [ix, ik, vx, vk, sites, chans, window, per_channel](Tape& tp, const Tensor& dout) {
            Tensor dx(vx.shape()), dk(vk.shape());
            kernels::conv1d_channels_bwd_x(dout.data(), vk.data(), dx.mutable_data(), sites,
                                           chans, window, per_channel);
            kernels::conv1d_channels_bwd_w(dout.data(), vx.data(), dk.mutable_data(), sites,
                                           chans, window, per_channel);
            tp.accumulate(ix, dx);
            tp.accumulate(ik, dk);
        });
}

Var conv3d_depthwise(Var x, Var kernel) {
    Tape* t = same_tape("conv3d_depthwise", {x, kernel});
    const Tensor vx = x.val(), vk = kernel.val();
    if (vx.ndim() != 4) shape_fail("conv3d_depthwise", "input " + vx.shape_str() + " not rank 4");
    const int f = vx.dim(0), h = vx.dim(1), w = vx.dim(2), c = vx.dim(3);
    if (vk.ndim() != 4 || vk.dim(0) != c)
        shape_fail("conv3d_depthwise", "kernel " + vk.shape_str() + " does not match " +
                                           std::to_string(c) + " channels");
    const int kf = vk.dim(1), kh = vk.dim(2), kw = vk.dim(3);
    if (kf % 2 == 0 || kh % 2 == 0 || kw % 2 == 0)
        shape_fail("conv3d_depthwise", "kernel extents " + vk.shape_str() + " must be odd");
    Tensor out(vx.shape());
    kernels::conv3d_depthwise(vx.data(), vk.data(), out.mutable_data(), f, h, w, c, kf, kh, kw);
    const int ix = x.id, ik = kernel.id;
    return t->emit("conv3d_depthwise", std::move(out),
                   [ix, ik, vx, vk, f, h, w, c, kf, kh, kw](Tape& tp, const Tensor& dout) {
                       Tensor dx(vx.shape()), dk(vk.shape());
                       kernels::conv3d_depthwise_bwd_x(dout.data(), vk.data(), dx.mutable_data(),
                                                       f, h, w, c, kf, kh, kw);
                       kernels::conv3d_depthwise_bwd_w(dout.data(), vx.data(), dk.mutable_data(),
                                                       f, h, w, c, kf, kh, kw);
                       tp.accumulate(ix, dx);
                       tp.accumulate(ik, dk);
                   });
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

Var avg_pool2d(Var x, int factor) {
    Tape* t = same_tape("avg_pool2d", {x});
    const Tensor vx = x.val();
    if (vx.ndim() != 4) shape_fail("avg_pool2d", "input " + vx.shape_str() + " not rank 4");
    const int b = vx.dim(0), h = vx.dim(1), w = vx.dim(2), c = vx.dim(3);
    if (factor < 1 || h % factor != 0 || w % factor != 0)
        shape_fail("avg_pool2d", "factor " + std::to_string(factor) +
                                     " does not divide spatial extents of " + vx.shape_str());
    Tensor out({b, h / factor, w / factor, c});
    kernels::avg_pool2d(vx.data(), out.mutable_data(), b, h, w, c, factor);
    const int ix = x.id;
    return t->emit("avg_pool2d", std::move(out),
                   [ix, b, h, w, c, factor](Tape& tp, const Tensor& dout) {
                       Tensor dx({b, h, w, c});
                       kernels::avg_pool2d_bwd(dout.data(), dx.mutable_data(), b, h, w, c,
                                               factor);
                       tp.accumulate(ix, dx);
                   });
}

Var upsample2d_nearest(Var x, int factor) {
    Tape* t = same_tape("upsample2d_nearest", {x});
    const Tensor vx = x.val();
    if (vx.ndim() != 4)
        shape_fail("upsample2d_nearest", "input " + vx.shape_str() + " not rank 4");
    const int b = vx.dim(0), h = vx.dim(1), w = vx.dim(2), c = vx.dim(3);
    if (factor < 1) shape_fail("upsample2d_nearest", "factor must be positive");
    Tensor out({b, h * factor, w * factor, c});
    kernels::upsample2d_nearest(vx.data(), out.mutable_data(), b, h, w, c, factor);
    const int ix = x.id;
    return t->emit("upsample2d_nearest", std::move(out),
                   [ix, b, h, w, c, factor](Tape& tp, const Tensor& dout) {
                       Tensor dx({b, h, w, c});
                       kernels::upsample2d_nearest_bwd(dout.data(), dx.mutable_data(), b, h, w,
                                                       c, factor);
                       tp.accumulate(ix, dx);
                   });
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

Var reshape(Var a, std::vector<int> shape) {
    Tape* t = same_tape("reshape", {a});
    const Tensor va = a.val();
    if (numel_of(shape) != va.size())
        shape_fail("reshape", va.shape_str() + " -> " + shape_str(shape) +
                                  " changes element count");
    std::vector<double> data(va.data(), va.data() + va.size());
    Tensor out(shape, std::move(data));
    const int ia = a.id;
    const std::vector<int> old_shape = va.shape();
    return t->emit("reshape", std::move(out), [ia, old_shape](Tape& tp, const Tensor& dout) {
        std::vector<double> d(dout.data(), dout.data() + dout.size());
        tp.accumulate(ia, Tensor(old_shape, std::move(d)));
    });
}

Var slice_last(Var a, int start, int len) {
    Tape* t = same_tape("slice_last", {a});
    const Tensor va = a.val();
    auto [rows, cols] = rows_cols(va);
    if (start < 0 || len < 1 || start + len > cols)
        shape_fail("slice_last", "range [" + std::to_string(start) + "," +
                                     std::to_string(start + len) + ") out of " +
                                     std::to_string(cols) + " columns");
    std::vector<int> shape = va.shape();
    shape.back() = len;
    Tensor out(shape);
    double* o = out.mutable_data();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j) o[size_t(r) * len + j] = va[size_t(r) * cols + start + j];
    const int ia = a.id;
    const std::vector<int> in_shape = va.shape();
    return t->emit("slice_last", std::move(out),
                   [ia, in_shape, rows, cols, start, len](Tape& tp, const Tensor& dout) {
                       Tensor dx(in_shape);
                       double* d = dx.mutable_data();
                       for (int r = 0; r < rows; ++r)
                           for (int j = 0; j < len; ++j)
                               d[size_t(r) * cols + start + j] = dout[size_t(r) * len + j];
                       tp.accumulate(ia, dx);
                   });
}

Var concat_last(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last: no operands");
    Tape* t = parts[0].tape;
    int total = 0;
    const Tensor first = parts[0].val();
    for (const Var& p : parts) {
        same_tape("concat_last", {parts[0], p});
        const Tensor v = p.val();
        if (v.ndim() != first.ndim())
            shape_fail("concat_last", "rank mismatch " + v.shape_str());
        for (int i = 0; i + 1 < v.ndim(); ++i)
            if (v.dim(i) != first.dim(i))
                shape_fail("concat_last",
                           "leading shape mismatch " + v.shape_str() + " vs " +
                               first.shape_str());
        total += v.dim(v.ndim() - 1);
    }
    auto [rows, cols0] = rows_cols(first);
    (void)cols0;
    std::vector<int> shape = first.shape();
    shape.back() = total;
    Tensor out(shape);
    double* o = out.mutable_data();
    int offset = 0;
    std::vector<std::pair<int, int>> spans;  // (id, width)
    for (const Var& p : parts) {
        const Tensor v = p.val();
        const int w = v.dim(v.ndim() - 1);
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j)
                o[size_t(r) * total + offset + j] = v[size_t(r) * w + j];
        spans.emplace_back(p.id, w);
        offset += w;
    }
    return t->emit("concat_last", std::move(out),
                   [spans, rows, total](Tape& tp, const Tensor& dout) {
                       int off = 0;
                       for (auto [id, w] : spans) {
                           std::vector<int> sh = dout.shape();
                           sh.back() = w;
                           Tensor dp(sh);
                           double* d = dp.mutable_data();
                           for (int r = 0; r < rows; ++r)
                               for (int j = 0; j < w; ++j)
                                   d[size_t(r) * w + j] = dout[size_t(r) * total + off + j];
                           tp.accumulate(id, dp);
                           off += w;
                       }
                   });
}

// ---------------------------------------------------------------------------
// reductions and broadcasts
// ---------------------------------------------------------------------------

Var sum(Var a) {
    Tape* t = same_tape("sum", {a});
    const Tensor va = a.val();
    double acc = 0.0;
    for (size_t i = 0; i < va.size(); ++i) acc += va[i];
    const int ia = a.id;
    const std::vector<int> shape = va.shape();
    return t->emit("sum", Tensor::scalar(acc), [ia, shape](Tape& tp, const Tensor& dout) {
        tp.accumulate(ia, Tensor::full(shape, dout[0]));
    });
}

Var add_rowvec(Var x, Var v) {
    Tape* t = same_tape("add_rowvec", {x, v});
    const Tensor vx = x.val(), vv = v.val();
    auto [rows, cols] = rows_cols(vx);
    if (vv.size() != size_t(cols))
        shape_fail("add_rowvec", "vector " + vv.shape_str() + " does not match feature width " +
                                     std::to_string(cols));
    Tensor out(vx.shape());
    double* o = out.mutable_data();
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < cols; ++j) o[size_t(r) * cols + j] = vx[size_t(r) * cols + j] + vv[size_t(j)];
    const int ix = x.id, iv = v.id;
    const std::vector<int> vshape = vv.shape();
    return t->emit("add_rowvec", std::move(out),
                   [ix, iv, rows, cols, vshape](Tape& tp, const Tensor& dout) {
                       tp.accumulate(ix, dout);
                       Tensor dv(vshape);
                       double* d = dv.mutable_data();
                       for (int r = 0; r < rows; ++r)
                           for (int j = 0; j < cols; ++j) d[j] += dout[size_t(r) * cols + j];
                       tp.accumulate(iv, dv);
                   });
}

Var linear(Var x, Var w, Var b) {
    const Tensor vx = x.val(), vw = w.val();
    if (vw.ndim() != 2)
        shape_fail("linear", "weight " + vw.shape_str() + " not rank 2");
    auto [rows, cols] = rows_cols(vx);
    if (cols != vw.dim(0))
        shape_fail("linear", "input " + vx.shape_str() + " does not match weight " +
                                 vw.shape_str());
    std::vector<int> out_shape = vx.shape();
    out_shape.back() = vw.dim(1);
    Var flat = vx.ndim() == 2 ? x : reshape(x, {rows, cols});
    Var y = add_rowvec(matmul(flat, w), b);
    return vx.ndim() == 2 ? y : reshape(y, out_shape);
}

// ---------------------------------------------------------------------------
// attention
// ---------------------------------------------------------------------------

Var self_attention(Var x, Var wq, Var wk, Var wv, Var wo, int heads) {
    const Tensor vx = x.val();
    if (vx.ndim() != 2) shape_fail("self_attention", "tokens " + vx.shape_str() + " not rank 2");
    const int d = vx.dim(1);
    if (heads < 1 || d % heads != 0)
        shape_fail("self_attention",
                   "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                       " heads");
    const int dh = d / heads;
    Var q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
    std::vector<Var> outs;
    outs.reserve(size_t(heads));
    for (int hd = 0; hd < heads; ++hd) {
        Var qh = heads == 1 ? q : slice_last(q, hd * dh, dh);
        Var kh = heads == 1 ? k : slice_last(k, hd * dh, dh);
        Var vh = heads == 1 ? v : slice_last(v, hd * dh, dh);
        Var scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
        Var attn = softmax(scores);
        outs.push_back(matmul(attn, vh));
    }
    Var merged = heads == 1 ? outs[0] : concat_last(outs);
    return matmul(merged, wo);
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double gradcheck(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
    if (!x.all_finite()) throw std::invalid_argument("gradcheck: non-finite input");

    Tensor analytic;
    {
        Tape tape;
        Var vx = tape.leaf(x);
        Var y = f(tape, vx);
        if (y.val().size() != 1)
            throw std::invalid_argument("gradcheck: f is not scalar-valued");
        tape.backward(y);
        analytic = tape.grad_of(vx);
    }

    auto eval = [&](const Tensor& p) {
        Tape tape;
        Var vp = tape.leaf(p);
        return f(tape, vp).val().item();
    };

    double max_rel = 0.0;
    std::vector<double> base(x.data(), x.data() + x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        std::vector<double> hi = base, lo = base;
        hi[i] += eps;
        lo[i] -= eps;
        double fp, fm;
        try {
            fp = eval(Tensor(x.shape(), std::move(hi)));
            fm = eval(Tensor(x.shape(), std::move(lo)));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("gradcheck: non-finite intermediate at coordinate " +
                                     std::to_string(i) + " (" + e.what() + ")");
        }
        const double numeric = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

}  // namespace sdiff
