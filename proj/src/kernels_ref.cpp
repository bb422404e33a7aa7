#include <cmath>

#include "sdiff/kernels.hpp"

// Serial reference kernels. Kept deliberately naive: these are the ground
// truth the OpenMP variants are tested against.

namespace sdiff::kernels::ref {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < m; ++p) acc += a[p * k + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + size_t(r) * cols;
        double* yr = y + size_t(r) * cols;
        double mx = xr[0];
        for (int j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (int j = 0; j < cols; ++j) yr[j] /= z;
    }
}

void softmax_rows_bwd(const double* y, const double* dy, double* dx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* yr = y + size_t(r) * cols;
        const double* dyr = dy + size_t(r) * cols;
        double* dxr = dx + size_t(r) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
        for (int j = 0; j < cols; ++j) dxr[j] = yr[j] * (dyr[j] - dot);
    }
}

void layer_norm_rows(const double* x, const double* gain, const double* bias, double* y,
                     double* xhat, double* inv_std, int rows, int cols, double eps) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + size_t(r) * cols;
        double* yr = y + size_t(r) * cols;
        double* hr = xhat + size_t(r) * cols;
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += xr[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int j = 0; j < cols; ++j) {
            hr[j] = (xr[j] - mean) * is;
            yr[j] = gain[j] * hr[j] + bias[j];
        }
    }
}

void layer_norm_rows_bwd(const double* dy, const double* xhat, const double* inv_std,
                         const double* gain, double* dx, double* dgain, double* dbias, int rows,
                         int cols) {
    for (int j = 0; j < cols; ++j) {
        dgain[j] = 0.0;
        dbias[j] = 0.0;
    }
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy + size_t(r) * cols;
        const double* hr = xhat + size_t(r) * cols;
        for (int j = 0; j < cols; ++j) {
            dgain[j] += dyr[j] * hr[j];
            dbias[j] += dyr[j];
        }
    }
    for (int r = 0; r < rows; ++r) {
        const double* dyr = dy + size_t(r) * cols;
        const double* hr = xhat + size_t(r) * cols;
        double* dxr = dx + size_t(r) * cols;
        double sum_dh = 0.0, sum_dhh = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double dh = dyr[j] * gain[j];
            sum_dh += dh;
            sum_dhh += dh * hr[j];
        }
        const double is = inv_std[r];
        for (int j = 0; j < cols; ++j) {
            const double dh = dyr[j] * gain[j];
            dxr[j] = is * (dh - sum_dh / cols - hr[j] * sum_dhh / cols);
        }
    }
}

void conv1d_channels(const double* x, const double* w, double* y, int sites, int chans,
                     int window, bool per_channel) {
    const int r = window / 2;
    for (int s = 0; s < sites; ++s) {
        const double* xs = x + size_t(s) * chans;
        double* ys = y + size_t(s) * chans;
        for (int c = 0; c < chans; ++c) {
            const double* wc = per_channel ? w + size_t(c) * window : w;
            double acc = 0.0;
            for (int u = 0; u < window; ++u) {
                const int src = c + u - r;
                if (src >= 0 && src < chans) acc += wc[u] * xs[src];
            }
            ys[c] = acc;
        }
    }
}

void conv1d_channels_bwd_x(const double* dy, const double* w, double* dx, int sites, int chans,
                           int window, bool per_channel) {
    const int r = window / 2;
    for (int s = 0; s < sites; ++s) {
        const double* dys = dy + size_t(s) * chans;
        double* dxs = dx + size_t(s) * chans;
        for (int c = 0; c < chans; ++c) {
            double acc = 0.0;
            // y[c'] touches x[c] when c' + u - r == c
            for (int u = 0; u < window; ++u) {
                const int cp = c - u + r;
                if (cp < 0 || cp >= chans) continue;
                const double* wc = per_channel ? w + size_t(cp) * window : w;
                acc += wc[u] * dys[cp];
            }
            dxs[c] = acc;
        }
    }
}

void conv1d_channels_bwd_w(const double* dy, const double* x, double* dw, int sites, int chans,
                           int window, bool per_channel) {
    const int r = window / 2;
    if (per_channel) {
        for (int c = 0; c < chans; ++c) {
            for (int u = 0; u < window; ++u) {
                const int src = c + u - r;
                double acc = 0.0;
                if (src >= 0 && src < chans)
                    for (int s = 0; s < sites; ++s)
                        acc += dy[size_t(s) * chans + c] * x[size_t(s) * chans + src];
                dw[size_t(c) * window + u] = acc;
            }
        }
    } else {
        for (int u = 0; u < window; ++u) {
            double acc = 0.0;
            for (int s = 0; s < sites; ++s)
                for (int c = 0; c < chans; ++c) {
                    const int src = c + u - r;
                    if (src >= 0 && src < chans)
                        acc += dy[size_t(s) * chans + c] * x[size_t(s) * chans + src];
                }
            dw[u] = acc;
        }
    }
}

void conv3d_depthwise(const double* x, const double* k, double* y, int f, int h, int w, int c,
                      int kf, int kh, int kw) {
    const int rf = kf / 2, rh = kh / 2, rw = kw / 2;
    for (int fi = 0; fi < f; ++fi)
        for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < w; ++wi)
                for (int ci = 0; ci < c; ++ci) {
                    const double* kc = k + size_t(ci) * kf * kh * kw;
                    double acc = 0.0;
                    for (int a = 0; a < kf; ++a) {
                        const int sf = fi + a - rf;
                        if (sf < 0 || sf >= f) continue;
                        for (int b = 0; b < kh; ++b) {
                            const int sh = hi + b - rh;
                            if (sh < 0 || sh >= h) continue;
                            for (int e = 0; e < kw; ++e) {
                                const int sw = wi + e - rw;
                                if (sw < 0 || sw >= w) continue;
                                acc += kc[(a * kh + b) * kw + e] *
                                       x[((size_t(sf) * h + sh) * w + sw) * c + ci];
                            }
                        }
                    }
                    y[((size_t(fi) * h + hi) * w + wi) * c + ci] = acc;
                }
}

void conv3d_depthwise_bwd_x(const double* dy, const double* k, double* dx, int f, int h, int w,
                            int c, int kf, int kh, int kw) {
    const int rf = kf / 2, rh = kh / 2, rw = kw / 2;
    for (int fi = 0; fi < f; ++fi)
        for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < w; ++wi)
                for (int ci = 0; ci < c; ++ci) {
                    const double* kc = k + size_t(ci) * kf * kh * kw;
                    double acc = 0.0;
                    for (int a = 0; a < kf; ++a) {
                        const int of = fi - a + rf;
                        if (of < 0 || of >= f) continue;
                        for (int b = 0; b < kh; ++b) {
                            const int oh = hi - b + rh;
                            if (oh < 0 || oh >= h) continue;
                            for (int e = 0; e < kw; ++e) {
                                const int ow = wi - e + rw;
                                if (ow < 0 || ow >= w) continue;
                                acc += kc[(a * kh + b) * kw + e] *
                                       dy[((size_t(of) * h + oh) * w + ow) * c + ci];
                            }
                        }
                    }
                    dx[((size_t(fi) * h + hi) * w + wi) * c + ci] = acc;
                }
}

void conv3d_depthwise_bwd_w(const double* dy, const double* x, double* dk, int f, int h, int w,
                            int c, int kf, int kh, int kw) {
    const int rf = kf / 2, rh = kh / 2, rw = kw / 2;
    for (int ci = 0; ci < c; ++ci) {
        double* kc = dk + size_t(ci) * kf * kh * kw;
        for (int a = 0; a < kf; ++a)
            for (int b = 0; b < kh; ++b)
                for (int e = 0; e < kw; ++e) {
                    double acc = 0.0;
                    for (int fi = 0; fi < f; ++fi) {
                        const int sf = fi + a - rf;
                        if (sf < 0 || sf >= f) continue;
                        for (int hi = 0; hi < h; ++hi) {
                            const int sh = hi + b - rh;
                            if (sh < 0 || sh >= h) continue;
                            for (int wi = 0; wi < w; ++wi) {
                                const int sw = wi + e - rw;
                                if (sw < 0 || sw >= w) continue;
                                acc += dy[((size_t(fi) * h + hi) * w + wi) * c + ci] *
                                       x[((size_t(sf) * h + sh) * w + sw) * c + ci];
                            }
                        }
                    }
                    kc[(a * kh + b) * kw + e] = acc;
                }
    }
}

void avg_pool2d(const double* x, double* y, int b, int h, int w, int c, int g) {
    const int ho = h / g, wo = w / g;
    const double inv = 1.0 / (g * g);
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < ho; ++hi)
            for (int wi = 0; wi < wo; ++wi)
                for (int ci = 0; ci < c; ++ci) {
                    double acc = 0.0;
                    for (int dh = 0; dh < g; ++dh)
                        for (int dw = 0; dw < g; ++dw)
                            acc += x[((size_t(bi) * h + (hi * g + dh)) * w + (wi * g + dw)) * c +
                                     ci];
                    y[((size_t(bi) * ho + hi) * wo + wi) * c + ci] = acc * inv;
                }
}

void avg_pool2d_bwd(const double* dy, double* dx, int b, int h, int w, int c, int g) {
    const int ho = h / g, wo = w / g;
    const double inv = 1.0 / (g * g);
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < w; ++wi)
                for (int ci = 0; ci < c; ++ci)
                    dx[((size_t(bi) * h + hi) * w + wi) * c + ci] =
                        dy[((size_t(bi) * ho + hi / g) * wo + wi / g) * c + ci] * inv;
}

void upsample2d_nearest(const double* x, double* y, int b, int h, int w, int c, int g) {
    const int ho = h * g, wo = w * g;
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < ho; ++hi)
            for (int wi = 0; wi < wo; ++wi)
                for (int ci = 0; ci < c; ++ci)
                    y[((size_t(bi) * ho + hi) * wo + wi) * c + ci] =
                        x[((size_t(bi) * h + hi / g) * w + wi / g) * c + ci];
}

void upsample2d_nearest_bwd(const double* dy, double* dx, int b, int h, int w, int c, int g) {
    const int ho = h * g, wo = w * g;
    for (int bi = 0; bi < b; ++bi)
        for (int hi = 0; hi < h; ++hi)
            for (int wi = 0; wi < w; ++wi)
                for (int ci = 0; ci < c; ++ci) {
                    double acc = 0.0;
                    for (int dh = 0; dh < g; ++dh)
                        for (int dw = 0; dw < g; ++dw)
                            acc += dy[((size_t(bi) * ho + (hi * g + dh)) * wo + (wi * g + dw)) *
                                          c +
                                      ci];
                    dx[((size_t(bi) * h + hi) * w + wi) * c + ci] = acc;
                }
}

void ew_add(const double* a, const double* b, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void ew_sub(const double* a, const double* b, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}

void ew_mul(const double* a, const double* b, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

void ew_tanh(const double* a, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = std::tanh(a[i]);
}

void ew_scale(const double* a, double s, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] = a[i] * s;
}

}  // namespace sdiff::kernels::ref
