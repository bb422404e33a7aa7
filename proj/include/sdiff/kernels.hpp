#pragma once

#include <cstddef>

// Dense numeric kernels behind the tensor ops. Every kernel exists twice:
// kernels::ref holds the plain serial loops that serve as the reference, and
// kernels::par holds the OpenMP versions. The two must agree bit-for-bit:
// parallel variants split work across independent output elements and keep
// each element's accumulation order identical to the serial code, so results
// do not depend on thread count. The public functions dispatch on backend().

namespace sdiff::kernels {

enum class Backend { serial, openmp };

Backend& backend();        // process-wide switch, defaults to openmp when built with it
bool openmp_available();
int thread_count();

#define SDIFF_KERNEL_LIST(X)                                                                  \
    /* C[m,n] = A[m,k] B[k,n] */                                                              \
    X(matmul_nn, (const double* a, const double* b, double* c, int m, int k, int n),          \
      (a, b, c, m, k, n))                                                                     \
    /* C[m,n] = A[m,k] B[n,k]^T */                                                            \
    X(matmul_nt, (const double* a, const double* b, double* c, int m, int k, int n),          \
      (a, b, c, m, k, n))                                                                     \
    /* C[k,n] = A[m,k]^T B[m,n] */                                                            \
    X(matmul_tn, (const double* a, const double* b, double* c, int m, int k, int n),          \
      (a, b, c, m, k, n))                                                                     \
    X(softmax_rows, (const double* x, double* y, int rows, int cols), (x, y, rows, cols))     \
    X(softmax_rows_bwd, (const double* y, const double* dy, double* dx, int rows, int cols),  \
      (y, dy, dx, rows, cols))                                                                \
    /* per-row normalize over the last axis; saves xhat and inv stddev */                     \
    X(layer_norm_rows,                                                                        \
      (const double* x, const double* gain, const double* bias, double* y, double* xhat,      \
       double* inv_std, int rows, int cols, double eps),                                      \
      (x, gain, bias, y, xhat, inv_std, rows, cols, eps))                                     \
    X(layer_norm_rows_bwd,                                                                    \
      (const double* dy, const double* xhat, const double* inv_std, const double* gain,       \
       double* dx, double* dgain, double* dbias, int rows, int cols),                         \
      (dy, xhat, inv_std, gain, dx, dgain, dbias, rows, cols))                                \
    /* 1-d convolution along the channel axis, zero padded, window odd.                       \
       w has chans*window entries when per_channel, else window entries. */                   \
    X(conv1d_channels,                                                                        \
      (const double* x, const double* w, double* y, int sites, int chans, int window,         \
       bool per_channel),                                                                     \
      (x, w, y, sites, chans, window, per_channel))                                           \
    X(conv1d_channels_bwd_x,                                                                  \
      (const double* dy, const double* w, double* dx, int sites, int chans, int window,       \
       bool per_channel),                                                                     \
      (dy, w, dx, sites, chans, window, per_channel))                                         \
    X(conv1d_channels_bwd_w,                                                                  \
      (const double* dy, const double* x, double* dw, int sites, int chans, int window,       \
       bool per_channel),                                                                     \
      (dy, x, dw, sites, chans, window, per_channel))                                         \
    /* depthwise 3-d convolution over (frames, height, width), zero padded */                 \
    X(conv3d_depthwise,                                                                       \
      (const double* x, const double* k, double* y, int f, int h, int w, int c, int kf,       \
       int kh, int kw),                                                                       \
      (x, k, y, f, h, w, c, kf, kh, kw))                                                      \
    X(conv3d_depthwise_bwd_x,                                                                 \
      (const double* dy, const double* k, double* dx, int f, int h, int w, int c, int kf,     \
       int kh, int kw),                                                                       \
      (dy, k, dx, f, h, w, c, kf, kh, kw))                                                    \
    X(conv3d_depthwise_bwd_w,                                                                 \
      (const double* dy, const double* x, double* dk, int f, int h, int w, int c, int kf,     \
       int kh, int kw),                                                                       \
      (dy, x, dk, f, h, w, c, kf, kh, kw))                                                    \
    /* 2-d mean pooling / nearest upsampling by integer factor g, layout [b,h,w,c] */         \
    X(avg_pool2d, (const double* x, double* y, int b, int h, int w, int c, int g),            \
      (x, y, b, h, w, c, g))                                                                  \
    X(avg_pool2d_bwd, (const double* dy, double* dx, int b, int h, int w, int c, int g),      \
      (dy, dx, b, h, w, c, g))                                                                \
    X(upsample2d_nearest, (const double* x, double* y, int b, int h, int w, int c, int g),    \
      (x, y, b, h, w, c, g))                                                                  \
    X(upsample2d_nearest_bwd, (const double* dy, double* dx, int b, int h, int w, int c,      \
       int g),                                                                                \
      (dy, dx, b, h, w, c, g))                                                                \
    X(ew_add, (const double* a, const double* b, double* y, size_t n), (a, b, y, n))          \
    X(ew_sub, (const double* a, const double* b, double* y, size_t n), (a, b, y, n))          \
    X(ew_mul, (const double* a, const double* b, double* y, size_t n), (a, b, y, n))          \
    X(ew_tanh, (const double* a, double* y, size_t n), (a, y, n))                             \
    X(ew_scale, (const double* a, double s, double* y, size_t n), (a, s, y, n))

#define SDIFF_DECLARE_KERNEL(name, params, args) void name params;

namespace ref {
SDIFF_KERNEL_LIST(SDIFF_DECLARE_KERNEL)
}
namespace par {
SDIFF_KERNEL_LIST(SDIFF_DECLARE_KERNEL)
}
SDIFF_KERNEL_LIST(SDIFF_DECLARE_KERNEL)

#undef SDIFF_DECLARE_KERNEL

}  // namespace sdiff::kernels
