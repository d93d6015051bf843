#pragma once

#include <vector>

#include "core/tape.hpp"
#include "core/tensor.hpp"

namespace agcu {

enum class Act { Relu, Sigmoid };
enum class BnMode { Train, Eval };

/// Running statistics of one batch-norm layer. Updated in train mode, read in
/// eval mode; not part of the differentiable graph.
template <typename T>
struct BatchNormState {
    Tensor<T> mean;
    Tensor<T> var;

    explicit BatchNormState(int64_t channels = 1)
        : mean(Shape{channels}), var(Tensor<T>::full(Shape{channels}, T(1))) {}
};

// Convolution is cross-correlation (no kernel flip). Output spatial side is
// floor((H + 2*padding - kh) / stride) + 1. Pass an invalid Var for no bias.
template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var bias, int stride, int padding);

// Bilinear interpolation, align-corners=false. Serves both up- and
// down-sampling.
template <typename T>
Var resample_bilinear(Tape<T>& t, Var x, int64_t out_h, int64_t out_w);

// Window maxima; gradient routes to the first (row-major) maximum of each
// window.
template <typename T>
Var max_pool2d(Tape<T>& t, Var x, int k, int stride);

// [B,C,H,W] -> [B,C] spatial mean.
template <typename T>
Var global_avg_pool(Tape<T>& t, Var x);

template <typename T>
Var activation(Tape<T>& t, Var x, Act kind);
template <typename T>
Var relu(Tape<T>& t, Var x);
template <typename T>
Var sigmoid(Tape<T>& t, Var x);

// Max-subtracted softmax along one axis.
template <typename T>
Var softmax_axis(Tape<T>& t, Var x, int axis);

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, BatchNormState<T>& state, BnMode mode,
               T momentum, T eps);

// x [B,Cin] * w [Cout,Cin]^T + b.
template <typename T>
Var fully_connected(Tape<T>& t, Var x, Var w, Var b);

template <typename T>
Var concat_channels(Tape<T>& t, const std::vector<Var>& parts);

template <typename T>
Var add(Tape<T>& t, Var a, Var b);
template <typename T>
Var mul(Tape<T>& t, Var a, Var b);
template <typename T>
Var divide(Tape<T>& t, Var a, Var b);

// scale * x + shift, elementwise.
template <typename T>
Var affine(Tape<T>& t, Var x, T scale, T shift);

template <typename T>
Var sum_all(Tape<T>& t, Var x);
template <typename T>
Var mean_all(Tape<T>& t, Var x);

template <typename T>
Var reshape(Tape<T>& t, Var x, Shape shape);

template <typename T>
Var slice_axis(Tape<T>& t, Var x, int axis, int64_t start, int64_t len);

// x [B,C,H,W] scaled per channel by s [B,C].
template <typename T>
Var mul_channel_scale(Tape<T>& t, Var x, Var s);

// x [B,C,H,W] scaled across channels by g [B,1,H,W].
template <typename T>
Var mul_gate(Tape<T>& t, Var x, Var g);

namespace detail {

// Row-major accumulating matrix products.
template <typename T>
void gemm_acc(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c);  // C += A B
template <typename T>
void gemm_abt(int64_t m, int64_t n, int64_t p, const T* a, const T* b, T* c);  // C += A B^T
template <typename T>
void gemm_atb(int64_t m, int64_t n, int64_t p, const T* a, const T* b, T* c);  // C += A^T B

template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t out_h, int64_t out_w, T* cols);
template <typename T>
void col2im_acc(const T* cols, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t out_h, int64_t out_w, T* x);

}  // namespace detail

}  // namespace agcu
