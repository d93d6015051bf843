#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>

namespace agcu {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

template <typename T>
void require_rank4(const Tensor<T>& x, const char* op) {
    require(x.rank() == 4, std::string(op) + ": expected a rank-4 tensor, got " + shape_str(x.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                                        shape_str(b.shape()) + " differ");
}

// Bilinear taps for one output axis, align-corners=false. Out-of-range taps
// clamp to the border, so identity sizes copy exactly.
template <typename T>
struct AxisTaps {
    std::vector<int64_t> lo, hi;
    std::vector<T> w_lo;
};

template <typename T>
AxisTaps<T> bilinear_taps(int64_t in, int64_t out) {
    AxisTaps<T> t;
    t.lo.resize(static_cast<size_t>(out));
    t.hi.resize(static_cast<size_t>(out));
    t.w_lo.resize(static_cast<size_t>(out));
    double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        int64_t i0 = static_cast<int64_t>(std::floor(src));
        double frac = src - static_cast<double>(i0);
        t.lo[static_cast<size_t>(o)] = std::clamp<int64_t>(i0, 0, in - 1);
        t.hi[static_cast<size_t>(o)] = std::clamp<int64_t>(i0 + 1, 0, in - 1);
        t.w_lo[static_cast<size_t>(o)] = static_cast<T>(1.0 - frac);
    }
    return t;
}

}  // namespace

namespace detail {

template <typename T>
void gemm_acc(int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c) {
    for (int64_t i = 0; i < m; ++i) {
        T* ci = c + i * n;
        const T* ai = a + i * k;
        for (int64_t l = 0; l < k; ++l) {
            T av = ai[l];
            const T* bl = b + l * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

template <typename T>
void gemm_abt(int64_t m, int64_t n, int64_t p, const T* a, const T* b, T* c) {
    for (int64_t i = 0; i < m; ++i) {
        const T* ai = a + i * p;
        T* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const T* bj = b + j * p;
            T acc = 0;
            for (int64_t l = 0; l < p; ++l) acc += ai[l] * bj[l];
            ci[j] += acc;
        }
    }
}

template <typename T>
void gemm_atb(int64_t m, int64_t n, int64_t p, const T* a, const T* b, T* c) {
    for (int64_t l = 0; l < p; ++l) {
        const T* al = a + l * m;
        const T* bl = b + l * n;
        for (int64_t i = 0; i < m; ++i) {
            T av = al[i];
            T* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t out_h, int64_t out_w, T* cols) {
    int64_t row = 0;
    for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = x + ch * h * w;
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j, ++row) {
                T* dst = cols + row * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    int64_t ih = oh * stride + i - pad;
                    T* drow = dst + oh * out_w;
                    if (ih < 0 || ih >= h) {
                        std::fill(drow, drow + out_w, T(0));
                        continue;
                    }
                    const T* srow = plane + ih * w;
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        int64_t iw = ow * stride + j - pad;
                        drow[ow] = (iw >= 0 && iw < w) ? srow[iw] : T(0);
                    }
                }
            }
    }
}

template <typename T>
void col2im_acc(const T* cols, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t out_h, int64_t out_w, T* x) {
    int64_t row = 0;
    for (int64_t ch = 0; ch < c; ++ch) {
        T* plane = x + ch * h * w;
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j, ++row) {
                const T* src = cols + row * out_h * out_w;
                for (int64_t oh = 0; oh < out_h; ++oh) {
                    int64_t ih = oh * stride + i - pad;
                    if (ih < 0 || ih >= h) continue;
                    T* drow = plane + ih * w;
                    const T* srow = src + oh * out_w;
                    for (int64_t ow = 0; ow < out_w; ++ow) {
                        int64_t iw = ow * stride + j - pad;
                        if (iw >= 0 && iw < w) drow[iw] += srow[ow];
                    }
                }
            }
    }
}

}  // namespace detail

template <typename T>
Var conv2d(Tape<T>& t, Var x, Var w, Var bias, int stride, int padding) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    require_rank4(xv, "conv2d");
    require_rank4(wv, "conv2d");
    require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
    require(padding >= 0, "conv2d: padding must be >= 0, got " + std::to_string(padding));
    int64_t B = xv.dim(0), Cin = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    int64_t Cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    require(wv.dim(1) == Cin, "conv2d: kernel channels " + std::to_string(wv.dim(1)) +
                                  " do not match input channels " + std::to_string(Cin));
    int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    int64_t Wo = (W + 2 * padding - kw) / stride + 1;
    require(H + 2 * padding >= kh && W + 2 * padding >= kw,
            "conv2d: kernel " + shape_str(wv.shape()) + " exceeds padded input " + shape_str(xv.shape()));
    if (bias.valid()) {
        const Tensor<T>& bv = t.value(bias);
        require(bv.shape() == Shape{Cout}, "conv2d: bias shape " + shape_str(bv.shape()) +
                                               " does not match output channels " + std::to_string(Cout));
    }

    int64_t K = Cin * kh * kw;
    int64_t P = Ho * Wo;
    bool pointwise = (kh == 1 && kw == 1 && stride == 1 && padding == 0);

    Tensor<T> y(Shape{B, Cout, Ho, Wo});
    auto cols = std::make_shared<std::vector<T>>();
    if (!pointwise) cols->resize(static_cast<size_t>(B * K * P));
    for (int64_t b = 0; b < B; ++b) {
        const T* xb = xv.data() + b * Cin * H * W;
        const T* cb = xb;
        if (!pointwise) {
            T* dst = cols->data() + b * K * P;
            detail::im2col(xb, Cin, H, W, kh, kw, stride, padding, Ho, Wo, dst);
            cb = dst;
        }
        detail::gemm_acc(Cout, P, K, wv.data(), cb, y.data() + b * Cout * P);
    }
    if (bias.valid()) {
        const Tensor<T>& bv = t.value(bias);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t co = 0; co < Cout; ++co) {
                T* row = y.data() + (b * Cout + co) * P;
                T add = bv[co];
                for (int64_t p = 0; p < P; ++p) row[p] += add;
            }
    }

    std::vector<int32_t> ins{x.id, w.id};
    if (bias.valid()) ins.push_back(bias.id);
    return t.emplace(
        std::move(y), std::move(ins),
        [x, w, bias, stride, padding, B, Cin, H, W, Cout, kh, kw, Ho, Wo, K, P, pointwise,
         cols](Tape<T>& tt, int32_t self) {
            const std::vector<T>& dy = tt.grad_buf(self);
            bool need_dx = tt.wants_grad(x.id);
            bool need_dw = tt.wants_grad(w.id);
            const Tensor<T>& wv = tt.value(w);
            const Tensor<T>& xv = tt.value(x);
            std::vector<T> dcols;
            if (need_dx && !pointwise) dcols.resize(static_cast<size_t>(K * P));
            for (int64_t b = 0; b < B; ++b) {
                const T* dyb = dy.data() + b * Cout * P;
                const T* cb = pointwise ? xv.data() + b * Cin * H * W : cols->data() + b * K * P;
                if (need_dw) detail::gemm_abt(Cout, K, P, dyb, cb, tt.grad_buf(w.id).data());
                if (!need_dx) continue;
                if (pointwise) {
                    detail::gemm_atb(Cin, P, Cout, wv.data(), dyb,
                                     tt.grad_buf(x.id).data() + b * Cin * H * W);
                } else {
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    detail::gemm_atb(K, P, Cout, wv.data(), dyb, dcols.data());
                    detail::col2im_acc(dcols.data(), Cin, H, W, kh, kw, stride, padding, Ho, Wo,
                                       tt.grad_buf(x.id).data() + b * Cin * H * W);
                }
            }
            if (bias.valid() && tt.wants_grad(bias.id)) {
                std::vector<T>& db = tt.grad_buf(bias.id);
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t co = 0; co < Cout; ++co) {
                        const T* row = dy.data() + (b * Cout + co) * P;
                        T acc = 0;
                        for (int64_t p = 0; p < P; ++p) acc += row[p];
                        db[static_cast<size_t>(co)] += acc;
                    }
            }
        });
}

template <typename T>
Var resample_bilinear(Tape<T>& t, Var x, int64_t out_h, int64_t out_w) {
    const Tensor<T>& xv = t.value(x);
    require_rank4(xv, "resample_bilinear");
    require(out_h >= 1 && out_w >= 1, "resample_bilinear: output size " + std::to_string(out_h) + "x" +
                                          std::to_string(out_w) + " must be positive");
    int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    auto th = std::make_shared<AxisTaps<T>>(bilinear_taps<T>(H, out_h));
    auto tw = std::make_shared<AxisTaps<T>>(bilinear_taps<T>(W, out_w));

    Tensor<T> y(Shape{B, C, out_h, out_w});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = xv.data() + bc * H * W;
        T* dst = y.data() + bc * out_h * out_w;
        for (int64_t oh = 0; oh < out_h; ++oh) {
            const T* r0 = src + th->lo[static_cast<size_t>(oh)] * W;
            const T* r1 = src + th->hi[static_cast<size_t>(oh)] * W;
            T wh = th->w_lo[static_cast<size_t>(oh)];
            for (int64_t ow = 0; ow < out_w; ++ow) {
                int64_t c0 = tw->lo[static_cast<size_t>(ow)], c1 = tw->hi[static_cast<size_t>(ow)];
                T ww = tw->w_lo[static_cast<size_t>(ow)];
                T top = ww * r0[c0] + (T(1) - ww) * r0[c1];
                T bot = ww * r1[c0] + (T(1) - ww) * r1[c1];
                dst[oh * out_w + ow] = wh * top + (T(1) - wh) * bot;
            }
        }
    }

    return t.emplace(std::move(y), {x.id},
                     [x, B, C, H, W, out_h, out_w, th, tw](Tape<T>& tt, int32_t self) {
                         if (!tt.wants_grad(x.id)) return;
                         const std::vector<T>& dy = tt.grad_buf(self);
                         std::vector<T>& dx = tt.grad_buf(x.id);
                         for (int64_t bc = 0; bc < B * C; ++bc) {
                             T* dsrc = dx.data() + bc * H * W;
                             const T* ddst = dy.data() + bc * out_h * out_w;
                             for (int64_t oh = 0; oh < out_h; ++oh) {
                                 int64_t h0 = th->lo[static_cast<size_t>(oh)];
                                 int64_t h1 = th->hi[static_cast<size_t>(oh)];
                                 T wh = th->w_lo[static_cast<size_t>(oh)];
                                 for (int64_t ow = 0; ow < out_w; ++ow) {
                                     int64_t c0 = tw->lo[static_cast<size_t>(ow)];
                                     int64_t c1 = tw->hi[static_cast<size_t>(ow)];
                                     T ww = tw->w_lo[static_cast<size_t>(ow)];
                                     T g = ddst[oh * out_w + ow];
                                     dsrc[h0 * W + c0] += g * wh * ww;
                                     dsrc[h0 * W + c1] += g * wh * (T(1) - ww);
                                     dsrc[h1 * W + c0] += g * (T(1) - wh) * ww;
                                     dsrc[h1 * W + c1] += g * (T(1) - wh) * (T(1) - ww);
                                 }
                             }
                         }
                     });
}

template <typename T>
Var max_pool2d(Tape<T>& t, Var x, int k, int stride) {
    const Tensor<T>& xv = t.value(x);
    require_rank4(xv, "max_pool2d");
    require(k >= 1 && stride >= 1, "max_pool2d: window and stride must be >= 1");
    int64_t B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    require(H >= k && W >= k, "max_pool2d: window " + std::to_string(k) + " exceeds input " +
                                  shape_str(xv.shape()));
    int64_t Ho = (H - k) / stride + 1;
    int64_t Wo = (W - k) / stride + 1;

    Tensor<T> y(Shape{B, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Ho * Wo));
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = xv.data() + bc * H * W;
        T* dst = y.data() + bc * Ho * Wo;
        int64_t* am = argmax->data() + bc * Ho * Wo;
        for (int64_t oh = 0; oh < Ho; ++oh)
            for (int64_t ow = 0; ow < Wo; ++ow) {
                int64_t best = (oh * stride) * W + ow * stride;
                T bv = src[best];
                for (int64_t i = 0; i < k; ++i)
                    for (int64_t j = 0; j < k; ++j) {
                        int64_t idx = (oh * stride + i) * W + ow * stride + j;
                        if (src[idx] > bv) {
                            bv = src[idx];
                            best = idx;
                        }
                    }
                dst[oh * Wo + ow] = bv;
                am[oh * Wo + ow] = best;
            }
    }

    return t.emplace(std::move(y), {x.id}, [x, B, C, H, W, Ho, Wo, argmax](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& dx = tt.grad_buf(x.id);
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const T* g = dy.data() + bc * Ho * Wo;
            const int64_t* am = argmax->data() + bc * Ho * Wo;
            T* d = dx.data() + bc * H * W;
            for (int64_t p = 0; p < Ho * Wo; ++p) d[am[p]] += g[p];
        }
    });
}

template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    require_rank4(xv, "global_avg_pool");
    int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> y(Shape{B, C});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = xv.data() + bc * HW;
        T acc = 0;
        for (int64_t p = 0; p < HW; ++p) acc += src[p];
        y[bc] = acc / static_cast<T>(HW);
    }
    return t.emplace(std::move(y), {x.id}, [x, B, C, HW](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& dx = tt.grad_buf(x.id);
        for (int64_t bc = 0; bc < B * C; ++bc) {
            T g = dy[static_cast<size_t>(bc)] / static_cast<T>(HW);
            T* d = dx.data() + bc * HW;
            for (int64_t p = 0; p < HW; ++p) d[p] += g;
        }
    });
}

template <typename T>
Var activation(Tape<T>& t, Var x, Act kind) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> y(xv.shape());
    const T* src = xv.data();
    T* dst = y.data();
    int64_t n = xv.numel();
    if (kind == Act::Relu) {
        for (int64_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    } else {
        for (int64_t i = 0; i < n; ++i) {
            T v = src[i];
            if (v >= T(0)) {
                dst[i] = T(1) / (T(1) + std::exp(-v));
            } else {
                T e = std::exp(v);
                dst[i] = e / (T(1) + e);
            }
        }
    }
    return t.emplace(std::move(y), {x.id}, [x, kind, n](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& dx = tt.grad_buf(x.id);
        if (kind == Act::Relu) {
            const T* xs = tt.value(x).data();
            for (int64_t i = 0; i < n; ++i)
                if (xs[i] > T(0)) dx[static_cast<size_t>(i)] += dy[static_cast<size_t>(i)];
        } else {
            const T* ys = tt.value(Var{self}).data();
            for (int64_t i = 0; i < n; ++i) {
                T s = ys[i];
                dx[static_cast<size_t>(i)] += dy[static_cast<size_t>(i)] * s * (T(1) - s);
            }
        }
    });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
    return activation(t, x, Act::Relu);
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
    return activation(t, x, Act::Sigmoid);
}

template <typename T>
Var softmax_axis(Tape<T>& t, Var x, int axis) {
    const Tensor<T>& xv = t.value(x);
    require(axis >= 0 && axis < static_cast<int>(xv.rank()),
            "softmax_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape()));
    int64_t n = xv.dim(static_cast<size_t>(axis));
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xv.dim(static_cast<size_t>(i));
    for (size_t i = static_cast<size_t>(axis) + 1; i < xv.rank(); ++i) inner *= xv.dim(i);

    Tensor<T> y(xv.shape());
    const T* src = xv.data();
    T* dst = y.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * n * inner + in;
            T mx = src[base];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, src[base + j * inner]);
            T sum = 0;
            for (int64_t j = 0; j < n; ++j) {
                T e = std::exp(src[base + j * inner] - mx);
                dst[base + j * inner] = e;
                sum += e;
            }
            for (int64_t j = 0; j < n; ++j) dst[base + j * inner] /= sum;
        }

    return t.emplace(std::move(y), {x.id}, [x, n, outer, inner](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& dx = tt.grad_buf(x.id);
        const T* ys = tt.value(Var{self}).data();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t in = 0; in < inner; ++in) {
                int64_t base = o * n * inner + in;
                T dot = 0;
                for (int64_t j = 0; j < n; ++j)
                    dot += dy[static_cast<size_t>(base + j * inner)] * ys[base + j * inner];
                for (int64_t j = 0; j < n; ++j) {
                    int64_t idx = base + j * inner;
                    dx[static_cast<size_t>(idx)] += ys[idx] * (dy[static_cast<size_t>(idx)] - dot);
                }
            }
    });
}

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, BatchNormState<T>& state, BnMode mode,
               T momentum, T eps) {
    const Tensor<T>& xv = t.value(x);
    require_rank4(xv, "batch_norm");
    int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    require(t.value(gamma).shape() == Shape{C} && t.value(beta).shape() == Shape{C},
            "batch_norm: scale/shift must both have shape [" + std::to_string(C) + "]");
    require(state.mean.shape() == Shape{C} && state.var.shape() == Shape{C},
            "batch_norm: running stats do not match " + std::to_string(C) + " channels");
    int64_t N = B * HW;
    if (mode == BnMode::Train)
        require(N >= 2, "batch_norm: train mode needs at least 2 values per channel, got " +
                            std::to_string(N));

    const Tensor<T>& gv = t.value(gamma);
    const Tensor<T>& bv = t.value(beta);
    Tensor<T> y(xv.shape());
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(C));
    auto center = std::make_shared<std::vector<T>>(static_cast<size_t>(C));

    if (mode == BnMode::Train) {
        auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(xv.numel()));
        for (int64_t c = 0; c < C; ++c) {
            T mean = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xv.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) mean += p[i];
            }
            mean /= static_cast<T>(N);
            T var = 0;
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xv.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    T d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<T>(N);
            T istd = T(1) / std::sqrt(var + eps);
            (*inv_std)[static_cast<size_t>(c)] = istd;
            T g = gv[c], sh = bv[c];
            for (int64_t b = 0; b < B; ++b) {
                const T* p = xv.data() + (b * C + c) * HW;
                T* h = xhat->data() + (b * C + c) * HW;
                T* out = y.data() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    h[i] = (p[i] - mean) * istd;
                    out[i] = g * h[i] + sh;
                }
            }
            state.mean[c] = (T(1) - momentum) * state.mean[c] + momentum * mean;
            T unbiased = var * static_cast<T>(N) / static_cast<T>(N - 1);
            state.var[c] = (T(1) - momentum) * state.var[c] + momentum * unbiased;
        }
        return t.emplace(std::move(y), {x.id, gamma.id, beta.id},
                         [x, gamma, beta, B, C, HW, N, xhat, inv_std](Tape<T>& tt, int32_t self) {
                             const std::vector<T>& dy = tt.grad_buf(self);
                             const T* gs = tt.value(gamma).data();
                             std::vector<T>& dg = tt.grad_buf(gamma.id);
                             std::vector<T>& db = tt.grad_buf(beta.id);
                             bool need_dx = tt.wants_grad(x.id);
                             for (int64_t c = 0; c < C; ++c) {
                                 T sum_dy = 0, sum_dyh = 0;
                                 for (int64_t b = 0; b < B; ++b) {
                                     const T* g = dy.data() + (b * C + c) * HW;
                                     const T* h = xhat->data() + (b * C + c) * HW;
                                     for (int64_t i = 0; i < HW; ++i) {
                                         sum_dy += g[i];
                                         sum_dyh += g[i] * h[i];
                                     }
                                 }
                                 dg[static_cast<size_t>(c)] += sum_dyh;
                                 db[static_cast<size_t>(c)] += sum_dy;
                                 if (!need_dx) continue;
                                 T istd = (*inv_std)[static_cast<size_t>(c)];
                                 T k = gs[c] * istd;
                                 T mean_dy = sum_dy / static_cast<T>(N);
                                 T mean_dyh = sum_dyh / static_cast<T>(N);
                                 std::vector<T>& dx = tt.grad_buf(x.id);
                                 for (int64_t b = 0; b < B; ++b) {
                                     const T* g = dy.data() + (b * C + c) * HW;
                                     const T* h = xhat->data() + (b * C + c) * HW;
                                     T* d = dx.data() + (b * C + c) * HW;
                                     for (int64_t i = 0; i < HW; ++i)
                                         d[i] += k * (g[i] - mean_dy - h[i] * mean_dyh);
                                 }
                             }
                         });
    }

    for (int64_t c = 0; c < C; ++c) {
        (*inv_std)[static_cast<size_t>(c)] = T(1) / std::sqrt(state.var[c] + eps);
        (*center)[static_cast<size_t>(c)] = state.mean[c];
    }
    for (int64_t c = 0; c < C; ++c) {
        T istd = (*inv_std)[static_cast<size_t>(c)];
        T mu = (*center)[static_cast<size_t>(c)];
        T g = gv[c], sh = bv[c];
        for (int64_t b = 0; b < B; ++b) {
            const T* p = xv.data() + (b * C + c) * HW;
            T* out = y.data() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) out[i] = g * (p[i] - mu) * istd + sh;
        }
    }
    return t.emplace(std::move(y), {x.id, gamma.id, beta.id},
                     [x, gamma, beta, B, C, HW, inv_std, center](Tape<T>& tt, int32_t self) {
                         const std::vector<T>& dy = tt.grad_buf(self);
                         const T* gs = tt.value(gamma).data();
                         const T* xs = tt.value(x).data();
                         std::vector<T>& dg = tt.grad_buf(gamma.id);
                         std::vector<T>& db = tt.grad_buf(beta.id);
                         bool need_dx = tt.wants_grad(x.id);
                         for (int64_t c = 0; c < C; ++c) {
                             T istd = (*inv_std)[static_cast<size_t>(c)];
                             T mu = (*center)[static_cast<size_t>(c)];
                             T k = gs[c] * istd;
                             for (int64_t b = 0; b < B; ++b) {
                                 int64_t off = (b * C + c) * HW;
                                 const T* g = dy.data() + off;
                                 for (int64_t i = 0; i < HW; ++i) {
                                     dg[static_cast<size_t>(c)] += g[i] * (xs[off + i] - mu) * istd;
                                     db[static_cast<size_t>(c)] += g[i];
                                 }
                                 if (!need_dx) continue;
                                 T* d = tt.grad_buf(x.id).data() + off;
                                 for (int64_t i = 0; i < HW; ++i) d[i] += k * g[i];
                             }
                         }
                     });
}

template <typename T>
Var fully_connected(Tape<T>& t, Var x, Var w, Var b) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& wv = t.value(w);
    const Tensor<T>& bv = t.value(b);
    require(xv.rank() == 2 && wv.rank() == 2,
            "fully_connected: expected rank-2 input and weight, got " + shape_str(xv.shape()) + ", " +
                shape_str(wv.shape()));
    int64_t B = xv.dim(0), Cin = xv.dim(1), Cout = wv.dim(0);
    require(wv.dim(1) == Cin, "fully_connected: weight " + shape_str(wv.shape()) +
                                  " does not accept input " + shape_str(xv.shape()));
    require(bv.shape() == Shape{Cout}, "fully_connected: bias shape " + shape_str(bv.shape()) +
                                           " does not match " + std::to_string(Cout) + " outputs");

    Tensor<T> y(Shape{B, Cout});
    detail::gemm_abt(B, Cout, Cin, xv.data(), wv.data(), y.data());
    for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < Cout; ++j) y.at2(i, j) += bv[j];

    return t.emplace(std::move(y), {x.id, w.id, b.id}, [x, w, b, B, Cin, Cout](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        if (tt.wants_grad(x.id))
            detail::gemm_acc(B, Cin, Cout, dy.data(), tt.value(w).data(), tt.grad_buf(x.id).data());
        if (tt.wants_grad(w.id))
            detail::gemm_atb(Cout, Cin, B, dy.data(), tt.value(x).data(), tt.grad_buf(w.id).data());
        if (tt.wants_grad(b.id)) {
            std::vector<T>& db = tt.grad_buf(b.id);
            for (int64_t i = 0; i < B; ++i)
                for (int64_t j = 0; j < Cout; ++j) db[static_cast<size_t>(j)] += dy[static_cast<size_t>(i * Cout + j)];
        }
    });
}

template <typename T>
Var concat_channels(Tape<T>& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_channels: no inputs");
    const Tensor<T>& first = t.value(parts[0]);
    require_rank4(first, "concat_channels");
    int64_t B = first.dim(0), H = first.dim(2), W = first.dim(3);
    int64_t Cout = 0;
    std::vector<int64_t> widths;
    for (Var p : parts) {
        const Tensor<T>& pv = t.value(p);
        require_rank4(pv, "concat_channels");
        require(pv.dim(0) == B && pv.dim(2) == H && pv.dim(3) == W,
                "concat_channels: input " + shape_str(pv.shape()) + " does not align with " +
                    shape_str(first.shape()));
        widths.push_back(pv.dim(1));
        Cout += pv.dim(1);
    }

    Tensor<T> y(Shape{B, Cout, H, W});
    int64_t HW = H * W;
    for (int64_t b = 0; b < B; ++b) {
        int64_t coff = 0;
        for (size_t p = 0; p < parts.size(); ++p) {
            const Tensor<T>& pv = t.value(parts[p]);
            std::memcpy(y.data() + (b * Cout + coff) * HW, pv.data() + b * widths[p] * HW,
                        static_cast<size_t>(widths[p] * HW) * sizeof(T));
            coff += widths[p];
        }
    }

    std::vector<int32_t> ins;
    for (Var p : parts) ins.push_back(p.id);
    std::vector<Var> held(parts);
    return t.emplace(std::move(y), std::move(ins),
                     [held, widths, B, Cout, HW](Tape<T>& tt, int32_t self) {
                         const std::vector<T>& dy = tt.grad_buf(self);
                         for (int64_t b = 0; b < B; ++b) {
                             int64_t coff = 0;
                             for (size_t p = 0; p < held.size(); ++p) {
                                 if (tt.wants_grad(held[p].id)) {
                                     std::vector<T>& dp = tt.grad_buf(held[p].id);
                                     const T* src = dy.data() + (b * Cout + coff) * HW;
                                     T* dst = dp.data() + b * widths[p] * HW;
                                     for (int64_t i = 0; i < widths[p] * HW; ++i) dst[i] += src[i];
                                 }
                                 coff += widths[p];
                             }
                         }
                     });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_same_shape(av, bv, "add");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] + bv[i];
    return t.emplace(std::move(y), {a.id, b.id}, [a, b](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        for (Var v : {a, b}) {
            if (!tt.wants_grad(v.id)) continue;
            std::vector<T>& d = tt.grad_buf(v.id);
            for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
        }
    });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_same_shape(av, bv, "mul");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] * bv[i];
    return t.emplace(std::move(y), {a.id, b.id}, [a, b](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        if (tt.wants_grad(a.id)) {
            const T* bs = tt.value(b).data();
            std::vector<T>& d = tt.grad_buf(a.id);
            for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * bs[i];
        }
        if (tt.wants_grad(b.id)) {
            const T* as = tt.value(a).data();
            std::vector<T>& d = tt.grad_buf(b.id);
            for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] * as[i];
        }
    });
}

template <typename T>
Var divide(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    require_same_shape(av, bv, "divide");
    Tensor<T> y(av.shape());
    for (int64_t i = 0; i < av.numel(); ++i) y[i] = av[i] / bv[i];
    return t.emplace(std::move(y), {a.id, b.id}, [a, b](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        const T* as = tt.value(a).data();
        const T* bs = tt.value(b).data();
        if (tt.wants_grad(a.id)) {
            std::vector<T>& d = tt.grad_buf(a.id);
            for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i] / bs[i];
        }
        if (tt.wants_grad(b.id)) {
            std::vector<T>& d = tt.grad_buf(b.id);
            for (size_t i = 0; i < dy.size(); ++i) d[i] -= dy[i] * as[i] / (bs[i] * bs[i]);
        }
    });
}

template <typename T>
Var affine(Tape<T>& t, Var x, T scale, T shift) {
    const Tensor<T>& xv = t.value(x);
    Tensor<T> y(xv.shape());
    for (int64_t i = 0; i < xv.numel(); ++i) y[i] = scale * xv[i] + shift;
    return t.emplace(std::move(y), {x.id}, [x, scale](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& d = tt.grad_buf(x.id);
        for (size_t i = 0; i < dy.size(); ++i) d[i] += scale * dy[i];
    });
}

template <typename T>
Var sum_all(Tape<T>& t, Var x) {
    const Tensor<T>& xv = t.value(x);
    T acc = 0;
    for (int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
    return t.emplace(Tensor<T>(Shape{1}, {acc}), {x.id}, [x](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        T g = tt.grad_buf(self)[0];
        std::vector<T>& d = tt.grad_buf(x.id);
        for (T& v : d) v += g;
    });
}

template <typename T>
Var mean_all(Tape<T>& t, Var x) {
    int64_t n = t.value(x).numel();
    return affine(t, sum_all(t, x), T(1) / static_cast<T>(n), T(0));
}

template <typename T>
Var reshape(Tape<T>& t, Var x, Shape shape) {
    const Tensor<T>& xv = t.value(x);
    require(shape_numel(shape) == xv.numel(), "reshape: " + shape_str(xv.shape()) +
                                                  " cannot take shape " + shape_str(shape));
    return t.emplace(Tensor<T>(std::move(shape), xv.vec()), {x.id}, [x](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& d = tt.grad_buf(x.id);
        for (size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    });
}

template <typename T>
Var slice_axis(Tape<T>& t, Var x, int axis, int64_t start, int64_t len) {
    const Tensor<T>& xv = t.value(x);
    require(axis >= 0 && axis < static_cast<int>(xv.rank()),
            "slice_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape()));
    int64_t dim = xv.dim(static_cast<size_t>(axis));
    require(len >= 1 && start >= 0 && start + len <= dim,
            "slice_axis: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                ") outside extent " + std::to_string(dim));
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xv.dim(static_cast<size_t>(i));
    for (size_t i = static_cast<size_t>(axis) + 1; i < xv.rank(); ++i) inner *= xv.dim(i);

    Shape oshape = xv.shape();
    oshape[static_cast<size_t>(axis)] = len;
    Tensor<T> y(oshape);
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(y.data() + o * len * inner, xv.data() + (o * dim + start) * inner,
                    static_cast<size_t>(len * inner) * sizeof(T));

    return t.emplace(std::move(y), {x.id}, [x, outer, inner, dim, start, len](Tape<T>& tt, int32_t self) {
        if (!tt.wants_grad(x.id)) return;
        const std::vector<T>& dy = tt.grad_buf(self);
        std::vector<T>& d = tt.grad_buf(x.id);
        for (int64_t o = 0; o < outer; ++o) {
            const T* src = dy.data() + o * len * inner;
            T* dst = d.data() + (o * dim + start) * inner;
            for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
    });
}

template <typename T>
Var mul_channel_scale(Tape<T>& t, Var x, Var s) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& sv = t.value(s);
    require_rank4(xv, "mul_channel_scale");
    require(sv.shape() == Shape{xv.dim(0), xv.dim(1)},
            "mul_channel_scale: scale " + shape_str(sv.shape()) + " does not match feature map " +
                shape_str(xv.shape()));
    int64_t BC = xv.dim(0) * xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> y(xv.shape());
    for (int64_t bc = 0; bc < BC; ++bc) {
        T k = sv[bc];
        const T* src = xv.data() + bc * HW;
        T* dst = y.data() + bc * HW;
        for (int64_t i = 0; i < HW; ++i) dst[i] = k * src[i];
    }
    return t.emplace(std::move(y), {x.id, s.id}, [x, s, BC, HW](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        if (tt.wants_grad(x.id)) {
            const T* sv = tt.value(s).data();
            std::vector<T>& dx = tt.grad_buf(x.id);
            for (int64_t bc = 0; bc < BC; ++bc) {
                T k = sv[bc];
                const T* g = dy.data() + bc * HW;
                T* d = dx.data() + bc * HW;
                for (int64_t i = 0; i < HW; ++i) d[i] += k * g[i];
            }
        }
        if (tt.wants_grad(s.id)) {
            const T* xs = tt.value(x).data();
            std::vector<T>& ds = tt.grad_buf(s.id);
            for (int64_t bc = 0; bc < BC; ++bc) {
                const T* g = dy.data() + bc * HW;
                const T* xp = xs + bc * HW;
                T acc = 0;
                for (int64_t i = 0; i < HW; ++i) acc += g[i] * xp[i];
                ds[static_cast<size_t>(bc)] += acc;
            }
        }
    });
}

template <typename T>
Var mul_gate(Tape<T>& t, Var x, Var g) {
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& gv = t.value(g);
    require_rank4(xv, "mul_gate");
    require(gv.shape() == Shape{xv.dim(0), 1, xv.dim(2), xv.dim(3)},
            "mul_gate: gate " + shape_str(gv.shape()) + " does not match feature map " +
                shape_str(xv.shape()));
    int64_t B = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> y(xv.shape());
    for (int64_t b = 0; b < B; ++b) {
        const T* gate = gv.data() + b * HW;
        for (int64_t c = 0; c < C; ++c) {
            const T* src = xv.data() + (b * C + c) * HW;
            T* dst = y.data() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) dst[i] = src[i] * gate[i];
        }
    }
    return t.emplace(std::move(y), {x.id, g.id}, [x, g, B, C, HW](Tape<T>& tt, int32_t self) {
        const std::vector<T>& dy = tt.grad_buf(self);
        if (tt.wants_grad(x.id)) {
            const T* gs = tt.value(g).data();
            std::vector<T>& dx = tt.grad_buf(x.id);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const T* gd = dy.data() + (b * C + c) * HW;
                    const T* gate = gs + b * HW;
                    T* d = dx.data() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) d[i] += gd[i] * gate[i];
                }
        }
        if (tt.wants_grad(g.id)) {
            const T* xs = tt.value(x).data();
            std::vector<T>& dg = tt.grad_buf(g.id);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const T* gd = dy.data() + (b * C + c) * HW;
                    const T* xp = xs + (b * C + c) * HW;
                    T* d = dg.data() + b * HW;
                    for (int64_t i = 0; i < HW; ++i) d[i] += gd[i] * xp[i];
                }
        }
    });
}

#define AGCU_INSTANTIATE_OPS(T)                                                                   \
    template Var conv2d<T>(Tape<T>&, Var, Var, Var, int, int);                                    \
    template Var resample_bilinear<T>(Tape<T>&, Var, int64_t, int64_t);                           \
    template Var max_pool2d<T>(Tape<T>&, Var, int, int);                                          \
    template Var global_avg_pool<T>(Tape<T>&, Var);                                               \
    template Var activation<T>(Tape<T>&, Var, Act);                                               \
    template Var relu<T>(Tape<T>&, Var);                                                          \
    template Var sigmoid<T>(Tape<T>&, Var);                                                       \
    template Var softmax_axis<T>(Tape<T>&, Var, int);                                             \
    template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormState<T>&, BnMode, T, T);        \
    template Var fully_connected<T>(Tape<T>&, Var, Var, Var);                                     \
    template Var concat_channels<T>(Tape<T>&, const std::vector<Var>&);                           \
    template Var add<T>(Tape<T>&, Var, Var);                                                      \
    template Var mul<T>(Tape<T>&, Var, Var);                                                      \
    template Var divide<T>(Tape<T>&, Var, Var);                                                   \
    template Var affine<T>(Tape<T>&, Var, T, T);                                                  \
    template Var sum_all<T>(Tape<T>&, Var);                                                       \
    template Var mean_all<T>(Tape<T>&, Var);                                                      \
    template Var reshape<T>(Tape<T>&, Var, Shape);                                                \
    template Var slice_axis<T>(Tape<T>&, Var, int, int64_t, int64_t);                             \
    template Var mul_channel_scale<T>(Tape<T>&, Var, Var);                                        \
    template Var mul_gate<T>(Tape<T>&, Var, Var);

AGCU_INSTANTIATE_OPS(float)
AGCU_INSTANTIATE_OPS(double)

namespace detail {
#define AGCU_INSTANTIATE_DETAIL(T)                                                                    \
    template void gemm_acc<T>(int64_t, int64_t, int64_t, const T*, const T*, T*);                     \
    template void gemm_abt<T>(int64_t, int64_t, int64_t, const T*, const T*, T*);                     \
    template void gemm_atb<T>(int64_t, int64_t, int64_t, const T*, const T*, T*);                     \
    template void im2col<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,  \
                            int64_t, int64_t, T*);                                                    \
    template void col2im_acc<T>(const T*, int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,       \
                                int64_t, int64_t, int64_t, T*);

AGCU_INSTANTIATE_DETAIL(float)
AGCU_INSTANTIATE_DETAIL(double)
#undef AGCU_INSTANTIATE_DETAIL
}  // namespace detail

#undef AGCU_INSTANTIATE_OPS

}  // namespace agcu
