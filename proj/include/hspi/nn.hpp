#pragma once

#include <cblas.h>

#include <mutex>
#include <vector>

#include "hspi/tensor.hpp"

namespace hspi::nn {

namespace detail {

inline void blas_init() {
    // GEMM must stay single threaded: image-level workers supply the
    // parallelism, and threaded reductions would break bit-for-bit
    // reproducibility of artifacts.
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(1); });
}

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a,
                 int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    blas_init();
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta,
                c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a,
                 int lda, const double* b, int ldb, double beta, double* c, int ldc) {
    blas_init();
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
                tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta,
                c, ldc);
}

}  // namespace detail

// 2-d convolution, stride 1, symmetric zero padding.
// Weights are stored flat as [kh][kw][ci][co] so that the im2col patch matrix
// times the weight matrix directly yields channel-last output rows.
template <typename T>
struct ConvParams {
    int kh = 0, kw = 0, ci = 0, co = 0, pad = 0;
    std::vector<T> weight;  // (kh*kw*ci) x co
    std::vector<T> bias;    // co

    ConvParams() = default;
    ConvParams(int kh_, int kw_, int ci_, int co_, int pad_)
        : kh(kh_), kw(kw_), ci(ci_), co(co_), pad(pad_),
          weight(std::size_t(kh_) * kw_ * ci_ * co_, T(0)), bias(co_, T(0)) {}

    int patch() const { return kh * kw * ci; }
};

template <typename To, typename From>
ConvParams<To> cast(const ConvParams<From>& p) {
    ConvParams<To> out(p.kh, p.kw, p.ci, p.co, p.pad);
    out.weight.assign(p.weight.begin(), p.weight.end());
    out.bias.assign(p.bias.begin(), p.bias.end());
    return out;
}

// Scratch for one conv site; reusing it across calls keeps the training loop
// free of per-step allocations.
template <typename T>
struct ConvScratch {
    std::vector<T> col;   // (oh*ow) x patch
    std::vector<T> dcol;  // same shape, backward
};

namespace detail {

// Writes every byte of col (valid taps copied, out-of-range taps zeroed), so
// the buffer never needs a separate clear.
template <typename T>
void im2col(const TensorT<T>& in, const ConvParams<T>& p, int oh, int ow,
            std::vector<T>& col) {
    int h = in.dim(0), w = in.dim(1), ci = p.ci;
    col.resize(std::size_t(oh) * ow * p.patch());
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            T* row = col.data() + (std::size_t(oy) * ow + ox) * p.patch();
            for (int ky = 0; ky < p.kh; ++ky) {
                int iy = oy + ky - p.pad;
                T* dst = row + ky * p.kw * ci;
                if (iy < 0 || iy >= h) {
                    std::fill(dst, dst + p.kw * ci, T(0));
                    continue;
                }
                for (int kx = 0; kx < p.kw; ++kx, dst += ci) {
                    int ix = ox + kx - p.pad;
                    if (ix < 0 || ix >= w) {
                        std::fill(dst, dst + ci, T(0));
                        continue;
                    }
                    const T* src = &in(iy, ix, 0);
                    for (int c = 0; c < ci; ++c) dst[c] = src[c];
                }
            }
        }
    }
}

template <typename T>
void col2im(const std::vector<T>& col, const ConvParams<T>& p, int oh, int ow,
            TensorT<T>& out) {
    int h = out.dim(0), w = out.dim(1), ci = p.ci;
    std::fill(out.data.begin(), out.data.end(), T(0));
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const T* row = col.data() + (std::size_t(oy) * ow + ox) * p.patch();
            for (int ky = 0; ky < p.kh; ++ky) {
                int iy = oy + ky - p.pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < p.kw; ++kx) {
                    int ix = ox + kx - p.pad;
                    if (ix < 0 || ix >= w) continue;
                    T* dst = &out(iy, ix, 0);
                    const T* src = row + (ky * p.kw + kx) * ci;
                    for (int c = 0; c < ci; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

}  // namespace detail

// Convolution without the bias term, written into a reusable buffer; callers
// fold the bias into their activation pass.
template <typename T>
void conv2d_nobias_into(const TensorT<T>& in, const ConvParams<T>& p, TensorT<T>& out,
                        ConvScratch<T>& ws) {
    if (in.shape.size() != 3 || in.dim(2) != p.ci)
        throw ShapeError("conv2d: input shape does not match params");
    int oh = in.dim(0) + 2 * p.pad - p.kh + 1;
    int ow = in.dim(1) + 2 * p.pad - p.kw + 1;
    if (oh < 1 || ow < 1) throw ShapeError("conv2d: kernel larger than padded input");
    detail::im2col(in, p, oh, ow, ws.col);
    out.ensure_shape({oh, ow, p.co});
    detail::gemm(false, false, oh * ow, p.co, p.patch(), T(1), ws.col.data(),
                 p.patch(), p.weight.data(), p.co, T(0), out.data.data(), p.co);
}

template <typename T>
void bias_relu_into(TensorT<T>& t, const std::vector<T>& bias) {
    int ch = t.dim(2);
    std::size_t hw = t.size() / std::size_t(ch);
    T* d = t.data.data();
    for (std::size_t i = 0; i < hw; ++i, d += ch)
        for (int c = 0; c < ch; ++c) {
            T v = d[c] + bias[std::size_t(c)];
            d[c] = v > T(0) ? v : T(0);
        }
}

// Zero upstream entries wherever the forward activation was clamped.
template <typename T>
void relu_gate_into(const TensorT<T>& activated, TensorT<T>& upstream) {
    for (std::size_t i = 0; i < upstream.size(); ++i)
        if (!(activated.data[i] > T(0))) upstream.data[i] = T(0);
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const ConvParams<T>& p,
                          ConvScratch<T>* scratch = nullptr) {
    ConvScratch<T> local;
    ConvScratch<T>& ws = scratch ? *scratch : local;
    TensorT<T> out;
    conv2d_nobias_into(in, p, out, ws);
    int ch = p.co;
    std::size_t hw = out.size() / std::size_t(ch);
    T* d = out.data.data();
    for (std::size_t i = 0; i < hw; ++i, d += ch)
        for (int c = 0; c < ch; ++c) d[c] += p.bias[std::size_t(c)];
    return out;
}

// Backward pass. Either output may be skipped: the mask-training path wants
// only dinput, classifier training wants both.
template <typename T>
void conv2d_backward(const TensorT<T>& in, const ConvParams<T>& p,
                     const TensorT<T>& upstream, TensorT<T>* dinput,
                     ConvParams<T>* dparams, ConvScratch<T>* scratch = nullptr) {
    int oh = upstream.dim(0), ow = upstream.dim(1);
    if (upstream.dim(2) != p.co) throw ShapeError("conv2d backward: channel mismatch");

    ConvScratch<T> local;
    ConvScratch<T>& ws = scratch ? *scratch : local;

    if (dparams) {
        if (ws.col.empty()) detail::im2col(in, p, oh, ow, ws.col);
        // dW = col^T * upstream; db = column sums of upstream
        detail::gemm(true, false, p.patch(), p.co, oh * ow, T(1), ws.col.data(),
                     p.patch(), upstream.data.data(), p.co, T(1),
                     dparams->weight.data(), p.co);
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int c = 0; c < p.co; ++c)
                    dparams->bias[std::size_t(c)] += upstream(oy, ox, c);
    }
    if (dinput) {
        ws.dcol.resize(std::size_t(oh) * ow * p.patch());  // GEMM overwrites all of it
        detail::gemm(false, true, oh * ow, p.patch(), p.co, T(1),
                     upstream.data.data(), p.co, p.weight.data(), p.co, T(0),
                     ws.dcol.data(), p.patch());
        dinput->ensure_shape({in.dim(0), in.dim(1), p.ci});
        detail::col2im(ws.dcol, p, oh, ow, *dinput);
    }
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& in) {
    TensorT<T> out = in;
    for (T& v : out.data) v = v > T(0) ? v : T(0);
    return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& in, const TensorT<T>& upstream) {
    if (!in.same_shape(upstream)) throw ShapeError("relu backward: shape mismatch");
    TensorT<T> out = upstream;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (!(in.data[i] > T(0))) out.data[i] = T(0);
    return out;
}

// 2x2 max pooling, stride 2. Input height/width must be even. Ties route to
// the first cell in scan order so backward is deterministic.
template <typename T>
void maxpool2_into(const TensorT<T>& in, TensorT<T>& out, std::vector<int>* indices) {
    if (in.shape.size() != 3 || in.dim(0) % 2 || in.dim(1) % 2)
        throw ShapeError("maxpool2: input height/width must be even");
    int oh = in.dim(0) / 2, ow = in.dim(1) / 2, ch = in.dim(2);
    out.ensure_shape({oh, ow, ch});
    if (indices) indices->resize(out.size());
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            for (int c = 0; c < ch; ++c) {
                T best = in(2 * y, 2 * x, c);
                int arg = 0;
                for (int k = 1; k < 4; ++k) {
                    T v = in(2 * y + (k >> 1), 2 * x + (k & 1), c);
                    if (v > best) { best = v; arg = k; }
                }
                out(y, x, c) = best;
                if (indices) (*indices)[(std::size_t(y) * ow + x) * ch + c] = arg;
            }
        }
    }
}

template <typename T>
TensorT<T> maxpool2_forward(const TensorT<T>& in, std::vector<int>* indices = nullptr) {
    TensorT<T> out;
    maxpool2_into(in, out, indices);
    return out;
}

template <typename T>
void maxpool2_backward_into(const std::vector<int>& indices, int in_h, int in_w,
                            const TensorT<T>& upstream, TensorT<T>& out) {
    int oh = upstream.dim(0), ow = upstream.dim(1), ch = upstream.dim(2);
    if (indices.size() != upstream.size())
        throw ShapeError("maxpool2 backward: index/upstream mismatch");
    out.ensure_shape({in_h, in_w, ch});
    std::fill(out.data.begin(), out.data.end(), T(0));
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            for (int c = 0; c < ch; ++c) {
                int k = indices[(std::size_t(y) * ow + x) * ch + c];
                out(2 * y + (k >> 1), 2 * x + (k & 1), c) += upstream(y, x, c);
            }
}

template <typename T>
TensorT<T> maxpool2_backward(const std::vector<int>& indices, int in_h, int in_w,
                             const TensorT<T>& upstream) {
    TensorT<T> out;
    maxpool2_backward_into(indices, in_h, in_w, upstream, out);
    return out;
}

template <typename T>
void global_avg_pool_into(const TensorT<T>& in, TensorT<T>& out) {
    if (in.shape.size() != 3) throw ShapeError("global_avg_pool: need HxWxC input");
    int ch = in.dim(2);
    std::size_t hw = std::size_t(in.dim(0)) * in.dim(1);
    std::vector<double> acc(std::size_t(ch), 0.0);
    for (std::size_t i = 0; i < hw; ++i)
        for (int c = 0; c < ch; ++c) acc[std::size_t(c)] += double(in.data[i * ch + c]);
    out.ensure_shape({ch});
    for (int c = 0; c < ch; ++c) out.data[std::size_t(c)] = T(acc[std::size_t(c)] / double(hw));
}

template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& in) {
    TensorT<T> out;
    global_avg_pool_into(in, out);
    return out;
}

template <typename T>
void global_avg_pool_backward_into(int in_h, int in_w, const TensorT<T>& upstream,
                                   TensorT<T>& out) {
    int ch = upstream.dim(0);
    out.ensure_shape({in_h, in_w, ch});
    double inv = 1.0 / (double(in_h) * double(in_w));
    for (std::size_t i = 0; i < std::size_t(in_h) * in_w; ++i)
        for (int c = 0; c < ch; ++c)
            out.data[i * ch + c] = T(double(upstream.data[std::size_t(c)]) * inv);
}

template <typename T>
TensorT<T> global_avg_pool_backward(int in_h, int in_w, const TensorT<T>& upstream) {
    TensorT<T> out;
    global_avg_pool_backward_into(in_h, in_w, upstream, out);
    return out;
}

// Fully connected layer; weights [in][out] so the output loop vectorizes.
template <typename T>
struct DenseParams {
    int in = 0, out = 0;
    std::vector<T> weight;  // in x out
    std::vector<T> bias;    // out

    DenseParams() = default;
    DenseParams(int in_, int out_)
        : in(in_), out(out_), weight(std::size_t(in_) * out_, T(0)), bias(out_, T(0)) {}
};

template <typename To, typename From>
DenseParams<To> cast(const DenseParams<From>& p) {
    DenseParams<To> out(p.in, p.out);
    out.weight.assign(p.weight.begin(), p.weight.end());
    out.bias.assign(p.bias.begin(), p.bias.end());
    return out;
}

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& in, const DenseParams<T>& p) {
    if (in.shape.size() != 1 || in.dim(0) != p.in)
        throw ShapeError("dense: input length mismatch");
    TensorT<T> out({p.out});
    std::vector<double> acc(p.bias.begin(), p.bias.end());
    for (int i = 0; i < p.in; ++i) {
        double v = double(in.data[std::size_t(i)]);
        for (int o = 0; o < p.out; ++o) acc[std::size_t(o)] += v * double(p.weight[std::size_t(i) * p.out + o]);
    }
    for (int o = 0; o < p.out; ++o) out.data[std::size_t(o)] = T(acc[std::size_t(o)]);
    return out;
}

template <typename T>
void dense_backward(const TensorT<T>& in, const DenseParams<T>& p,
                    const TensorT<T>& upstream, TensorT<T>* dinput,
                    DenseParams<T>* dparams) {
    if (upstream.dim(0) != p.out) throw ShapeError("dense backward: length mismatch");
    if (dinput) {
        *dinput = TensorT<T>({p.in});
        for (int i = 0; i < p.in; ++i) {
            double acc = 0.0;
            for (int o = 0; o < p.out; ++o)
                acc += double(p.weight[std::size_t(i) * p.out + o]) * double(upstream.data[std::size_t(o)]);
            dinput->data[std::size_t(i)] = T(acc);
        }
    }
    if (dparams) {
        for (int i = 0; i < p.in; ++i)
            for (int o = 0; o < p.out; ++o)
                dparams->weight[std::size_t(i) * p.out + o] += in.data[std::size_t(i)] * upstream.data[std::size_t(o)];
        for (int o = 0; o < p.out; ++o) dparams->bias[std::size_t(o)] += upstream.data[std::size_t(o)];
    }
}

}  // namespace hspi::nn
