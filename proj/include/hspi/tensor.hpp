#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "hspi/common.hpp"

namespace hspi {

// Dense row-major array. Spatial data is laid out H x W x C with the channel
// innermost, vectors as a single dimension {N}.
template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(count(shape), fill);
    }

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor dimension must be positive");
            n *= std::size_t(d);
        }
        return n;
    }

    static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s), T(0)); }
    static TensorT full(std::vector<int> s, T v) { return TensorT(std::move(s), v); }

    int dim(int i) const { return shape[std::size_t(i)]; }
    std::size_t size() const { return data.size(); }

    T& operator()(int y, int x) { return data[std::size_t(y) * shape[1] + x]; }
    const T& operator()(int y, int x) const { return data[std::size_t(y) * shape[1] + x]; }
    T& operator()(int y, int x, int c) {
        return data[(std::size_t(y) * shape[1] + x) * shape[2] + c];
    }
    const T& operator()(int y, int x, int c) const {
        return data[(std::size_t(y) * shape[1] + x) * shape[2] + c];
    }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    // Resize for reuse without touching existing contents.
    void ensure_shape(std::vector<int> s) {
        if (shape != s) {
            shape = std::move(s);
            data.resize(count(shape));
        }
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }
};

using Tensor = TensorT<float>;

template <typename To, typename From>
TensorT<To> cast(const TensorT<From>& t) {
    TensorT<To> out;
    out.shape = t.shape;
    out.data.assign(t.data.begin(), t.data.end());
    return out;
}

// Small H_i x W_i matrix: mask vectors and their binary relatives.
template <typename T>
struct GridT {
    int rows = 0;
    int cols = 0;
    std::vector<T> v;

    GridT() = default;
    GridT(int r, int c, T fill = T(0)) : rows(r), cols(c), v(std::size_t(r) * c, fill) {
        if (r < 1 || c < 1) throw ShapeError("grid must be at least 1x1");
    }

    static GridT ones(int r, int c) { return GridT(r, c, T(1)); }

    T& at(int r, int c) { return v[std::size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return v[std::size_t(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const GridT& o) const { return rows == o.rows && cols == o.cols; }
};

using Grid = GridT<float>;

template <typename To, typename From>
GridT<To> cast(const GridT<From>& g) {
    GridT<To> out;
    out.rows = g.rows;
    out.cols = g.cols;
    out.v.assign(g.v.begin(), g.v.end());
    return out;
}

template <typename T>
GridT<T> hadamard(const GridT<T>& a, const GridT<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("grid shape mismatch");
    GridT<T> out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

namespace detail {
inline void check_upsample(int rows, int cols, int th, int tw) {
    if (th < rows || tw < cols)
        throw ShapeError("upsample target smaller than source (" + std::to_string(rows) +
                         "x" + std::to_string(cols) + " -> " + std::to_string(th) + "x" +
                         std::to_string(tw) + ")");
}
}  // namespace detail

// Nearest-neighbor upsampling: target pixel y maps to source cell
// floor(y * rows / th), so an exact multiple gives plain block replication
// and a non-multiple gives cells differing by one pixel.
template <typename T>
TensorT<T> upsample_nearest(const GridT<T>& g, int th, int tw) {
    detail::check_upsample(g.rows, g.cols, th, tw);
    TensorT<T> out({th, tw});
    for (int y = 0; y < th; ++y) {
        int sy = int(std::int64_t(y) * g.rows / th);
        for (int x = 0; x < tw; ++x) {
            int sx = int(std::int64_t(x) * g.cols / tw);
            out(y, x) = g.at(sy, sx);
        }
    }
    return out;
}

// Pixel row y of the nearest-neighbor footprint of source cell r covers
// [start, end). Used for per-cell pixel accounting.
inline std::pair<int, int> nearest_span(int cells, int target, int cell) {
    // first y with floor(y*cells/target) == cell is ceil(cell*target/cells)
    int lo = int((std::int64_t(cell) * target + cells - 1) / cells);
    int hi = int((std::int64_t(cell + 1) * target + cells - 1) / cells);
    return {lo, hi};
}

namespace detail {
struct LerpIdx {
    int i0, i1;
    double w1;  // weight of i1; weight of i0 is 1 - w1
};

// Corner-aligned sample position: source endpoint cells map to target corners.
inline LerpIdx corner_aligned(int src, int dst, int p) {
    if (src == 1 || dst == 1) return {0, 0, 0.0};
    double s = double(p) * double(src - 1) / double(dst - 1);
    int i0 = std::min(int(s), src - 2);
    return {i0, i0 + 1, s - double(i0)};
}
}  // namespace detail

template <typename T>
TensorT<T> upsample_bilinear(const GridT<T>& g, int th, int tw) {
    detail::check_upsample(g.rows, g.cols, th, tw);
    TensorT<T> out({th, tw});
    for (int y = 0; y < th; ++y) {
        auto ly = detail::corner_aligned(g.rows, th, y);
        for (int x = 0; x < tw; ++x) {
            auto lx = detail::corner_aligned(g.cols, tw, x);
            double a = double(g.at(ly.i0, lx.i0)), b = double(g.at(ly.i0, lx.i1));
            double c = double(g.at(ly.i1, lx.i0)), d = double(g.at(ly.i1, lx.i1));
            // lerp form keeps constant grids and zero-weight samples exact;
            // the clamp pins the range invariant against rounding
            double top = a + lx.w1 * (b - a);
            double bot = c + lx.w1 * (d - c);
            double v = top + ly.w1 * (bot - top);
            double lo = std::min(std::min(a, b), std::min(c, d));
            double hi = std::max(std::max(a, b), std::max(c, d));
            out(y, x) = T(std::min(hi, std::max(lo, v)));
        }
    }
    return out;
}

// Adjoint of upsample_bilinear: given d(loss)/d(output) returns
// d(loss)/d(grid). Accumulates in double regardless of T.
template <typename T>
GridT<T> upsample_bilinear_backward(int rows, int cols, const TensorT<T>& upstream) {
    if (upstream.shape.size() != 2) throw ShapeError("upstream must be 2-d");
    int th = upstream.dim(0), tw = upstream.dim(1);
    detail::check_upsample(rows, cols, th, tw);
    std::vector<double> acc(std::size_t(rows) * cols, 0.0);
    for (int y = 0; y < th; ++y) {
        auto ly = detail::corner_aligned(rows, th, y);
        for (int x = 0; x < tw; ++x) {
            auto lx = detail::corner_aligned(cols, tw, x);
            double u = double(upstream(y, x));
            acc[std::size_t(ly.i0) * cols + lx.i0] += (1.0 - ly.w1) * (1.0 - lx.w1) * u;
            acc[std::size_t(ly.i0) * cols + lx.i1] += (1.0 - ly.w1) * lx.w1 * u;
            acc[std::size_t(ly.i1) * cols + lx.i0] += ly.w1 * (1.0 - lx.w1) * u;
            acc[std::size_t(ly.i1) * cols + lx.i1] += ly.w1 * lx.w1 * u;
        }
    }
    GridT<T> out(rows, cols);
    for (std::size_t i = 0; i < acc.size(); ++i) out.v[i] = T(acc[i]);
    return out;
}

template <typename T>
TensorT<T> apply_mask(const TensorT<T>& image, const TensorT<T>& mask) {
    if (image.shape.size() != 3 || mask.shape.size() != 2 ||
        image.dim(0) != mask.dim(0) || image.dim(1) != mask.dim(1))
        throw ShapeError("apply_mask: spatial shapes differ");
    TensorT<T> out = image;
    int ch = image.dim(2);
    std::size_t p = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        T m = mask[i];
        for (int c = 0; c < ch; ++c, ++p) out.data[p] = m * image.data[p];
    }
    return out;
}

}  // namespace hspi
