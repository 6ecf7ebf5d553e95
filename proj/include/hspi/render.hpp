#pragma once

#include <array>
#include <vector>

#include "hspi/spi.hpp"
#include "hspi/tensor.hpp"

namespace hspi {

// Classic JET ramp: blue -> cyan -> yellow -> red over [0,1].
inline std::array<float, 3> jet_color(float v) {
    v = std::min(1.0f, std::max(0.0f, v));
    auto seg = [](float x) { return std::min(1.0f, std::max(0.0f, x)); };
    float r = seg(1.5f - std::abs(4.0f * v - 3.0f));
    float g = seg(1.5f - std::abs(4.0f * v - 2.0f));
    float b = seg(1.5f - std::abs(4.0f * v - 1.0f));
    return {r, g, b};
}

// Alpha-blend a JET-colored saliency map over the image.
inline Tensor overlay_heatmap(const Tensor& image, const Tensor& map, float alpha = 0.45f) {
    if (image.shape.size() != 3 || map.shape.size() != 2 ||
        image.dim(0) != map.dim(0) || image.dim(1) != map.dim(1))
        throw ShapeError("overlay: image/map size mismatch");
    Tensor out = image;
    for (int y = 0; y < image.dim(0); ++y)
        for (int x = 0; x < image.dim(1); ++x) {
            auto c = jet_color(map(y, x));
            for (int ch = 0; ch < 3; ++ch)
                out(y, x, ch) = (1.0f - alpha) * image(y, x, ch) + alpha * c[std::size_t(ch)];
        }
    return out;
}

namespace detail {

inline void draw_line(Tensor& img, double x0, double y0, double x1, double y1, float r,
                      float g, float b) {
    int steps = int(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) * 2 + 1;
    for (int i = 0; i <= steps; ++i) {
        double t = double(i) / steps;
        int x = int(std::lround(x0 + t * (x1 - x0)));
        int y = int(std::lround(y0 + t * (y1 - y0)));
        if (y < 0 || y >= img.dim(0) || x < 0 || x >= img.dim(1)) continue;
        img(y, x, 0) = r;
        img(y, x, 1) = g;
        img(y, x, 2) = b;
    }
}

}  // namespace detail

// Small chart of one stage's training trajectory: L_s red, L_m blue, D_n
// green, each normalized to its own range, with the selected epoch marked by
// a vertical line.
inline Tensor plot_stage_panel(const std::vector<CpfRecord>& records, int selected_epoch,
                               int width = 360, int height = 220) {
    Tensor img({height, width, 3}, 1.0f);
    int mx = 34, my = 16;  // margins
    int x0 = mx, x1 = width - 8, y0 = height - my, y1 = 10;
    detail::draw_line(img, x0, y0, x1, y0, 0.35f, 0.35f, 0.35f);
    detail::draw_line(img, x0, y0, x0, y1, 0.35f, 0.35f, 0.35f);
    if (records.empty()) return img;

    double emax = records.back().epoch;
    auto px = [&](double e) { return x0 + (x1 - x0) * (e / std::max(1.0, emax)); };
    auto series = [&](auto get, float r, float g, float b) {
        double lo = 1e300, hi = -1e300;
        for (const auto& rec : records) {
            lo = std::min(lo, get(rec));
            hi = std::max(hi, get(rec));
        }
        if (hi <= lo) hi = lo + 1.0;
        auto py = [&](double v) { return y0 - (y0 - y1) * ((v - lo) / (hi - lo)); };
        for (std::size_t i = 1; i < records.size(); ++i)
            detail::draw_line(img, px(records[i - 1].epoch), py(get(records[i - 1])),
                              px(records[i].epoch), py(get(records[i])), r, g, b);
    };
    series([](const CpfRecord& r) { return r.similarity; }, 0.85f, 0.15f, 0.15f);
    series([](const CpfRecord& r) { return r.mask; }, 0.15f, 0.25f, 0.85f);
    series([](const CpfRecord& r) { return r.peak_gap; }, 0.10f, 0.60f, 0.20f);
    if (selected_epoch > 0)
        detail::draw_line(img, px(selected_epoch), y0, px(selected_epoch), y1, 0.95f,
                          0.60f, 0.10f);
    return img;
}

}  // namespace hspi
