#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hspi/common.hpp"
#include "hspi/tensor.hpp"

namespace hspi {

enum class Label { normal, diseased };

inline const char* to_string(Label l) { return l == Label::normal ? "normal" : "diseased"; }
inline Label label_from_string(const std::string& s) {
    if (s == "normal") return Label::normal;
    if (s == "diseased") return Label::diseased;
    throw ConfigError("unknown label: " + s);
}

struct SynthConfig {
    int image_size = 64;
    int normal_count = 250;
    int diseased_count = 250;
    int lesion_count_max = 3;        // per diseased image, 1..k_max
    double lesion_radius_min = 5.0;  // semi-axis range in pixels
    double lesion_radius_max = 11.0;
    int vessel_count = 4;
    double noise_amplitude = 0.02;
    std::uint64_t seed = 1;
};

struct LesionSpec {
    double cx = 0, cy = 0;    // center
    double a = 0, b = 0;      // semi-axes
    double theta = 0;         // rotation
    bool bright = true;
};

struct Sample {
    Tensor image;              // H x W x 3 in [0,1], quantized to 8-bit levels
    Label label = Label::normal;
    Tensor gt_mask;            // H x W binary; all zero for normal samples
    std::uint64_t seed = 0;
    std::vector<LesionSpec> lesions;
    double disc_cx = 0, disc_cy = 0, disc_r = 0;  // fundus disc provenance
};

namespace detail {

inline bool in_ellipse(double px, double py, const LesionSpec& e) {
    double dx = px - e.cx, dy = py - e.cy;
    double c = std::cos(e.theta), s = std::sin(e.theta);
    double u = (dx * c + dy * s) / e.a;
    double v = (-dx * s + dy * c) / e.b;
    return u * u + v * v <= 1.0;
}

inline void stamp_disk(Tensor& img, double cx, double cy, double r, float cr, float cg,
                       float cb) {
    int h = img.dim(0), w = img.dim(1);
    int y0 = std::max(0, int(cy - r - 1)), y1 = std::min(h - 1, int(cy + r + 1));
    int x0 = std::max(0, int(cx - r - 1)), x1 = std::min(w - 1, int(cx + r + 1));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) {
                img(y, x, 0) = cr;
                img(y, x, 1) = cg;
                img(y, x, 2) = cb;
            }
        }
}

}  // namespace detail

// One fundus-like sample: dark background, bright disc with radial shading,
// curved vessel strokes, and for diseased samples 1..k_max elliptical lesions
// whose exact footprint is the ground-truth mask.
inline Sample generate_sample(const SynthConfig& cfg, Label label, std::uint64_t seed) {
    int n = cfg.image_size;
    double disc_r = 0.44 * n;
    if (cfg.lesion_radius_max >= disc_r)
        throw ConfigError("lesion radius exceeds fundus disc radius");
    if (cfg.lesion_radius_min > cfg.lesion_radius_max || cfg.lesion_radius_min <= 0)
        throw ConfigError("empty lesion radius range");
    if (cfg.lesion_count_max < 1) throw ConfigError("lesion count range is empty");

    Rng rng(seed);
    Sample s;
    s.label = label;
    s.seed = seed;
    s.image = Tensor({n, n, 3});
    s.gt_mask = Tensor({n, n});

    double cx = n / 2.0 + rng.uniform(-0.02, 0.02) * n;
    double cy = n / 2.0 + rng.uniform(-0.02, 0.02) * n;
    disc_r *= rng.uniform(0.96, 1.0);
    s.disc_cx = cx;
    s.disc_cy = cy;
    s.disc_r = disc_r;

    float base_r = float(rng.uniform(0.55, 0.72));
    float base_g = float(rng.uniform(0.28, 0.38));
    float base_b = float(rng.uniform(0.10, 0.18));
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double dx = x - cx, dy = y - cy;
            double d2 = dx * dx + dy * dy;
            if (d2 <= disc_r * disc_r) {
                float fall = float(1.0 - 0.35 * d2 / (disc_r * disc_r));
                s.image(y, x, 0) = base_r * fall;
                s.image(y, x, 1) = base_g * fall;
                s.image(y, x, 2) = base_b * fall;
            } else {
                s.image(y, x, 0) = 0.05f;
                s.image(y, x, 1) = 0.04f;
                s.image(y, x, 2) = 0.04f;
            }
        }

    // Vessels: quadratic curves from near the center out to the disc rim.
    for (int v = 0; v < cfg.vessel_count; ++v) {
        double ang = rng.uniform(0.0, 6.283185307179586);
        double p0x = cx + rng.uniform(-0.08, 0.08) * disc_r;
        double p0y = cy + rng.uniform(-0.08, 0.08) * disc_r;
        double p2x = cx + 0.95 * disc_r * std::cos(ang);
        double p2y = cy + 0.95 * disc_r * std::sin(ang);
        double mang = ang + rng.uniform(-0.7, 0.7);
        double p1x = cx + 0.5 * disc_r * std::cos(mang);
        double p1y = cy + 0.5 * disc_r * std::sin(mang);
        double width = rng.uniform(0.5, 1.1);
        float vr = float(0.30 + rng.uniform(-0.05, 0.05));
        int steps = 3 * n;
        for (int t = 0; t <= steps; ++t) {
            double u = double(t) / steps;
            double bx = (1 - u) * (1 - u) * p0x + 2 * (1 - u) * u * p1x + u * u * p2x;
            double by = (1 - u) * (1 - u) * p0y + 2 * (1 - u) * u * p1y + u * u * p2y;
            double ddx = bx - cx, ddy = by - cy;
            if (ddx * ddx + ddy * ddy > disc_r * disc_r) continue;
            detail::stamp_disk(s.image, bx, by, width, vr, 0.10f, 0.08f);
        }
    }

    if (label == Label::diseased) {
        int k = 1;
        if (cfg.lesion_count_max >= 2 && rng.coin(0.5))
            k = rng.range(2, std::min(3, cfg.lesion_count_max));
        for (int li = 0; li < k; ++li) {
            LesionSpec e;
            bool placed = false;
            for (int attempt = 0; attempt < 60 && !placed; ++attempt) {
                e.a = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
                e.b = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max);
                e.theta = rng.uniform(0.0, 3.141592653589793);
                double margin = std::max(e.a, e.b);
                double rad = rng.uniform(0.0, disc_r - margin);
                double ang = rng.uniform(0.0, 6.283185307179586);
                e.cx = cx + rad * std::cos(ang);
                e.cy = cy + rad * std::sin(ang);
                placed = true;
                for (const LesionSpec& prev : s.lesions) {
                    double dx = e.cx - prev.cx, dy = e.cy - prev.cy;
                    double lim = margin + std::max(prev.a, prev.b) + 2.0;
                    if (dx * dx + dy * dy < lim * lim) { placed = false; break; }
                }
            }
            if (!placed) break;  // keep however many fit
            e.bright = rng.coin(0.65);
            float lr, lg, lb;
            if (e.bright) {
                // exudate-like: bright yellowish white
                lr = float(rng.uniform(0.88, 0.97));
                lg = float(rng.uniform(0.80, 0.92));
                lb = float(rng.uniform(0.45, 0.60));
            } else {
                // hemorrhage-like: saturated dark red, distinct from both the
                // disc exterior and the vessel strokes
                lr = float(rng.uniform(0.30, 0.42));
                lg = float(rng.uniform(0.00, 0.03));
                lb = float(rng.uniform(0.00, 0.03));
            }
            int y0 = std::max(0, int(e.cy - std::max(e.a, e.b) - 1));
            int y1 = std::min(n - 1, int(e.cy + std::max(e.a, e.b) + 1));
            int x0 = std::max(0, int(e.cx - std::max(e.a, e.b) - 1));
            int x1 = std::min(n - 1, int(e.cx + std::max(e.a, e.b) + 1));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    if (detail::in_ellipse(x, y, e)) {
                        s.image(y, x, 0) = lr;
                        s.image(y, x, 1) = lg;
                        s.image(y, x, 2) = lb;
                        s.gt_mask(y, x) = 1.0f;
                    }
            s.lesions.push_back(e);
        }
    }

    for (float& v : s.image.data) {
        double noisy = double(v) + cfg.noise_amplitude * rng.normal();
        noisy = std::min(1.0, std::max(0.0, noisy));
        v = float(std::round(noisy * 255.0) / 255.0);  // 8-bit levels, PNG round trip is exact
    }
    return s;
}

// Full dataset: normal samples first, then diseased, each with a seed derived
// from the config seed so generation order never matters.
inline std::vector<Sample> generate(const SynthConfig& cfg) {
    std::vector<Sample> out;
    out.reserve(std::size_t(cfg.normal_count + cfg.diseased_count));
    for (int i = 0; i < cfg.normal_count; ++i)
        out.push_back(generate_sample(cfg, Label::normal, derive_seed(cfg.seed, std::uint64_t(i))));
    for (int i = 0; i < cfg.diseased_count; ++i)
        out.push_back(generate_sample(cfg, Label::diseased,
                                      derive_seed(cfg.seed, std::uint64_t(cfg.normal_count + i))));
    return out;
}

}  // namespace hspi
