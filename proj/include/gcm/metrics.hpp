#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gcm/errors.hpp"
#include "gcm/image.hpp"
#include "gcm/numeric.hpp"

namespace gcm {

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double kernel_similarity = 0.0;
    double error_ratio = 0.0;
};

/// Peak signal-to-noise ratio on [0,1]-range images; identical inputs
/// report the +inf sentinel.
inline double psnr(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "psnr");
    KahanSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.data()[i] - b.data()[i];
        s.add(d * d);
    }
    double mse = s.value() / double(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

/// Mean local SSIM with the standard 11×11 Gaussian window (σ = 1.5,
/// C₁ = 0.01², C₂ = 0.03²), averaged over fully valid window positions.
inline double ssim(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "ssim");
    constexpr int win = 11, r = win / 2;
    if (a.height() < win || a.width() < win)
        throw SizeError("ssim: image smaller than the 11x11 window");
    static const std::vector<double> weights = [] {
        std::vector<double> w(win * win);
        double total = 0.0;
        for (int i = 0; i < win; ++i)
            for (int j = 0; j < win; ++j) {
                double d2 = double(i - r) * (i - r) + double(j - r) * (j - r);
                w[i * win + j] = std::exp(-d2 / (2.0 * 1.5 * 1.5));
                total += w[i * win + j];
            }
        for (double& x : w) x /= total;
        return w;
    }();
    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
    KahanSum acc;
    std::size_t count = 0;
    for (int i = r; i < a.height() - r; ++i)
        for (int j = r; j < a.width() - r; ++j) {
            double mx = 0.0, my = 0.0;
            for (int wi = -r; wi <= r; ++wi)
                for (int wj = -r; wj <= r; ++wj) {
                    double wgt = weights[(wi + r) * win + (wj + r)];
                    mx += wgt * a(i + wi, j + wj);
                    my += wgt * b(i + wi, j + wj);
                }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int wi = -r; wi <= r; ++wi)
                for (int wj = -r; wj <= r; ++wj) {
                    double wgt = weights[(wi + r) * win + (wj + r)];
                    double dx = a(i + wi, j + wj) - mx;
                    double dy = b(i + wi, j + wj) - my;
                    vx += wgt * dx * dx;
                    vy += wgt * dy * dy;
                    cov += wgt * dx * dy;
                }
            double num = (2.0 * mx * my + C1) * (2.0 * cov + C2);
            double den = (mx * mx + my * my + C1) * (vx + vy + C2);
            acc.add(num / den);
            ++count;
        }
    return acc.value() / double(count);
}

/// Maximum normalized cross-correlation over all cyclic shifts of the
/// kernels padded to a common support; 1 for identical kernels up to a
/// shift, in [0,1] for nonnegative kernels.
inline double kernel_similarity(const BlurKernel& k1, const BlurKernel& k2) {
    const int s = std::max(k1.size(), k2.size());
    auto pad = [s](const BlurKernel& k) {
        ImageGrid g(s, s, 0.0);
        int off = (s - k.size()) / 2;
        for (int i = 0; i < k.size(); ++i)
            for (int j = 0; j < k.size(); ++j) g(i + off, j + off) = k(i, j);
        return g;
    };
    ImageGrid a = pad(k1), b = pad(k2);
    double na = norm(a.data()), nb = norm(b.data());
    if (na == 0.0 || nb == 0.0) throw NumericError("kernel_similarity: zero kernel");
    double best = -std::numeric_limits<double>::infinity();
    for (int ti = 0; ti < s; ++ti)
        for (int tj = 0; tj < s; ++tj) {
            KahanSum dotv;
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j)
                    dotv.add(a(i, j) * b.at_periodic(i - ti, j - tj));
            best = std::max(best, dotv.value());
        }
    return best / (na * nb);
}

/// Error Ratio of Table-style benchmarks: SSD of the restoration under
/// the estimated kernel over SSD under the ground-truth kernel (same
/// non-blind method for both). A perfect reference restoration yields
/// the +inf sentinel unless the estimate is also perfect.
inline double error_ratio(const ImageGrid& restored_est_k, const ImageGrid& restored_true_k,
                          const ImageGrid& sharp) {
    require_same_shape(restored_est_k, sharp, "error_ratio");
    require_same_shape(restored_true_k, sharp, "error_ratio");
    double num = squared_distance(restored_est_k, sharp);
    double den = squared_distance(restored_true_k, sharp);
    if (den == 0.0) return num == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return num / den;
}

/// Observation synthesis for Eq.-(1)-style experiments: periodic blur
/// plus seeded Gaussian noise of standard deviation sigma, clamped.
inline ImageGrid synth_blur(const ImageGrid& sharp, const BlurKernel& k, double sigma,
                            std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ParameterError("synth_blur: sigma must be nonnegative");
    ImageGrid y = convolve(sharp, k, Boundary::Periodic);
    if (sigma > 0.0) {
        Rng rng(seed);
        for (double& v : y.data()) v += sigma * rng.gaussian();
    }
    y.clamp01();
    return y;
}

/// Seeded synthetic motion-blur kernel: a smoothly turning random-walk
/// trajectory rasterized with bilinear deposition onto the support and
/// normalized to the simplex.
inline BlurKernel make_motion_kernel(int size, std::uint64_t seed) {
    if (size <= 0 || size % 2 == 0)
        throw ShapeError("make_motion_kernel: size must be odd and positive");
    if (size == 1) return BlurKernel::delta(1);
    Rng rng(seed);
    const int steps = 8 * size;
    const double step_len = 0.3;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(steps);
    double x = 0.0, y = 0.0, sx = 0.0, sy = 0.0;
    double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    for (int t = 0; t < steps; ++t) {
        theta += 0.35 * rng.gaussian();
        x += step_len * std::cos(theta);
        y += step_len * std::sin(theta);
        pts.emplace_back(x, y);
        sx += x;
        sy += y;
    }
    // Translate the trajectory so its mean sits at the support center: an
    // off-center kernel would conflate blurring with a net image shift, and
    // deconvolution against the unshifted truth would be meaningless.
    const double cx = 0.5 * (size - 1) - sx / steps, cy = 0.5 * (size - 1) - sy / steps;
    const double lo = 0.05, hi = size - 1.05;
    std::vector<double> w(std::size_t(size) * size, 0.0);
    for (const auto& [px, py] : pts) {
        const double qx = std::clamp(px + cx, lo, hi), qy = std::clamp(py + cy, lo, hi);
        const int ix = int(std::floor(qx)), iy = int(std::floor(qy));
        const double fx = qx - ix, fy = qy - iy;
        w[std::size_t(iy) * size + ix] += (1.0 - fx) * (1.0 - fy);
        w[std::size_t(iy) * size + ix + 1] += fx * (1.0 - fy);
        w[std::size_t(iy + 1) * size + ix] += (1.0 - fx) * fy;
        w[std::size_t(iy + 1) * size + ix + 1] += fx * fy;
    }
    return BlurKernel(size, std::move(w));
}

/// Smooth synthetic test image: sum of a few low-frequency sinusoids,
/// rescaled into [0.05, 0.95]. Deterministic per seed.
inline ImageGrid make_smooth_image(int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    ImageGrid img(height, width);
    struct Wave {
        double fi, fj, phase, amp;
    };
    std::vector<Wave> waves;
    for (int n = 0; n < 4; ++n)
        waves.push_back({double(1 + int(rng.below(3))), double(1 + int(rng.below(3))),
                         rng.uniform(0.0, 6.283185307179586), rng.uniform(0.3, 1.0)});
    const double tau = 6.283185307179586;
    for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) {
            double v = 0.0;
            for (const Wave& wv : waves)
                v += wv.amp * std::sin(tau * (wv.fi * i / height + wv.fj * j / width) + wv.phase);
            img(i, j) = v;
        }
    double mn = *std::min_element(img.data().begin(), img.data().end());
    double mx = *std::max_element(img.data().begin(), img.data().end());
    double span = mx - mn > 0.0 ? mx - mn : 1.0;
    for (double& v : img.data()) v = 0.05 + 0.9 * (v - mn) / span;
    return img;
}

/// Piecewise-constant cartoon image (random axis-aligned rectangles of
/// distinct intensities) for smoothing and sharpening fixtures.
inline ImageGrid make_cartoon_image(int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    ImageGrid img(height, width, 0.2);
    for (int n = 0; n < 6; ++n) {
        int i0 = int(rng.below(std::uint64_t(height - 2)));
        int j0 = int(rng.below(std::uint64_t(width - 2)));
        int i1 = i0 + 2 + int(rng.below(std::uint64_t(height - i0 - 1)));
        int j1 = j0 + 2 + int(rng.below(std::uint64_t(width - j0 - 1)));
        double level = rng.uniform(0.1, 0.9);
        for (int i = i0; i < std::min(i1, height); ++i)
            for (int j = j0; j < std::min(j1, width); ++j) img(i, j) = level;
    }
    return img;
}

}  // namespace gcm
