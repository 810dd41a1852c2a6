#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "gcm/errors.hpp"
#include "gcm/fft.hpp"
#include "gcm/image.hpp"
#include "gcm/numeric.hpp"

namespace gcm {

/// Minimizer of ‖u⊗k−y‖² + γ‖u−u_prev‖² (fidelity warm start for the
/// deconvolution fidelity). The normal equations diagonalize under the
/// periodic-boundary FFT: û = (conj(K̂)·ŷ + γ·û_prev) / (|K̂|² + γ).
inline ImageGrid warm_start_deconv(const ImageGrid& y, const BlurKernel& k,
                                   const ImageGrid& u_prev, double gamma,
                                   const SpectralPlan& plan) {
    if (!(gamma > 0.0)) throw ParameterError("warm_start_deconv: gamma must be positive");
    require_same_shape(y, u_prev, "warm_start_deconv");
    if (y.height() != plan.height() || y.width() != plan.width())
        throw ShapeError("warm_start_deconv: plan shape mismatch");
    auto Y = plan.forward(y);
    auto U = plan.forward(u_prev);
    auto K = plan.kernel_spectrum(k);
    for (std::size_t i = 0; i < Y.size(); ++i) {
        std::complex<double> numer = std::conj(K[i]) * Y[i] + gamma * U[i];
        double denom = std::norm(K[i]) + gamma;
        Y[i] = numer / denom;
    }
    return plan.inverse(std::move(Y), y.domain());
}

inline ImageGrid warm_start_deconv(const ImageGrid& y, const BlurKernel& k,
                                   const ImageGrid& u_prev, double gamma) {
    SpectralPlan plan(y.height(), y.width());
    return warm_start_deconv(y, k, u_prev, gamma, plan);
}

/// Minimizer of ½‖u⊙M−y‖² + γ‖u−u_prev‖² with a binary mask M.
/// Elementwise: u = (M·y + 2γ·u_prev)/(M + 2γ); missing pixels keep u_prev.
inline ImageGrid warm_start_masked(const ImageGrid& y, const ImageGrid& M,
                                   const ImageGrid& u_prev, double gamma) {
    if (!(gamma > 0.0)) throw ParameterError("warm_start_masked: gamma must be positive");
    require_same_shape(y, M, "warm_start_masked");
    require_same_shape(y, u_prev, "warm_start_masked");
    ImageGrid out(y.height(), y.width(), 0.0, u_prev.domain());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double m = M.data()[i];
        out.data()[i] = (m * y.data()[i] + 2.0 * gamma * u_prev.data()[i]) / (m + 2.0 * gamma);
    }
    return out;
}

/// Minimizer of ½‖u−y‖² + γ‖u−u_prev‖²: u = (y + 2γ·u_prev)/(1 + 2γ).
inline ImageGrid warm_start_identity(const ImageGrid& y, const ImageGrid& u_prev, double gamma) {
    if (!(gamma > 0.0)) throw ParameterError("warm_start_identity: gamma must be positive");
    require_same_shape(y, u_prev, "warm_start_identity");
    ImageGrid out(y.height(), y.width(), 0.0, u_prev.domain());
    const double denom = 1.0 + 2.0 * gamma;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = (y.data()[i] + 2.0 * gamma * u_prev.data()[i]) / denom;
    return out;
}

/// Least-squares integration of a forward-difference gradient pair under
/// periodic boundary: the unique image (up to its mean, supplied by the
/// caller) minimizing ‖∇ₓu−gx‖² + ‖∇ᵧu−gy‖². The normal equations are a
/// periodic Poisson problem, diagonal in the Fourier basis with the
/// forward-difference symbols dₓ = e^{2πi b/w}−1, dᵧ = e^{2πi a/h}−1.
inline ImageGrid poisson_from_gradients(const ImageGrid& gx, const ImageGrid& gy, double mean,
                                        const SpectralPlan& plan) {
    require_same_shape(gx, gy, "poisson_from_gradients");
    if (gx.height() != plan.height() || gx.width() != plan.width())
        throw ShapeError("poisson_from_gradients: plan shape mismatch");
    auto Gx = plan.forward(gx);
    auto Gy = plan.forward(gy);
    const int h = plan.height(), w = plan.width(), wc = plan.spectrum_width();
    std::vector<std::complex<double>> U(plan.spectrum_size());
    for (int a = 0; a < h; ++a) {
        for (int b = 0; b < wc; ++b) {
            const std::size_t idx = std::size_t(a) * wc + b;
            if (a == 0 && b == 0) {
                U[idx] = mean * double(h) * double(w);
                continue;
            }
            const std::complex<double> dx =
                std::polar(1.0, 2.0 * std::numbers::pi * b / w) - 1.0;
            const std::complex<double> dy =
                std::polar(1.0, 2.0 * std::numbers::pi * a / h) - 1.0;
            U[idx] = (std::conj(dx) * Gx[idx] + std::conj(dy) * Gy[idx]) /
                     (std::norm(dx) + std::norm(dy));
        }
    }
    return plan.inverse(std::move(U), Domain::Pixel);
}

inline ImageGrid poisson_from_gradients(const ImageGrid& gx, const ImageGrid& gy, double mean) {
    SpectralPlan plan(gx.height(), gx.width());
    return poisson_from_gradients(gx, gy, mean, plan);
}

/// Exact Euclidean projection onto the probability simplex
/// {x : x ≥ 0, Σx = 1} by the sort-and-threshold algorithm.
inline std::vector<double> project_simplex(std::span<const double> w) {
    if (w.empty()) throw ShapeError("project_simplex: empty vector");
    for (double v : w)
        if (!std::isfinite(v)) throw NumericError("project_simplex: non-finite entry");
    std::vector<double> sorted(w.begin(), w.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double running = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < sorted.size(); ++j) {
        running += sorted[j];
        double cand = (running - 1.0) / double(j + 1);
        if (sorted[j] - cand > 0.0) theta = cand;
    }
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = std::max(w[i] - theta, 0.0);
    return out;
}

/// Unconstrained full-grid solution of the kernel least squares
/// min_κ Σ_c ‖κ⊗u_c − y_c‖² + η‖κ‖² over a kernel field the size of the
/// image; channels share one normal system (their spectra are summed).
/// The returned field places the kernel center at index (0,0) wrapped
/// on the torus.
inline ImageGrid kernel_field_unconstrained(std::span<const ImageGrid> us,
                                            std::span<const ImageGrid> ys, double eta) {
    if (!(eta > 0.0)) throw ParameterError("kernel_field_unconstrained: eta must be positive");
    if (us.empty() || us.size() != ys.size())
        throw ShapeError("kernel_field_unconstrained: channel lists empty or mismatched");
    const int h = us[0].height(), w = us[0].width();
    SpectralPlan plan(h, w);
    std::vector<std::complex<double>> numer(plan.spectrum_size(), 0.0);
    std::vector<double> denom(plan.spectrum_size(), eta);
    double signal = 0.0;
    for (std::size_t c = 0; c < us.size(); ++c) {
        require_same_shape(us[c], ys[c], "kernel_field_unconstrained");
        if (us[c].height() != h || us[c].width() != w)
            throw ShapeError("kernel_field_unconstrained: channel shapes differ");
        signal += squared_norm(us[c].data());
        auto U = plan.forward(us[c]);
        auto Y = plan.forward(ys[c]);
        for (std::size_t i = 0; i < U.size(); ++i) {
            numer[i] += std::conj(U[i]) * Y[i];
            denom[i] += std::norm(U[i]);
        }
    }
    if (signal <= 0.0)
        throw DegenerateInputError("kernel_field_unconstrained: zero signal in all channels");
    for (std::size_t i = 0; i < numer.size(); ++i) numer[i] /= denom[i];
    return plan.inverse(std::move(numer));
}

/// Default regularization for the kernel solve: 1e-3 relative to the
/// total squared signal energy.
inline double relative_kernel_eta(std::span<const ImageGrid> us) {
    KahanSum s;
    for (const ImageGrid& u : us) s.add(squared_norm(u.data()));
    return 1e-3 * std::max(s.value(), 1e-30);
}

namespace detail {
/// Crop a (size × size) window out of a torus field, centered at the
/// support centroid of the positive part (peak-anchored so the circular
/// mean is well defined). Returns raw window values, center included.
inline std::vector<double> centroid_crop(const ImageGrid& field, int size) {
    const int h = field.height(), w = field.width();
    int pi = 0, pj = 0;
    double peak = field(0, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (field(i, j) > peak) {
                peak = field(i, j);
                pi = i;
                pj = j;
            }
    // Centroid of positive mass in a window around the peak, measured in
    // torus offsets so wraparound cannot bias it.
    int reach = std::min(size, (std::min(h, w) - 1) / 2);
    double m = 0.0, mi = 0.0, mj = 0.0;
    for (int a = -reach; a <= reach; ++a)
        for (int b = -reach; b <= reach; ++b) {
            double v = field.at_periodic(pi + a, pj + b);
            if (v > 0.0) {
                m += v;
                mi += v * a;
                mj += v * b;
            }
        }
    int ci = pi, cj = pj;
    if (m > 0.0) {
        ci = pi + int(std::lround(mi / m));
        cj = pj + int(std::lround(mj / m));
    }
    const int r = size / 2;
    std::vector<double> window(std::size_t(size) * size);
    for (int a = -r; a <= r; ++a)
        for (int b = -r; b <= r; ++b)
            window[std::size_t(a + r) * size + (b + r)] = field.at_periodic(ci + a, cj + b);
    return window;
}
}  // namespace detail

/// Kernel estimation: FFT least squares over the full grid, crop to the
/// requested support around the solution's centroid, then project onto
/// the unit simplex.
inline BlurKernel kernel_update(std::span<const ImageGrid> us, std::span<const ImageGrid> ys,
                                int size, double eta) {
    if (size <= 0 || size % 2 == 0)
        throw ShapeError("kernel_update: size must be odd and positive");
    if (!us.empty() && size > std::min(us[0].height(), us[0].width()))
        throw ShapeError("kernel_update: size exceeds image");
    ImageGrid field = kernel_field_unconstrained(us, ys, eta);
    std::vector<double> window = detail::centroid_crop(field, size);
    std::vector<double> projected = project_simplex(window);
    return BlurKernel(size, std::move(projected));
}

inline BlurKernel kernel_update(const ImageGrid& u, const ImageGrid& y, int size, double eta) {
    const ImageGrid us[] = {u};
    const ImageGrid ys[] = {y};
    return kernel_update(std::span<const ImageGrid>(us), std::span<const ImageGrid>(ys), size,
                         eta);
}

}  // namespace gcm
