#pragma once

#include <complex>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "gcm/errors.hpp"
#include "gcm/image.hpp"

namespace gcm {

namespace detail {
/// FFTW's planner mutates global state; serialize plan creation/destruction.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Real-to-complex FFT plans for one grid shape. Plans are created with
/// FFTW_ESTIMATE so the transform algorithm (and thus the rounding
/// pattern) does not depend on measurement noise, and executed through
/// the new-array interface so a single plan is safe to reuse.
class SpectralPlan {
public:
    SpectralPlan(int height, int width) : h_(height), w_(width), wc_(width / 2 + 1) {
        if (height <= 0 || width <= 0)
            throw ShapeError("SpectralPlan: dimensions must be positive");
        buf_real_.resize(std::size_t(h_) * w_);
        buf_cplx_.resize(std::size_t(h_) * wc_);
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        fwd_ = fftw_plan_dft_r2c_2d(h_, w_, buf_real_.data(),
                                    reinterpret_cast<fftw_complex*>(buf_cplx_.data()),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
        inv_ = fftw_plan_dft_c2r_2d(h_, w_, reinterpret_cast<fftw_complex*>(buf_cplx_.data()),
                                    buf_real_.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (!fwd_ || !inv_) throw NumericError("SpectralPlan: FFTW plan creation failed");
    }

    ~SpectralPlan() {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (fwd_) fftw_destroy_plan(fwd_);
        if (inv_) fftw_destroy_plan(inv_);
    }

    SpectralPlan(const SpectralPlan&) = delete;
    SpectralPlan& operator=(const SpectralPlan&) = delete;

    int height() const { return h_; }
    int width() const { return w_; }
    /// Number of retained columns in the half-spectrum.
    int spectrum_width() const { return wc_; }
    std::size_t spectrum_size() const { return std::size_t(h_) * wc_; }

    /// Forward transform (unnormalized, FFTW convention).
    std::vector<std::complex<double>> forward(const ImageGrid& img) const {
        if (img.height() != h_ || img.width() != w_)
            throw ShapeError("SpectralPlan::forward: shape mismatch");
        std::vector<double> in(img.data().begin(), img.data().end());
        std::vector<std::complex<double>> out(spectrum_size());
        fftw_execute_dft_r2c(fwd_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
        return out;
    }

    /// Inverse transform including the 1/(h*w) normalization, so
    /// inverse(forward(x)) == x up to rounding.
    ImageGrid inverse(std::vector<std::complex<double>> spectrum,
                      Domain domain = Domain::Pixel) const {
        if (spectrum.size() != spectrum_size())
            throw ShapeError("SpectralPlan::inverse: spectrum size mismatch");
        std::vector<double> out(std::size_t(h_) * w_);
        fftw_execute_dft_c2r(inv_, reinterpret_cast<fftw_complex*>(spectrum.data()), out.data());
        const double scale = 1.0 / (double(h_) * double(w_));
        for (double& v : out) v *= scale;
        return ImageGrid(h_, w_, std::move(out), domain);
    }

    /// Optical transfer function of a centered kernel: the kernel is
    /// embedded at the grid origin with its center tap at (0,0) and
    /// wrapped periodically, then transformed. Multiplying spectra by
    /// the OTF equals periodic convolution with the kernel.
    std::vector<std::complex<double>> kernel_spectrum(const BlurKernel& k) const {
        if (k.size() > std::min(h_, w_))
            throw ShapeError("SpectralPlan::kernel_spectrum: kernel larger than grid");
        ImageGrid padded(h_, w_, 0.0);
        const int r = k.radius();
        for (int i = 0; i < k.size(); ++i)
            for (int j = 0; j < k.size(); ++j) {
                int ii = ImageGrid::wrap(i - r, h_);
                int jj = ImageGrid::wrap(j - r, w_);
                padded(ii, jj) += k(i, j);
            }
        return forward(padded);
    }

private:
    int h_, w_, wc_;
    mutable std::vector<double> buf_real_;
    mutable std::vector<std::complex<double>> buf_cplx_;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

}  // namespace gcm
