#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcm/errors.hpp"
#include "gcm/numeric.hpp"

namespace gcm {

/// Which field an ImageGrid carries. Pixel data is nominally in [0,1];
/// gradient channels are unbounded.
enum class Domain { Pixel, GradX, GradY };

enum class Boundary { Periodic, Replicate };

/// Dense 2-D scalar field, row-major. Value type; cheap to copy at the
/// sizes this library works with and safe to share across threads.
class ImageGrid {
public:
    ImageGrid() = default;

    ImageGrid(int height, int width, double fill = 0.0, Domain domain = Domain::Pixel)
        : height_(height), width_(width), domain_(domain),
          data_(check_dims(height, width), fill) {}

    ImageGrid(int height, int width, std::vector<double> data, Domain domain = Domain::Pixel)
        : height_(height), width_(width), domain_(domain), data_(std::move(data)) {
        if (static_cast<std::size_t>(check_dims(height, width)) != data_.size())
            throw ShapeError("ImageGrid: data length does not match height*width");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t size() const { return data_.size(); }
    Domain domain() const { return domain_; }
    void set_domain(Domain d) { domain_ = d; }

    double& operator()(int i, int j) { return data_[std::size_t(i) * width_ + j]; }
    double operator()(int i, int j) const { return data_[std::size_t(i) * width_ + j]; }

    double at_periodic(int i, int j) const {
        return (*this)(wrap(i, height_), wrap(j, width_));
    }
    double at_replicate(int i, int j) const {
        return (*this)(std::clamp(i, 0, height_ - 1), std::clamp(j, 0, width_ - 1));
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const ImageGrid& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void clamp01() {
        for (double& v : data_) v = std::clamp(v, 0.0, 1.0);
    }

    static int wrap(int i, int n) {
        i %= n;
        return i < 0 ? i + n : i;
    }

private:
    static std::size_t check_dims(int h, int w) {
        if (h <= 0 || w <= 0) throw ShapeError("ImageGrid: dimensions must be positive");
        return std::size_t(h) * std::size_t(w);
    }

    int height_ = 0;
    int width_ = 0;
    Domain domain_ = Domain::Pixel;
    std::vector<double> data_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch");
}

inline void require_finite(const ImageGrid& img, const char* where) {
    if (!img.all_finite())
        throw NumericError(std::string(where) + ": non-finite values");
}

// elementwise helpers used throughout the solvers

inline ImageGrid operator+(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "operator+");
    ImageGrid out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

inline ImageGrid operator-(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "operator-");
    ImageGrid out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
    return out;
}

inline ImageGrid operator*(double s, const ImageGrid& a) {
    ImageGrid out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

inline double squared_distance(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "squared_distance");
    KahanSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.data()[i] - b.data()[i];
        s.add(d * d);
    }
    return s.value();
}

inline double distance(const ImageGrid& a, const ImageGrid& b) {
    return std::sqrt(squared_distance(a, b));
}

inline double max_abs_difference(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "max_abs_difference");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// Circular shift: output(i,j) = input(i-di, j-dj) with wraparound.
inline ImageGrid circular_shift(const ImageGrid& img, int di, int dj) {
    ImageGrid out(img.height(), img.width(), 0.0, img.domain());
    for (int i = 0; i < img.height(); ++i)
        for (int j = 0; j < img.width(); ++j)
            out(i, j) = img.at_periodic(i - di, j - dj);
    return out;
}

/// Small square blur kernel on the unit simplex: nonnegative weights
/// summing to one, odd size, anchored at the center pixel.
class BlurKernel {
public:
    BlurKernel(int size, std::vector<double> weights) : size_(size), weights_(std::move(weights)) {
        if (size_ <= 0 || size_ % 2 == 0)
            throw ShapeError("BlurKernel: size must be odd and positive");
        if (weights_.size() != std::size_t(size_) * size_)
            throw ShapeError("BlurKernel: weight count does not match size");
        double total = 0.0;
        for (double& w : weights_) {
            if (!std::isfinite(w)) throw NumericError("BlurKernel: non-finite weight");
            if (w < 0.0) {
                if (w < -1e-12) throw ParameterError("BlurKernel: negative weight");
                w = 0.0;
            }
            total += w;
        }
        if (total <= 0.0) throw DegenerateInputError("BlurKernel: weights sum to zero");
        for (double& w : weights_) w /= total;
    }

    static BlurKernel delta(int size) {
        std::vector<double> w(std::size_t(size) * size, 0.0);
        w[std::size_t(size) * size / 2] = 1.0;
        return BlurKernel(size, std::move(w));
    }

    static BlurKernel uniform(int size) {
        std::vector<double> w(std::size_t(size) * size, 1.0);
        return BlurKernel(size, std::move(w));
    }

    static BlurKernel gaussian(int size, double sigma) {
        if (!(sigma > 0.0)) throw ParameterError("BlurKernel::gaussian: sigma must be positive");
        std::vector<double> w(std::size_t(size) * size);
        const int r = size / 2;
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j) {
                double d2 = double(i - r) * (i - r) + double(j - r) * (j - r);
                w[std::size_t(i) * size + j] = std::exp(-d2 / (2.0 * sigma * sigma));
            }
        return BlurKernel(size, std::move(w));
    }

    int size() const { return size_; }
    int radius() const { return size_ / 2; }
    double operator()(int i, int j) const { return weights_[std::size_t(i) * size_ + j]; }
    std::span<const double> weights() const { return weights_; }

private:
    int size_;
    std::vector<double> weights_;
};

/// Convolution y(i,j) = sum_{a,b} k(a,b) * x(i - (a-r), j - (b-r)).
/// Periodic boundary makes the operator exactly circulant, which the
/// spectral solvers rely on; Replicate is for display-quality output only.
inline ImageGrid convolve(const ImageGrid& img, const BlurKernel& k,
                          Boundary boundary = Boundary::Periodic) {
    if (k.size() > std::min(img.height(), img.width()))
        throw ShapeError("convolve: kernel larger than image");
    const int r = k.radius();
    ImageGrid out(img.height(), img.width(), 0.0, img.domain());
    for (int i = 0; i < img.height(); ++i) {
        for (int j = 0; j < img.width(); ++j) {
            KahanSum s;
            for (int a = -r; a <= r; ++a) {
                for (int b = -r; b <= r; ++b) {
                    double w = k(a + r, b + r);
                    if (w == 0.0) continue;
                    double px = boundary == Boundary::Periodic
                                    ? img.at_periodic(i - a, j - b)
                                    : img.at_replicate(i - a, j - b);
                    s.add(w * px);
                }
            }
            out(i, j) = s.value();
        }
    }
    return out;
}

/// Forward differences with periodic wrap. Returns (GradX, GradY) where
/// GradX(i,j) = u(i,j+1) - u(i,j) and GradY(i,j) = u(i+1,j) - u(i,j).
inline std::pair<ImageGrid, ImageGrid> gradient_fields(const ImageGrid& img) {
    if (img.domain() != Domain::Pixel)
        throw DomainTagError("gradient_fields: input must be in the pixel domain");
    ImageGrid gx(img.height(), img.width(), 0.0, Domain::GradX);
    ImageGrid gy(img.height(), img.width(), 0.0, Domain::GradY);
    for (int i = 0; i < img.height(); ++i) {
        for (int j = 0; j < img.width(); ++j) {
            gx(i, j) = img.at_periodic(i, j + 1) - img(i, j);
            gy(i, j) = img.at_periodic(i + 1, j) - img(i, j);
        }
    }
    return {std::move(gx), std::move(gy)};
}

/// 180-degree rotation of the support. Convolving with the flipped kernel
/// is the adjoint of convolving with the original under periodic boundary.
inline BlurKernel flip_kernel(const BlurKernel& k) {
    const int n = k.size();
    std::vector<double> w(std::size_t(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            w[std::size_t(i) * n + j] = k(n - 1 - i, n - 1 - j);
    return BlurKernel(n, std::move(w));
}

/// Blend the border band of an image toward its blurred version so the
/// periodic extension implied by FFT solves has no hard seam. Pixels more
/// than one kernel radius from the border are returned bit-identical.
inline ImageGrid edge_taper(const ImageGrid& img, const BlurKernel& k) {
    if (img.domain() != Domain::Pixel)
        throw DomainTagError("edge_taper: input must be in the pixel domain");
    const int r = k.radius();
    if (r == 0) return img;
    ImageGrid blurred = convolve(img, k, Boundary::Periodic);
    ImageGrid out = img;
    auto ramp = [r](int d) { return std::min(1.0, double(d) / double(r + 1)); };
    for (int i = 0; i < img.height(); ++i) {
        int di = std::min(i, img.height() - 1 - i);
        for (int j = 0; j < img.width(); ++j) {
            int dj = std::min(j, img.width() - 1 - j);
            double alpha = ramp(di) * ramp(dj);
            if (alpha < 1.0)
                out(i, j) = alpha * img(i, j) + (1.0 - alpha) * blurred(i, j);
        }
    }
    return out;
}

/// Rec.601 luminance of an RGB triple of planes.
inline ImageGrid luminance(const ImageGrid& r, const ImageGrid& g, const ImageGrid& b) {
    require_same_shape(r, g, "luminance");
    require_same_shape(r, b, "luminance");
    ImageGrid out(r.height(), r.width(), 0.0, Domain::Pixel);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = 0.299 * r.data()[i] + 0.587 * g.data()[i] + 0.114 * b.data()[i];
    return out;
}

}  // namespace gcm
