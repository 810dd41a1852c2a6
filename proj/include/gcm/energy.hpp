#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <utility>

#include "gcm/errors.hpp"
#include "gcm/image.hpp"
#include "gcm/numeric.hpp"

namespace gcm {

/// Data-fit term f of the variational energy. Three concrete forms:
///   Deconv:   f(u) = ‖u⊗k−y‖²        (gradient Lipschitz constant 2)
///   Masked:   f(u) = ½‖u⊙M−y‖²       (binary mask, constant 1)
///   Identity: f(u) = ½‖u−y‖²          (constant 1)
class Fidelity {
public:
    enum class Kind { Deconv, Masked, Identity };

    static Fidelity deconv(ImageGrid y, BlurKernel k) {
        Fidelity f(Kind::Deconv, std::move(y));
        f.flipped_.emplace(flip_kernel(k));
        f.kernel_.emplace(std::move(k));
        return f;
    }

    static Fidelity masked(ImageGrid y, ImageGrid M) {
        require_same_shape(y, M, "Fidelity::masked");
        for (double m : M.data())
            if (m != 0.0 && m != 1.0)
                throw MaskError("Fidelity::masked: mask entries must be 0 or 1");
        Fidelity f(Kind::Masked, std::move(y));
        f.mask_.emplace(std::move(M));
        return f;
    }

    static Fidelity identity(ImageGrid y) { return Fidelity(Kind::Identity, std::move(y)); }

    Kind kind() const { return kind_; }
    const ImageGrid& target() const { return y_; }
    const BlurKernel& kernel() const {
        if (!kernel_) throw ParameterError("Fidelity: no kernel for this kind");
        return *kernel_;
    }
    const ImageGrid& mask() const {
        if (!mask_) throw ParameterError("Fidelity: no mask for this kind");
        return *mask_;
    }

    /// Lipschitz constant of the gradient (tight for simplex kernels
    /// under periodic boundary: ‖K‖₂ ≤ 1, so ∇f = 2Kᵀ(Ku−y) has L = 2).
    double lipschitz() const { return kind_ == Kind::Deconv ? 2.0 : 1.0; }

    double evaluate(const ImageGrid& u) const {
        require_same_shape(u, y_, "Fidelity::evaluate");
        KahanSum s;
        switch (kind_) {
            case Kind::Deconv: {
                ImageGrid r = convolve(u, *kernel_, Boundary::Periodic);
                for (std::size_t i = 0; i < r.size(); ++i) {
                    double d = r.data()[i] - y_.data()[i];
                    s.add(d * d);
                }
                return s.value();
            }
            case Kind::Masked:
                for (std::size_t i = 0; i < u.size(); ++i) {
                    double d = u.data()[i] * mask_->data()[i] - y_.data()[i];
                    s.add(d * d);
                }
                return 0.5 * s.value();
            case Kind::Identity:
                for (std::size_t i = 0; i < u.size(); ++i) {
                    double d = u.data()[i] - y_.data()[i];
                    s.add(d * d);
                }
                return 0.5 * s.value();
        }
        throw ParameterError("Fidelity::evaluate: unknown kind");
    }

    ImageGrid gradient(const ImageGrid& u) const {
        require_same_shape(u, y_, "Fidelity::gradient");
        switch (kind_) {
            case Kind::Deconv: {
                ImageGrid r = convolve(u, *kernel_, Boundary::Periodic) - y_;
                return 2.0 * convolve(r, *flipped_, Boundary::Periodic);
            }
            case Kind::Masked: {
                ImageGrid g(u.height(), u.width(), 0.0, u.domain());
                for (std::size_t i = 0; i < u.size(); ++i) {
                    double m = mask_->data()[i];
                    g.data()[i] = (u.data()[i] * m - y_.data()[i]) * m;
                }
                return g;
            }
            case Kind::Identity:
                return u - y_;
        }
        throw ParameterError("Fidelity::gradient: unknown kind");
    }

private:
    Fidelity(Kind kind, ImageGrid y) : kind_(kind), y_(std::move(y)) {}

    Kind kind_;
    ImageGrid y_;
    std::optional<BlurKernel> kernel_;
    std::optional<BlurKernel> flipped_;
    std::optional<ImageGrid> mask_;
};

/// Separable sparsity prior φ(u) = λ·Σᵢ|uᵢ|^p for p ∈ {0, 0.8, 1},
/// with the 0⁰ := 0 convention (so p = 0 counts nonzeros).
struct Prior {
    double p;
    double lambda;

    Prior(double p_, double lambda_) : p(p_), lambda(lambda_) {
        if (p != 0.0 && p != 0.8 && p != 1.0)
            throw ParameterError("Prior: p must be one of {0, 0.8, 1}");
        if (!(lambda >= 0.0)) throw ParameterError("Prior: lambda must be nonnegative");
    }

    double evaluate(std::span<const double> x) const {
        if (lambda == 0.0) return 0.0;
        KahanSum s;
        if (p == 0.0) {
            for (double v : x) s.add(v != 0.0 ? 1.0 : 0.0);
        } else if (p == 1.0) {
            for (double v : x) s.add(std::abs(v));
        } else {
            for (double v : x) s.add(std::pow(std::abs(v), p));
        }
        return lambda * s.value();
    }
};

/// Scalar proximal map: argmin_x λ|x|^p + (1/(2μ))·(x−z)², written in
/// terms of the effective weight w = λμ. Where the minimizer is not
/// unique (threshold ties) the smaller-magnitude solution is returned.
inline double prox_scalar(double p, double w, double z) {
    if (!(w >= 0.0)) throw ParameterError("prox_scalar: weight must be nonnegative");
    if (w == 0.0) return z;
    if (p == 1.0) {
        double m = std::abs(z) - w;
        return m > 0.0 ? std::copysign(m, z) : 0.0;
    }
    if (p == 0.0) {
        // keep z iff ½z² > w·1, i.e. z² > 2w; tie goes to zero
        return z * z > 2.0 * w ? z : 0.0;
    }
    if (p != 0.8) throw ParameterError("prox_scalar: p must be one of {0, 0.8, 1}");
    // Generalized soft-thresholding for p ∈ (0,1). Below the closed-form
    // threshold tau the minimizer is 0; above it, the larger root of
    //   F(x) = x + w·p·x^{p-1} − |z| = 0,   x ∈ (xb, |z|],
    // where xb = (2w(1−p))^{1/(2−p)}. F is convex and increasing there,
    // so Newton from |z| descends monotonically onto the root.
    const double az = std::abs(z);
    const double xb = std::pow(2.0 * w * (1.0 - p), 1.0 / (2.0 - p));
    const double tau = xb + w * p * std::pow(2.0 * w * (1.0 - p), (p - 1.0) / (2.0 - p));
    if (az <= tau) return 0.0;
    double x = az, lo = xb, hi = az;
    for (int it = 0; it < 50; ++it) {
        double F = x + w * p * std::pow(x, p - 1.0) - az;
        double dF = 1.0 + w * p * (p - 1.0) * std::pow(x, p - 2.0);
        if (F > 0.0)
            hi = x;
        else
            lo = x;
        double step = F / dF;
        double next = x - step;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-12) {
            x = next;
            break;
        }
        x = next;
    }
    return std::copysign(x, z);
}

/// Elementwise proximal map of the prior at step size mu.
inline ImageGrid prox(const Prior& P, const ImageGrid& z, double mu) {
    if (!(mu > 0.0)) throw ParameterError("prox: mu must be positive");
    ImageGrid out(z.height(), z.width(), 0.0, z.domain());
    const double w = P.lambda * mu;
    for (std::size_t i = 0; i < z.size(); ++i)
        out.data()[i] = prox_scalar(P.p, w, z.data()[i]);
    return out;
}

/// The full variational objective Ψ(u) = f(u) + φ(u).
struct EnergyModel {
    Fidelity fidelity;
    Prior prior;
};

inline double eval_energy(const EnergyModel& E, const ImageGrid& u) {
    require_finite(u, "eval_energy");
    return E.fidelity.evaluate(u) + E.prior.evaluate(u.data());
}

inline ImageGrid grad_fidelity(const Fidelity& F, const ImageGrid& u) {
    return F.gradient(u);
}

}  // namespace gcm
