#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "gcm/errors.hpp"
#include "gcm/image.hpp"
#include "gcm/numeric.hpp"

namespace gcm {

/// One convolution block of the network generator: conv + affine
/// normalization (stored statistics) + optional ReLU. Weights are kept
/// in the file's f32 precision so save/load round-trips bit-exactly;
/// arithmetic is done in double.
struct ConvLayer {
    int out_ch = 0, in_ch = 0, kh = 0, kw = 0;
    std::vector<float> weights;  // [out][in][kh][kw]
    std::vector<float> bias;     // [out]
    std::vector<float> mean, var, scale, shift;  // per out-channel statistics
    bool relu = true;

    float w(int o, int c, int a, int b) const {
        return weights[((std::size_t(o) * in_ch + c) * kh + a) * kw + b];
    }
};

/// Proposal map N(·;ω): identity pass-through, a heuristic shock-filter
/// sharpener, or a loaded convolutional stack with optional whole-stack
/// residual skip.
class GeneratorSpec {
public:
    enum class Kind { Identity, Shock, Network };

    static GeneratorSpec identity() { return GeneratorSpec(Kind::Identity); }

    static GeneratorSpec shock(int iterations, double dt) {
        if (iterations < 0) throw ParameterError("GeneratorSpec::shock: negative iterations");
        if (!(dt > 0.0)) throw ParameterError("GeneratorSpec::shock: dt must be positive");
        GeneratorSpec g(Kind::Shock);
        g.shock_iterations_ = iterations;
        g.shock_dt_ = dt;
        return g;
    }

    static GeneratorSpec network(std::vector<ConvLayer> layers, bool residual) {
        GeneratorSpec g(Kind::Network);
        g.layers_ = std::move(layers);
        g.residual_ = residual;
        g.validate_network("GeneratorSpec::network");
        return g;
    }

    Kind kind() const { return kind_; }
    int shock_iterations() const { return shock_iterations_; }
    double shock_dt() const { return shock_dt_; }
    const std::vector<ConvLayer>& layers() const { return layers_; }
    bool residual() const { return residual_; }

    bool operator==(const GeneratorSpec& o) const {
        if (kind_ != o.kind_) return false;
        if (kind_ == Kind::Shock)
            return shock_iterations_ == o.shock_iterations_ && shock_dt_ == o.shock_dt_;
        if (kind_ == Kind::Network) {
            if (residual_ != o.residual_ || layers_.size() != o.layers_.size()) return false;
            for (std::size_t i = 0; i < layers_.size(); ++i) {
                const ConvLayer &a = layers_[i], &b = o.layers_[i];
                if (a.out_ch != b.out_ch || a.in_ch != b.in_ch || a.kh != b.kh ||
                    a.kw != b.kw || a.relu != b.relu || a.weights != b.weights ||
                    a.bias != b.bias || a.mean != b.mean || a.var != b.var ||
                    a.scale != b.scale || a.shift != b.shift)
                    return false;
            }
        }
        return true;
    }

private:
    explicit GeneratorSpec(Kind kind) : kind_(kind) {}

    void validate_network(const std::string& where) const {
        if (layers_.empty()) throw LoadError(where + ": network has no layers");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const ConvLayer& L = layers_[i];
            const std::string at = where + ": layer " + std::to_string(i);
            if (L.out_ch <= 0 || L.in_ch <= 0) throw LoadError(at + ": nonpositive channels");
            if (L.kh <= 0 || L.kw <= 0 || L.kh % 2 == 0 || L.kw % 2 == 0)
                throw LoadError(at + ": kernel dims must be odd and positive");
            if (L.weights.size() != std::size_t(L.out_ch) * L.in_ch * L.kh * L.kw)
                throw LoadError(at + ": weight count mismatch");
            auto chk = [&](const std::vector<float>& v, const char* name) {
                if (v.size() != std::size_t(L.out_ch))
                    throw LoadError(at + ": " + name + " length mismatch");
                for (float x : v)
                    if (!std::isfinite(x)) throw LoadError(at + ": non-finite " + name);
            };
            chk(L.bias, "bias");
            chk(L.mean, "mean");
            chk(L.var, "var");
            chk(L.scale, "scale");
            chk(L.shift, "shift");
            for (float x : L.weights)
                if (!std::isfinite(x)) throw LoadError(at + ": non-finite weight");
            if (i > 0 && L.in_ch != layers_[i - 1].out_ch)
                throw LoadError(at + ": in-channels do not match previous out-channels");
        }
    }

    Kind kind_;
    int shock_iterations_ = 0;
    double shock_dt_ = 0.0;
    std::vector<ConvLayer> layers_;
    bool residual_ = false;
};

/// One explicit-Euler shock-filter step: u ← u − dt·sign(Δu)·‖∇u‖ with
/// central differences and a 5-point Laplacian, periodic boundary.
inline ImageGrid shock_filter_step(const ImageGrid& u, double dt) {
    ImageGrid out = u;
    for (int i = 0; i < u.height(); ++i)
        for (int j = 0; j < u.width(); ++j) {
            double c = u(i, j);
            double n = u.at_periodic(i - 1, j), s = u.at_periodic(i + 1, j);
            double w = u.at_periodic(i, j - 1), e = u.at_periodic(i, j + 1);
            double lap = n + s + w + e - 4.0 * c;
            double gx = 0.5 * (e - w), gy = 0.5 * (s - n);
            double mag = std::sqrt(gx * gx + gy * gy);
            double sgn = lap > 0.0 ? 1.0 : (lap < 0.0 ? -1.0 : 0.0);
            out(i, j) = c - dt * sgn * mag;
        }
    return out;
}

namespace detail {

inline std::vector<ImageGrid> apply_layer(const ConvLayer& L,
                                          const std::vector<ImageGrid>& in) {
    const int h = in[0].height(), w = in[0].width();
    const int ra = L.kh / 2, rb = L.kw / 2;
    std::vector<ImageGrid> out;
    out.reserve(L.out_ch);
    const double eps = 1e-5;
    for (int o = 0; o < L.out_ch; ++o) {
        ImageGrid plane(h, w, 0.0, in[0].domain());
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                KahanSum s;
                for (int c = 0; c < L.in_ch; ++c)
                    for (int a = -ra; a <= ra; ++a)
                        for (int b = -rb; b <= rb; ++b)
                            s.add(double(L.w(o, c, a + ra, b + rb)) *
                                  in[c].at_replicate(i + a, j + b));
                plane(i, j) = s.value() + L.bias[o];
            }
        const double inv_std = 1.0 / std::sqrt(double(L.var[o]) + eps);
        for (double& v : plane.data()) {
            v = double(L.scale[o]) * (v - double(L.mean[o])) * inv_std + double(L.shift[o]);
            if (L.relu && v < 0.0) v = 0.0;
        }
        out.push_back(std::move(plane));
    }
    return out;
}

}  // namespace detail

/// Run the generator on a single-channel field. Output keeps the shape
/// and domain tag of the input; non-finite results are reported, never
/// clamped.
inline ImageGrid generate(const GeneratorSpec& G, const ImageGrid& u0) {
    require_finite(u0, "generate");
    switch (G.kind()) {
        case GeneratorSpec::Kind::Identity:
            return u0;
        case GeneratorSpec::Kind::Shock: {
            ImageGrid u = u0;
            for (int t = 0; t < G.shock_iterations(); ++t)
                u = shock_filter_step(u, G.shock_dt());
            require_finite(u, "generate(shock)");
            return u;
        }
        case GeneratorSpec::Kind::Network: {
            if (G.layers().front().in_ch != 1 || G.layers().back().out_ch != 1)
                throw ParameterError(
                    "generate: network must map 1 channel to 1 channel for grid input");
            std::vector<ImageGrid> planes{u0};
            for (const ConvLayer& L : G.layers()) planes = detail::apply_layer(L, planes);
            ImageGrid out = std::move(planes[0]);
            out.set_domain(u0.domain());
            if (G.residual()) out = out + u0;
            require_finite(out, "generate(network)");
            return out;
        }
    }
    throw ParameterError("generate: unknown generator kind");
}

// ---- weight file IO -------------------------------------------------------
// Little-endian binary: magic "GCMW", version u32 (=1), layer count u32;
// per layer dims out,in,kh,kw (4×u32) then f32 arrays weights, bias, mean,
// var, scale, shift; final residual flag u8. Activations are positional:
// every layer applies ReLU except the last.

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw LoadError("load_generator: truncated file reading " + what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
           std::uint32_t(b[3]) << 24;
}

inline void write_f32s(std::ostream& os, const std::vector<float>& v) {
    for (float x : v) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        write_u32(os, bits);
    }
}

inline std::vector<float> read_f32s(std::istream& is, std::size_t n, const std::string& what) {
    std::vector<float> v(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t bits = read_u32(is, what);
        std::memcpy(&v[i], &bits, 4);
    }
    return v;
}

}  // namespace detail

inline void save_generator(const GeneratorSpec& G, const std::string& path) {
    if (G.kind() != GeneratorSpec::Kind::Network)
        throw ParameterError("save_generator: only network generators are serializable");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw LoadError("save_generator: cannot open " + path);
    os.write("GCMW", 4);
    detail::write_u32(os, 1u);
    detail::write_u32(os, std::uint32_t(G.layers().size()));
    for (const ConvLayer& L : G.layers()) {
        detail::write_u32(os, std::uint32_t(L.out_ch));
        detail::write_u32(os, std::uint32_t(L.in_ch));
        detail::write_u32(os, std::uint32_t(L.kh));
        detail::write_u32(os, std::uint32_t(L.kw));
        detail::write_f32s(os, L.weights);
        detail::write_f32s(os, L.bias);
        detail::write_f32s(os, L.mean);
        detail::write_f32s(os, L.var);
        detail::write_f32s(os, L.scale);
        detail::write_f32s(os, L.shift);
    }
    unsigned char flag = G.residual() ? 1 : 0;
    os.write(reinterpret_cast<const char*>(&flag), 1);
    if (!os) throw LoadError("save_generator: write failed for " + path);
}

inline GeneratorSpec load_generator(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("load_generator: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "GCMW", 4) != 0)
        throw LoadError("load_generator: bad magic in " + path);
    std::uint32_t version = detail::read_u32(is, "version");
    if (version != 1u)
        throw LoadError("load_generator: unsupported version " + std::to_string(version));
    std::uint32_t count = detail::read_u32(is, "layer count");
    if (count == 0 || count > 4096) throw LoadError("load_generator: implausible layer count");
    std::vector<ConvLayer> layers(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string at = "layer " + std::to_string(i);
        ConvLayer& L = layers[i];
        L.out_ch = int(detail::read_u32(is, at + " dims"));
        L.in_ch = int(detail::read_u32(is, at + " dims"));
        L.kh = int(detail::read_u32(is, at + " dims"));
        L.kw = int(detail::read_u32(is, at + " dims"));
        if (L.out_ch <= 0 || L.in_ch <= 0 || L.kh <= 0 || L.kw <= 0 ||
            std::size_t(L.out_ch) * L.in_ch * L.kh * L.kw > (std::size_t(1) << 28))
            throw LoadError("load_generator: implausible dims in " + at);
        L.weights = detail::read_f32s(is, std::size_t(L.out_ch) * L.in_ch * L.kh * L.kw,
                                      at + " weights");
        L.bias = detail::read_f32s(is, L.out_ch, at + " bias");
        L.mean = detail::read_f32s(is, L.out_ch, at + " mean");
        L.var = detail::read_f32s(is, L.out_ch, at + " var");
        L.scale = detail::read_f32s(is, L.out_ch, at + " scale");
        L.shift = detail::read_f32s(is, L.out_ch, at + " shift");
        L.relu = (i + 1 < count);
    }
    unsigned char flag;
    if (!is.read(reinterpret_cast<char*>(&flag), 1))
        throw LoadError("load_generator: truncated file reading residual flag");
    return GeneratorSpec::network(std::move(layers), flag != 0);
}

/// Seeded random residual network, handy for self-contained demos and
/// stress tests. Weights are scaled by 1/sqrt(fan-in) so activations
/// stay bounded; normalization statistics are identity.
inline GeneratorSpec make_random_network(Rng& rng, int blocks, int channels, int ksize,
                                         bool residual = true) {
    if (blocks < 1 || channels < 1 || ksize < 1 || ksize % 2 == 0)
        throw ParameterError("make_random_network: bad architecture");
    std::vector<ConvLayer> layers;
    for (int i = 0; i < blocks; ++i) {
        ConvLayer L;
        L.in_ch = (i == 0) ? 1 : channels;
        L.out_ch = (i == blocks - 1) ? 1 : channels;
        L.kh = L.kw = ksize;
        double sd = 1.0 / std::sqrt(double(L.in_ch) * ksize * ksize);
        L.weights.resize(std::size_t(L.out_ch) * L.in_ch * L.kh * L.kw);
        for (float& w : L.weights) w = float(sd * rng.gaussian());
        L.bias.assign(L.out_ch, 0.0f);
        L.mean.assign(L.out_ch, 0.0f);
        L.var.assign(L.out_ch, 1.0f);
        L.scale.assign(L.out_ch, 1.0f);
        L.shift.assign(L.out_ch, 0.0f);
        L.relu = (i + 1 < blocks);
        layers.push_back(std::move(L));
    }
    return GeneratorSpec::network(std::move(layers), residual);
}

}  // namespace gcm
