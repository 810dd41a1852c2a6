#pragma once

#include <cmath>
#include <concepts>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gcm/energy.hpp"
#include "gcm/errors.hpp"
#include "gcm/generator.hpp"
#include "gcm/image.hpp"
#include "gcm/spectral.hpp"

namespace gcm {

struct EngineConfig {
    double gamma = 4e-3;    ///< warm-start proximity weight
    double mu = 1e-6;       ///< proximal-gradient step size
    double L = 2.0;         ///< Lipschitz bound used for the step rule
    int T = 10;             ///< iteration count
    double tolerance = 0.0; ///< early stop on ‖u−v‖; 0 disables

    void validate() const {
        if (!(gamma > 0.0)) throw ParameterError("EngineConfig: gamma must be positive");
        if (!(L > 0.0)) throw ParameterError("EngineConfig: L must be positive");
        if (!(mu > 0.0) || !(mu < 1.0 / L))
            throw ParameterError("EngineConfig: step size must satisfy 0 < mu < 1/L");
        if (T < 0) throw ParameterError("EngineConfig: negative iteration count");
        if (tolerance < 0.0) throw ParameterError("EngineConfig: negative tolerance");
    }
};

/// One engine iteration's diagnostics.
struct StepRecord {
    double psi_u;        ///< Ψ(u^{t+1}) after the corrector
    double psi_u_tilde;  ///< Ψ(ũ^{t+1}) at the generator output
    double psi_v;        ///< Ψ(v^{t+1}) at the accepted monitor variable
    bool accepted;       ///< monitor took the generator output
    double residual;     ///< ‖u^{t+1} − v^{t+1}‖
    double stationarity; ///< ‖(v−u⁺)/μ + ∇f(u⁺) − ∇f(v)‖
};

struct PropagationState {
    ImageGrid u;       ///< current iterate u^t
    double psi = 0.0;  ///< Ψ(u^t), kept exactly in sync with u
    ImageGrid v;       ///< monitor variable of the most recent step
    EngineConfig cfg;  ///< configuration the state was produced under
    std::vector<StepRecord> trace;
};

inline PropagationState make_state(const EnergyModel& E, ImageGrid u_init,
                                   const EngineConfig& cfg) {
    cfg.validate();
    require_finite(u_init, "make_state");
    PropagationState s;
    s.psi = eval_energy(E, u_init);
    s.v = u_init;
    s.u = std::move(u_init);
    s.cfg = cfg;
    return s;
}

/// Certificate that an element of ∂Ψ(u) is small at the current iterate:
/// ‖(v−u)/μ + ∇f(u) − ∇f(v)‖, which the subdifferential calculus of the
/// prox step bounds by (L + 1/μ)·‖u−v‖.
inline double stationarity_residual(const EnergyModel& E, const PropagationState& state) {
    const double mu = state.cfg.mu;
    ImageGrid gu = E.fidelity.gradient(state.u);
    ImageGrid gv = E.fidelity.gradient(state.v);
    KahanSum s;
    for (std::size_t i = 0; i < state.u.size(); ++i) {
        double d = (state.v.data()[i] - state.u.data()[i]) / mu + gu.data()[i] - gv.data()[i];
        s.add(d * d);
    }
    return std::sqrt(s.value());
}

/// Anything that maps a warm-started iterate to a proposal of the same
/// shape can serve as the generator: the monitor guards the descent no
/// matter what the proposal is, so the engine accepts arbitrary callables
/// alongside declarative GeneratorSpec descriptions.
template <class G>
concept GeneratorLike = requires(const G& g, const ImageGrid& u0) {
    { g(u0) } -> std::convertible_to<ImageGrid>;
};

/// One full iteration of the propagation: fidelity warm start, generator
/// proposal, monotone monitor, proximal-gradient correction. The monitor
/// guarantees Ψ(u^{t+1}) ≤ Ψ(v^{t+1}) ≤ Ψ(u^t) regardless of what the
/// generator returns; a violation beyond round-off tolerance indicates a
/// gradient or prox bug and is raised, never swallowed.
template <GeneratorLike Gen>
PropagationState gcm_step(const EnergyModel& E, const Gen& G,
                          PropagationState state, const SpectralPlan* plan = nullptr) {
    const EngineConfig& cfg = state.cfg;
    cfg.validate();

    // (i) warm start: closed-form minimizer of f(u) + γ‖u−u^t‖²
    ImageGrid u0 = [&]() -> ImageGrid {
        switch (E.fidelity.kind()) {
            case Fidelity::Kind::Deconv: {
                std::unique_ptr<SpectralPlan> local;
                const SpectralPlan* p = plan;
                if (!p) {
                    local = std::make_unique<SpectralPlan>(state.u.height(), state.u.width());
                    p = local.get();
                }
                return warm_start_deconv(E.fidelity.target(), E.fidelity.kernel(), state.u,
                                         cfg.gamma, *p);
            }
            case Fidelity::Kind::Masked:
                return warm_start_masked(E.fidelity.target(), E.fidelity.mask(), state.u,
                                         cfg.gamma);
            default:
                return warm_start_identity(E.fidelity.target(), state.u, cfg.gamma);
        }
    }();

    // (ii) generator proposal
    ImageGrid u_tilde = G(u0);
    require_finite(u_tilde, "gcm_step: generator proposal");
    double psi_tilde = eval_energy(E, u_tilde);

    // (iii) monotone monitor: accept the proposal only if it does not
    // increase Ψ (1e-12 slack absorbs FFT round-off)
    bool accepted = psi_tilde <= state.psi + 1e-12;
    ImageGrid v = accepted ? std::move(u_tilde) : state.u;
    double psi_v = accepted ? psi_tilde : state.psi;

    // (iv) proximal-gradient correction on Ψ at the monitor variable
    ImageGrid grad_v = E.fidelity.gradient(v);
    ImageGrid z = v - cfg.mu * grad_v;
    ImageGrid u_next = prox(E.prior, z, cfg.mu);
    double psi_next = eval_energy(E, u_next);

    StepRecord rec;
    rec.psi_u = psi_next;
    rec.psi_u_tilde = psi_tilde;
    rec.psi_v = psi_v;
    rec.accepted = accepted;
    rec.residual = distance(u_next, v);

    if (psi_next > psi_v + 1e-9 || psi_v > state.psi + 1e-9)
        throw InvariantError("gcm_step: monotone descent violated beyond tolerance");

    ImageGrid gu = E.fidelity.gradient(u_next);
    KahanSum st;
    for (std::size_t i = 0; i < v.size(); ++i) {
        double d = (v.data()[i] - u_next.data()[i]) / cfg.mu + gu.data()[i] - grad_v.data()[i];
        st.add(d * d);
    }
    rec.stationarity = std::sqrt(st.value());

    state.u = std::move(u_next);
    state.psi = psi_next;
    state.v = std::move(v);
    state.trace.push_back(rec);
    return state;
}

inline PropagationState gcm_step(const EnergyModel& E, const GeneratorSpec& G,
                                 PropagationState state, const SpectralPlan* plan = nullptr) {
    return gcm_step(E, [&G](const ImageGrid& u0) { return generate(G, u0); },
                    std::move(state), plan);
}

/// Run the propagation T times (or until the u−v residual falls under a
/// positive tolerance) starting from u_init.
template <GeneratorLike Gen>
PropagationState run_gcm(const EnergyModel& E, const Gen& G,
                         const EngineConfig& cfg, ImageGrid u_init) {
    cfg.validate();
    PropagationState state = make_state(E, std::move(u_init), cfg);
    std::unique_ptr<SpectralPlan> plan;
    if (E.fidelity.kind() == Fidelity::Kind::Deconv)
        plan = std::make_unique<SpectralPlan>(state.u.height(), state.u.width());
    for (int t = 0; t < cfg.T; ++t) {
        state = gcm_step(E, G, std::move(state), plan.get());
        if (cfg.tolerance > 0.0 && state.trace.back().residual <= cfg.tolerance) break;
    }
    return state;
}

inline PropagationState run_gcm(const EnergyModel& E, const GeneratorSpec& G,
                                const EngineConfig& cfg, ImageGrid u_init) {
    return run_gcm(E, [&G](const ImageGrid& u0) { return generate(G, u0); }, cfg,
                   std::move(u_init));
}

/// Trace export in the engine's CSV schema. Values are printed with 17
/// significant digits so a re-run with identical inputs is byte-identical.
inline void write_trace(std::ostream& os, const std::vector<StepRecord>& trace) {
    os << "t,psi_u,psi_u_tilde,accepted,residual,stationarity\n";
    char buf[160];
    for (std::size_t t = 0; t < trace.size(); ++t) {
        const StepRecord& r = trace[t];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d,%.17g,%.17g\n", t, r.psi_u,
                      r.psi_u_tilde, r.accepted ? 1 : 0, r.residual, r.stationarity);
        os << buf;
    }
}

inline void write_trace(const std::string& path, const std::vector<StepRecord>& trace) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw LoadError("write_trace: cannot open " + path);
    write_trace(os, trace);
}

}  // namespace gcm
