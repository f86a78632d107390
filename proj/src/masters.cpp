#include "qmeb/masters.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace qmeb::masters {

using engine::hamiltonian_superop;
using engine::left_mul;
using engine::right_mul;
using engine::sandwich;
using engine::Superoperator;

std::string method_name(Method m) {
    switch (m) {
    case Method::RFE_TDC:
        return "RFE_TDC";
    case Method::RFE_AC:
        return "RFE_AC";
    case Method::QOME:
        return "QOME";
    case Method::PRWA:
        return "PRWA";
    case Method::CGME:
        return "CGME";
    case Method::EXPZ:
        return "EXPZ";
    }
    throw std::invalid_argument("method_name: unknown method");
}

Method parse_method(std::string_view name) {
    for (Method m : kAllMethods) {
        if (method_name(m) == name) {
            return m;
        }
    }
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

GeneratorSpec GeneratorSpec::of(Method m) {
    GeneratorSpec s;
    s.method = m;
    s.picture = (m == Method::CGME || m == Method::EXPZ) ? Picture::interaction : Picture::schroedinger;
    return s;
}

void GeneratorSpec::validate() const {
    const bool interaction = method == Method::CGME || method == Method::EXPZ;
    if ((picture == Picture::interaction) != interaction) {
        throw std::invalid_argument("GeneratorSpec: picture does not match method " + method_name(method));
    }
    if (method == Method::CGME && !(tau_cg > 0.0 && std::isfinite(tau_cg))) {
        throw std::invalid_argument("GeneratorSpec: CGME needs a positive finite tau_cg");
    }
    if (method == Method::PRWA && !(cluster_tol >= 0.0)) {
        throw std::invalid_argument("GeneratorSpec: PRWA needs cluster_tol >= 0");
    }
}

Problem Problem::make(const sys::SystemParams& system, const bath::BathParams& bath) {
    bath.validate();
    Problem p;
    p.model = sys::build_model(system);
    p.jumps = sys::jump_decomposition(p.model);
    p.bath = bath;
    return p;
}

namespace {

// F [Lw rho, L] + conj(F) [L, rho Lw^dag]
ComplexMatrix redfield_term(const ComplexMatrix& Lw, const ComplexMatrix& L, cplx F) {
    const ComplexMatrix Lw_dag = Lw.adjoint();
    return F * (sandwich(Lw, L) - left_mul(L * Lw)) + std::conj(F) * (sandwich(L, Lw_dag) - right_mul(Lw_dag * L));
}

// Optical-master-equation form over an arbitrary list of (frequency, operator).
Superoperator optical_form(const ComplexMatrix& H, const sys::JumpDecomposition& jumps, const bath::BathParams& b) {
    ComplexMatrix H_ls = H;
    ComplexMatrix diss = ComplexMatrix::Zero(16, 16);
    for (const auto& e : jumps.entries) {
        const ComplexMatrix LdL = e.op.adjoint() * e.op;
        H_ls += bath::lamb_shift_density(b, e.omega) * LdL;
        const double J = bath::spectral_density(b, e.omega);
        diss += J * (2.0 * sandwich(e.op, e.op.adjoint()) - left_mul(LdL) - right_mul(LdL));
    }
    return Superoperator(hamiltonian_superop(H_ls) + diss);
}

// -sum_{w,w'} c_{w,w'} [L_w'^dag, L_w rho] + h.c. with c = e^{i(w'-w)t0} G(w,w',tau).
ComplexMatrix cg_dissipator(const Problem& p, double tau, double t0) {
    ComplexMatrix out = ComplexMatrix::Zero(16, 16);
    for (const auto& a : p.jumps.entries) {
        for (const auto& b : p.jumps.entries) {
            const cplx G = bath::cg_coeff(p.bath, a.omega, b.omega, tau);
            const cplx c = -std::exp(cplx{0.0, (b.omega - a.omega) * t0}) * G;
            const ComplexMatrix A = b.op.adjoint(); // L_w'^dag
            const ComplexMatrix& B = a.op;          // L_w
            out += c * (left_mul(A * B) - sandwich(B, A));
            out += std::conj(c) * (right_mul(B.adjoint() * A.adjoint()) - sandwich(A.adjoint(), B.adjoint()));
        }
    }
    return out;
}

void check_times(std::span<const double> times) {
    if (times.empty()) {
        return;
    }
    if (times.front() < 0.0) {
        throw std::invalid_argument("propagation times must be non-negative");
    }
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (times[k] < times[k - 1]) {
            throw std::invalid_argument("propagation times must be ascending");
        }
    }
}

std::vector<ComplexMatrix> redfield_tdc_maps(const Problem& p, std::span<const double> times,
                                             const PropagationOptions& opt) {
    const double t_sw = -std::log(opt.saturation) / p.bath.gamma;
    std::vector<double> ode_times{0.0};
    for (double t : times) {
        if (t > 0.0 && t < t_sw) {
            ode_times.push_back(t);
        }
    }
    const bool tail = !times.empty() && times.back() >= t_sw;
    if (tail) {
        ode_times.push_back(t_sw);
    }
    const engine::GeneratorFn gen = [&p](double t) { return rfe_generator(p, t, RedfieldVariant::tdc).matrix; };
    const ComplexMatrix id = ComplexMatrix::Identity(16, 16);
    const auto early = engine::integrate(gen, id, ode_times, opt.ode);

    std::vector<ComplexMatrix> out;
    out.reserve(times.size());
    std::size_t k = 1;
    std::vector<double> late;
    for (double t : times) {
        if (t <= 0.0) {
            out.push_back(id);
        } else if (t < t_sw) {
            out.push_back(early[k++]);
        } else {
            late.push_back(t);
        }
    }
    if (tail) {
        const ComplexMatrix G_ac = rfe_generator(p, 0.0, RedfieldVariant::ac).matrix;
        auto rest = engine::propagate_constant(G_ac, early.back(), t_sw, late);
        for (auto& m : rest) {
            out.push_back(std::move(m));
        }
    }
    return out;
}

} // namespace

Superoperator rfe_generator(const Problem& p, double t, RedfieldVariant variant) {
    ComplexMatrix g = hamiltonian_superop(p.model.H);
    for (const auto& e : p.jumps.entries) {
        const cplx F = variant == RedfieldVariant::tdc ? bath::redfield_coeff(p.bath, e.omega, t)
                                                       : bath::half_fourier(p.bath, e.omega);
        g += redfield_term(e.op, p.model.L, F);
    }
    return Superoperator(std::move(g));
}

Superoperator qome_generator(const Problem& p) { return optical_form(p.model.H, p.jumps, p.bath); }

Superoperator prwa_generator(const Problem& p, double cluster_tol) {
    const auto clusters = sys::cluster_frequencies(p.jumps, cluster_tol);
    return optical_form(p.model.H, clusters.as_decomposition(), p.bath);
}

Superoperator cgme_generator(const Problem& p, double tau_cg, double t) {
    if (!(tau_cg > 0.0)) {
        throw std::invalid_argument("cgme_generator: tau_cg must be positive");
    }
    return Superoperator(cg_dissipator(p, tau_cg, t) / tau_cg);
}

Superoperator cgme_schroedinger_generator(const Problem& p, double tau_cg) {
    if (!(tau_cg > 0.0)) {
        throw std::invalid_argument("cgme_schroedinger_generator: tau_cg must be positive");
    }
    return Superoperator(hamiltonian_superop(p.model.H) + cg_dissipator(p, tau_cg, 0.0) / tau_cg);
}

ComplexMatrix cgme_kossakowski(const Problem& p, double tau_cg) {
    const auto n = static_cast<Eigen::Index>(p.jumps.entries.size());
    ComplexMatrix G(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            G(a, b) = bath::cg_coeff(p.bath, p.jumps.entries[static_cast<std::size_t>(a)].omega,
                                     p.jumps.entries[static_cast<std::size_t>(b)].omega, tau_cg);
        }
    }
    return (G + G.adjoint()) / tau_cg;
}

ComplexMatrix qome_kossakowski(const Problem& p) {
    const auto n = static_cast<Eigen::Index>(p.jumps.entries.size());
    ComplexMatrix K = ComplexMatrix::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        K(a, a) = 2.0 * bath::spectral_density(p.bath, p.jumps.entries[static_cast<std::size_t>(a)].omega);
    }
    return K;
}

Superoperator expz_exponent(const Problem& p, double t) {
    if (t < 0.0) {
        throw std::invalid_argument("expz_exponent: t must be non-negative");
    }
    return Superoperator(cg_dissipator(p, t, 0.0));
}

Superoperator expz_map(const Problem& p, double t) {
    return Superoperator(engine::expm(expz_exponent(p, t).matrix));
}

std::vector<ComplexMatrix> dynamical_maps(const GeneratorSpec& spec, const Problem& p,
                                          std::span<const double> times, const PropagationOptions& options) {
    spec.validate();
    check_times(times);
    const ComplexMatrix id = ComplexMatrix::Identity(16, 16);
    switch (spec.method) {
    case Method::RFE_TDC:
        return redfield_tdc_maps(p, times, options);
    case Method::RFE_AC:
        return engine::propagate_constant(rfe_generator(p, 0.0, RedfieldVariant::ac).matrix, id, 0.0, times);
    case Method::QOME:
        return engine::propagate_constant(qome_generator(p).matrix, id, 0.0, times);
    case Method::PRWA:
        return engine::propagate_constant(prwa_generator(p, spec.cluster_tol).matrix, id, 0.0, times);
    case Method::CGME:
        return engine::propagate_constant(cgme_schroedinger_generator(p, spec.tau_cg).matrix, id, 0.0, times);
    case Method::EXPZ: {
        std::vector<ComplexMatrix> out;
        out.reserve(times.size());
        for (double t : times) {
            engine::check_deadline();
            const ComplexMatrix U = sys::evolution_operator(p.model, t);
            out.push_back(engine::conjugation_superop(U) * expz_map(p, t).matrix);
        }
        return out;
    }
    }
    throw std::invalid_argument("dynamical_maps: unknown method");
}

Trajectory apply_maps(std::span<const ComplexMatrix> maps, std::span<const double> times,
                      const ComplexMatrix& rho0) {
    if (maps.size() != times.size()) {
        throw std::invalid_argument("apply_maps: one map per time required");
    }
    Trajectory tr;
    tr.times.assign(times.begin(), times.end());
    tr.states.reserve(maps.size());
    const ComplexVector v0 = engine::vectorize(rho0);
    for (const auto& m : maps) {
        tr.states.push_back(engine::devectorize(m * v0, rho0.rows()));
    }
    return tr;
}

Trajectory propagate(const GeneratorSpec& spec, const Problem& p, const ComplexMatrix& rho0,
                     std::span<const double> times, const PropagationOptions& options) {
    if (rho0.rows() != 4 || rho0.cols() != 4) {
        throw std::invalid_argument("propagate: rho0 must be 4x4");
    }
    if (engine::hermiticity_defect(rho0) > 1e-10 * std::max(1.0, rho0.cwiseAbs().maxCoeff())) {
        throw std::invalid_argument("propagate: rho0 must be Hermitian");
    }
    const auto maps = dynamical_maps(spec, p, times, options);
    return apply_maps(maps, times, rho0);
}

} // namespace qmeb::masters
