// masters.hpp — the six perturbative evolutions of the reduced two-qubit state
//
// Generators act on column-stacked 4x4 operators (16x16 superoperators).
// Redfield, optical and partial-secular generators are Schroedinger-picture;
// the coarse-graining generator and the ExpZ map are given in the interaction
// picture with respect to H, clock started at t = 0.

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qmeb/bath.hpp"
#include "qmeb/engine.hpp"
#include "qmeb/integrator.hpp"
#include "qmeb/system.hpp"

namespace qmeb::masters {

enum class Method { RFE_TDC, RFE_AC, QOME, PRWA, CGME, EXPZ };
enum class Picture { schroedinger, interaction };
enum class RedfieldVariant { tdc, ac };

inline constexpr Method kAllMethods[] = {Method::RFE_TDC, Method::RFE_AC, Method::QOME,
                                         Method::PRWA,    Method::CGME,   Method::EXPZ};

std::string method_name(Method m);
/// Accepts the canonical upper-case names; throws std::invalid_argument otherwise.
Method parse_method(std::string_view name);

struct GeneratorSpec {
    Method method{Method::QOME};
    Picture picture{Picture::schroedinger};
    double tau_cg{1.0};      // CGME only
    double cluster_tol{0.1}; // PRWA only

    /// Spec with the picture implied by the method.
    static GeneratorSpec of(Method m);
    void validate() const;
};

/// Everything the generators need, assembled once per parameter point.
struct Problem {
    sys::SystemModel model;
    sys::JumpDecomposition jumps;
    bath::BathParams bath;

    static Problem make(const sys::SystemParams& system, const bath::BathParams& bath);
};

engine::Superoperator rfe_generator(const Problem& p, double t, RedfieldVariant variant);
engine::Superoperator qome_generator(const Problem& p);
engine::Superoperator prwa_generator(const Problem& p, double cluster_tol);

/// Interaction-picture generator at time t:
///   rho -> -(1/tau) sum_{w,w'} e^{i(w'-w)t} G(w,w',tau) [L_w'^dag, L_w rho] + h.c.
engine::Superoperator cgme_generator(const Problem& p, double tau_cg, double t);

/// Schroedinger-picture form of the same equation. The interaction phases cancel
/// against the free evolution, so this generator is time independent.
engine::Superoperator cgme_schroedinger_generator(const Problem& p, double tau_cg);

/// Coefficient matrix K of sum_{w,w'} K_{w,w'} L_w rho L_w'^dag in the
/// coarse-graining dissipator (rows/columns follow p.jumps.entries).
ComplexMatrix cgme_kossakowski(const Problem& p, double tau_cg);

/// Diagonal coefficients 2 J(w) of the optical master equation.
ComplexMatrix qome_kossakowski(const Problem& p);

/// Exponent Z_t of the ExpZ map (interaction picture, clock at 0).
engine::Superoperator expz_exponent(const Problem& p, double t);
/// exp(Z_t).
engine::Superoperator expz_map(const Problem& p, double t);

struct PropagationOptions {
    engine::OdeOptions ode{};
    /// Redfield coefficients are treated as saturated once e^{-gamma t} drops below
    /// this value; afterwards the asymptotic generator is exponentiated.
    double saturation{1e-16};
};

/// Schroedinger-picture dynamical maps Lambda(t_k), rho(t_k) = Lambda(t_k) rho(0),
/// as 16x16 matrices on vec(rho). times ascending, starting at 0.
std::vector<ComplexMatrix> dynamical_maps(const GeneratorSpec& spec, const Problem& p,
                                          std::span<const double> times,
                                          const PropagationOptions& options = {});

Trajectory apply_maps(std::span<const ComplexMatrix> maps, std::span<const double> times,
                      const ComplexMatrix& rho0);

Trajectory propagate(const GeneratorSpec& spec, const Problem& p, const ComplexMatrix& rho0,
                     std::span<const double> times, const PropagationOptions& options = {});

} // namespace qmeb::masters
