// bath.hpp — closed-form coefficients of the Lorentzian environment
//
// Units: frequencies in units of a reference frequency Delta, times in 1/Delta,
// eta in Delta^2. The bath correlation function is a single exponential,
//   alpha(tau) = eta exp(-gamma |tau| - i omega0 tau),
// and every coefficient below is an exact integral of it.

#pragma once

#include "qmeb/engine.hpp"

namespace qmeb::bath {

struct BathParams {
    double eta{0.0};    // coupling strength
    double gamma{1.0};  // spectral width, inverse correlation time
    double omega0{1.0}; // central frequency

    /// Throws std::invalid_argument unless eta >= 0, gamma > 0 and omega0 is finite.
    /// eta = 0 is accepted as the decoupled limit.
    void validate() const;
};

/// Branch point between the degenerate and non-degenerate coarse-graining formulas.
inline constexpr double kDegeneracyTol = 1e-9;

/// J(w) = eta gamma / (gamma^2 + (omega0 - w)^2).
double spectral_density(const BathParams& p, double omega);

/// alpha(tau) = eta exp(-gamma |tau| - i omega0 tau).
cplx bcf(const BathParams& p, double tau);

/// Imaginary part S(w) of the half-sided Fourier transform.
double lamb_shift_density(const BathParams& p, double omega);

/// F(w) = int_0^inf alpha(tau) e^{i w tau} dtau = J(w) + i S(w).
cplx half_fourier(const BathParams& p, double omega);

/// F(w, t) = int_0^t alpha(tau) e^{i w tau} dtau. Throws for t < 0.
cplx redfield_coeff(const BathParams& p, double omega, double t);

/// G(w, w', tau) = int_0^tau ds int_0^s du alpha(s - u) e^{i (w' s - w u)}.
/// Uses the degenerate form when |w - w'| <= degeneracy_tol. Throws for tau < 0.
cplx cg_coeff(const BathParams& p, double omega, double omega_p, double tau,
              double degeneracy_tol = kDegeneracyTol);

/// (e^w - 1) / w, accurate near w = 0.
cplx exprel(cplx w);

/// (e^w - 1 - w) / w^2, accurate near w = 0.
cplx exprel2(cplx w);

} // namespace qmeb::bath
