#include "qmeb/bath.hpp"

#include <cmath>
#include <stdexcept>

namespace qmeb::bath {

void BathParams::validate() const {
    if (!(eta >= 0.0) || !std::isfinite(eta)) {
        throw std::invalid_argument("BathParams: eta must be finite and non-negative");
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw std::invalid_argument("BathParams: gamma must be finite and positive");
    }
    if (!std::isfinite(omega0)) {
        throw std::invalid_argument("BathParams: omega0 must be finite");
    }
}

namespace {

// e^w - 1 without cancellation for small |w|.
cplx expm1c(cplx w) {
    const double x = w.real();
    const double y = w.imag();
    const double s = std::sin(0.5 * y);
    const double cos_m1 = -2.0 * s * s;
    return {std::expm1(x) * std::cos(y) + cos_m1, std::exp(x) * std::sin(y)};
}

// Decay-and-detuning rate z = gamma + i (omega0 - omega).
cplx rate(const BathParams& p, double omega) { return {p.gamma, p.omega0 - omega}; }

} // namespace

cplx exprel(cplx w) {
    if (std::abs(w) < 0.05) {
        // sum_k w^k / (k+1)!
        cplx term = 1.0;
        cplx sum = 1.0;
        for (int k = 1; k <= 10; ++k) {
            term *= w / static_cast<double>(k + 1);
            sum += term;
        }
        return sum;
    }
    return expm1c(w) / w;
}

cplx exprel2(cplx w) {
    if (std::abs(w) < 0.1) {
        // sum_k w^k / (k+2)!
        cplx term = 0.5;
        cplx sum = 0.5;
        for (int k = 1; k <= 12; ++k) {
            term *= w / static_cast<double>(k + 2);
            sum += term;
        }
        return sum;
    }
    return (expm1c(w) - w) / (w * w);
}

double spectral_density(const BathParams& p, double omega) {
    const double d = p.omega0 - omega;
    return p.eta * p.gamma / (p.gamma * p.gamma + d * d);
}

double lamb_shift_density(const BathParams& p, double omega) {
    const double d = p.omega0 - omega;
    return p.eta * (omega - p.omega0) / (p.gamma * p.gamma + d * d);
}

cplx bcf(const BathParams& p, double tau) {
    return p.eta * std::exp(cplx{-p.gamma * std::abs(tau), -p.omega0 * tau});
}

cplx half_fourier(const BathParams& p, double omega) {
    return {spectral_density(p, omega), lamb_shift_density(p, omega)};
}

cplx redfield_coeff(const BathParams& p, double omega, double t) {
    if (t < 0.0) {
        throw std::invalid_argument("redfield_coeff: t must be non-negative");
    }
    // eta / z * (1 - e^{-z t}) written as eta t exprel(-z t).
    return p.eta * t * exprel(-rate(p, omega) * t);
}

cplx cg_coeff(const BathParams& p, double omega, double omega_p, double tau, double degeneracy_tol) {
    if (tau < 0.0) {
        throw std::invalid_argument("cg_coeff: tau must be non-negative");
    }
    if (std::abs(omega - omega_p) <= degeneracy_tol) {
        // eta/z tau + eta/z^2 (e^{-z tau} - 1)
        const cplx z = rate(p, omega);
        return p.eta * tau * tau * exprel2(-z * tau);
    }
    // eta/z [ i/(w-w') (e^{-i(w-w')tau} - 1) + 1/z' (e^{-z' tau} - 1) ]
    const cplx z = rate(p, omega);
    const cplx zp = rate(p, omega_p);
    const double delta = omega - omega_p;
    return p.eta / z * tau * (exprel(cplx{0.0, -delta * tau}) - exprel(-zp * tau));
}

} // namespace qmeb::bath
