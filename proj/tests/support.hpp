// support.hpp — fixed-seed generators for the property tests.

#pragma once

#include <cstdint>
#include <random>

#include "qmeb/engine.hpp"

namespace testing {

using qmeb::ComplexMatrix;
using qmeb::cplx;

inline constexpr std::uint64_t kSeed = 20241015;

class Gen {
public:
    explicit Gen(std::uint64_t seed = kSeed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    ComplexMatrix matrix(Eigen::Index n) {
        ComplexMatrix m(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                m(i, j) = cplx(normal(), normal());
            }
        }
        return m;
    }

    ComplexMatrix hermitian(Eigen::Index n) {
        const ComplexMatrix m = matrix(n);
        return 0.5 * (m + m.adjoint());
    }

    ComplexMatrix density(Eigen::Index n) {
        const ComplexMatrix m = matrix(n);
        ComplexMatrix rho = m * m.adjoint();
        return rho / rho.trace().real();
    }

private:
    std::mt19937_64 rng_;
};

} // namespace testing
