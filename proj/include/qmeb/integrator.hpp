// integrator.hpp — embedded Runge-Kutta 5(4) (Dormand-Prince) with dense output

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qmeb/engine.hpp"

namespace qmeb::engine {

struct OdeOptions {
    double rtol{1e-9};
    double atol{1e-12};
    double initial_step{0.0}; // 0 selects a starting step automatically
    double max_step{0.0};     // 0 means unbounded
    double fixed_step{0.0};   // > 0 disables error control and uses this step
    std::size_t max_steps{50'000'000};
};

struct OdeStats {
    std::size_t accepted{0};
    std::size_t rejected{0};
    std::size_t rhs_evaluations{0};
};

/// Right-hand side dy = f(t, y). The output argument is preallocated to y's shape.
using OdeRhs = std::function<void(double t, const ComplexMatrix& y, ComplexMatrix& dy)>;

/// Integrates y' = f(t, y) from times.front() and returns y at every requested time.
/// The step sequence does not depend on the requested output times; outputs are
/// taken from the 4th-order continuous extension. Throws NumericalError with the
/// failing time if the step size underflows or the state turns non-finite.
std::vector<ComplexMatrix> integrate(const OdeRhs& f, const ComplexMatrix& y0,
                                     std::span<const double> times, const OdeOptions& options = {},
                                     OdeStats* stats = nullptr);

/// Linear time-dependent generator: y' = G(t) y.
using GeneratorFn = std::function<ComplexMatrix(double t)>;

std::vector<ComplexMatrix> integrate(const GeneratorFn& generator, const ComplexMatrix& y0,
                                     std::span<const double> times, const OdeOptions& options = {},
                                     OdeStats* stats = nullptr);

} // namespace qmeb::engine
