// engine.hpp — dense complex linear algebra shared by every module

#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qmeb {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr cplx I{0.0, 1.0};

/// Raised when a numerical routine cannot deliver a result within its contract
/// (integrator step underflow, non-finite values, missing kernel, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when the per-thread deadline set through engine::DeadlineScope expires.
class TimeoutError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// States (or propagated operators) on a time grid.
struct Trajectory {
    std::vector<double> times;
    std::vector<ComplexMatrix> states;
};

} // namespace qmeb

namespace qmeb::engine {

// ---------------------------------------------------------------------------
// Vectorization. Column stacking throughout: vec(A X B) = (B^T (x) A) vec(X).
// ---------------------------------------------------------------------------

ComplexVector vectorize(const ComplexMatrix& X);
ComplexMatrix devectorize(const ComplexVector& v, Eigen::Index n);

ComplexMatrix kron(const ComplexMatrix& A, const ComplexMatrix& B);

/// Matrix of X -> A X B acting on vec(X).
ComplexMatrix sandwich(const ComplexMatrix& A, const ComplexMatrix& B);
/// Matrix of X -> A X.
ComplexMatrix left_mul(const ComplexMatrix& A);
/// Matrix of X -> X B.
ComplexMatrix right_mul(const ComplexMatrix& B);
/// Matrix of X -> -i [H, X].
ComplexMatrix hamiltonian_superop(const ComplexMatrix& H);
/// Matrix of X -> U X U^dagger.
ComplexMatrix conjugation_superop(const ComplexMatrix& U);

/// Linear map on n x n operators, stored as its n^2 x n^2 matrix on vec(X).
struct Superoperator {
    Eigen::Index dim{0};
    ComplexMatrix matrix;

    Superoperator() = default;
    explicit Superoperator(ComplexMatrix m);

    ComplexMatrix apply(const ComplexMatrix& X) const;
    Superoperator& operator+=(const Superoperator& other);
};

Superoperator operator+(Superoperator a, const Superoperator& b);

// ---------------------------------------------------------------------------
// Matrix functions and decompositions
// ---------------------------------------------------------------------------

/// Scaling-and-squaring with a diagonal Pade approximant of degree 3..13 chosen
/// from the 1-norm. Throws NumericalError on non-finite input or overflow.
ComplexMatrix expm(const ComplexMatrix& M);

struct HermitianEigen {
    RealVector values;     // ascending
    ComplexMatrix vectors; // columns
};

/// Eigendecomposition of a Hermitian matrix. Inputs are symmetrized first;
/// an anti-Hermitian part larger than tol * max(1, |X|) is rejected.
HermitianEigen hermitian_eigs(const ComplexMatrix& X, double tol = 1e-10);

double min_eigenvalue(const ComplexMatrix& X);

/// Right singular vectors whose singular value is below rel_tol * sigma_max.
/// Throws NumericalError when no such vector exists.
ComplexMatrix nullspace(const ComplexMatrix& S, double rel_tol = 1e-9);

double hs_norm(const ComplexMatrix& X);

/// Largest |X - X^dagger| entry.
double hermiticity_defect(const ComplexMatrix& X);

// ---------------------------------------------------------------------------
// Cooperative cancellation. Long-running loops call check_deadline(); a
// DeadlineScope installs a per-thread deadline for its lifetime.
// ---------------------------------------------------------------------------

class DeadlineScope {
public:
    explicit DeadlineScope(std::chrono::steady_clock::duration budget);
    ~DeadlineScope();
    DeadlineScope(const DeadlineScope&) = delete;
    DeadlineScope& operator=(const DeadlineScope&) = delete;

private:
    std::optional<std::chrono::steady_clock::time_point> previous_;
};

void check_deadline();

// ---------------------------------------------------------------------------
// Propagation of linear autonomous systems y' = G y by exact exponentials on an
// integer lattice of times k * unit. Step maps for the distinct step counts are
// assembled from exp(G unit) by repeated squaring and kept; the intermediate
// powers are not.
// ---------------------------------------------------------------------------

class SemigroupPropagator {
public:
    SemigroupPropagator(ComplexMatrix generator, double unit);

    double unit() const { return unit_; }

    /// exp(G * count * unit).
    const ComplexMatrix& step_map(std::int64_t count);

    /// y at lattice points indices[k] * unit; indices ascending, y0 given at indices[0].
    std::vector<ComplexMatrix> propagate(const ComplexMatrix& y0,
                                         std::span<const std::int64_t> indices);

    /// Same stepping, but hands each state to visit(k, y) instead of storing it.
    void propagate(const ComplexMatrix& y0, std::span<const std::int64_t> indices,
                   const std::function<void(std::size_t, const ComplexMatrix&)>& visit);

private:
    void build_maps(std::vector<std::int64_t> counts);

    ComplexMatrix generator_;
    double unit_;
    std::vector<std::pair<std::int64_t, ComplexMatrix>> maps_;
};

/// Propagation of a constant generator to arbitrary times by one exponential per
/// time, y(t_k) = exp(G (t_k - t0)) y0. Intended for small generators.
std::vector<ComplexMatrix> propagate_constant(const ComplexMatrix& generator, const ComplexMatrix& y0,
                                              double t0, std::span<const double> times);

/// Uniform grid of n points on [t0, t1] (n >= 2), endpoints exact.
std::vector<double> linspace(double t0, double t1, std::size_t n);

/// Ascending union of two ascending grids; points closer than rel_tol * scale merge.
std::vector<double> merge_grids(std::span<const double> a, std::span<const double> b,
                                double rel_tol = 1e-12);

} // namespace qmeb::engine
