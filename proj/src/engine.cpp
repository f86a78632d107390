#include "qmeb/engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace qmeb::engine {

ComplexVector vectorize(const ComplexMatrix& X) {
    if (X.rows() != X.cols()) {
        throw std::invalid_argument("vectorize: matrix must be square");
    }
    return Eigen::Map<const ComplexVector>(X.data(), X.size());
}

ComplexMatrix devectorize(const ComplexVector& v, Eigen::Index n) {
    if (v.size() != n * n) {
        throw std::invalid_argument("devectorize: length is not n^2");
    }
    return Eigen::Map<const ComplexMatrix>(v.data(), n, n);
}

ComplexMatrix kron(const ComplexMatrix& A, const ComplexMatrix& B) {
    ComplexMatrix out(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        for (Eigen::Index i = 0; i < A.rows(); ++i) {
            out.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
        }
    }
    return out;
}

ComplexMatrix sandwich(const ComplexMatrix& A, const ComplexMatrix& B) {
    return kron(B.transpose(), A);
}

ComplexMatrix left_mul(const ComplexMatrix& A) {
    return kron(ComplexMatrix::Identity(A.rows(), A.rows()), A);
}

ComplexMatrix right_mul(const ComplexMatrix& B) {
    return kron(B.transpose(), ComplexMatrix::Identity(B.rows(), B.rows()));
}

ComplexMatrix hamiltonian_superop(const ComplexMatrix& H) {
    return -I * (left_mul(H) - right_mul(H));
}

ComplexMatrix conjugation_superop(const ComplexMatrix& U) {
    return kron(U.conjugate(), U);
}

Superoperator::Superoperator(ComplexMatrix m) : matrix(std::move(m)) {
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(matrix.rows()))));
    if (matrix.rows() != matrix.cols() || n * n != matrix.rows()) {
        throw std::invalid_argument("Superoperator: matrix must be n^2 x n^2");
    }
    dim = n;
}

ComplexMatrix Superoperator::apply(const ComplexMatrix& X) const {
    return devectorize(matrix * vectorize(X), dim);
}

Superoperator& Superoperator::operator+=(const Superoperator& other) {
    if (other.dim != dim) {
        throw std::invalid_argument("Superoperator: dimension mismatch");
    }
    matrix += other.matrix;
    return *this;
}

Superoperator operator+(Superoperator a, const Superoperator& b) {
    a += b;
    return a;
}

// ---------------------------------------------------------------------------
// expm
// ---------------------------------------------------------------------------

namespace {

double one_norm(const ComplexMatrix& A) {
    return A.cwiseAbs().colwise().sum().maxCoeff();
}

// Pade numerator/denominator coefficients, degrees 3, 5, 7, 9, 13.
constexpr std::array<double, 4> kPade3{120.0, 60.0, 12.0, 1.0};
constexpr std::array<double, 6> kPade5{30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
constexpr std::array<double, 8> kPade7{17297280.0, 8648640.0, 1995840.0, 277200.0,
                                       25200.0,    1512.0,    56.0,      1.0};
constexpr std::array<double, 10> kPade9{17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                        30270240.0,    2162160.0,    110880.0,     3960.0,
                                        90.0,          1.0};
constexpr std::array<double, 14> kPade13{64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
                                         1187353796428800.0,  129060195264000.0,   10559470521600.0,
                                         670442572800.0,      33522128640.0,       1323241920.0,
                                         40840800.0,          960960.0,            16380.0,
                                         182.0,               1.0};

// Backward-error thresholds on the 1-norm for each degree.
constexpr double kTheta3 = 1.495585217958292e-2;
constexpr double kTheta5 = 2.539398330063230e-1;
constexpr double kTheta7 = 9.504178996162932e-1;
constexpr double kTheta9 = 2.097847961257068e0;
constexpr double kTheta13 = 5.371920351148152e0;

template <std::size_t N>
void pade_low(const ComplexMatrix& A, const std::array<double, N>& b, ComplexMatrix& U, ComplexMatrix& V) {
    const auto n = A.rows();
    const ComplexMatrix ident = ComplexMatrix::Identity(n, n);
    const ComplexMatrix A2 = A * A;
    ComplexMatrix power = ident;
    ComplexMatrix u_acc = b[1] * ident;
    ComplexMatrix v_acc = b[0] * ident;
    for (std::size_t k = 2; k + 1 < N + 1; k += 2) {
        power = power * A2;
        v_acc += b[k] * power;
        if (k + 1 < N) {
            u_acc += b[k + 1] * power;
        }
    }
    U.noalias() = A * u_acc;
    V = std::move(v_acc);
}

void pade13(const ComplexMatrix& A, ComplexMatrix& U, ComplexMatrix& V) {
    const auto& b = kPade13;
    const auto n = A.rows();
    const ComplexMatrix ident = ComplexMatrix::Identity(n, n);
    const ComplexMatrix A2 = A * A;
    const ComplexMatrix A4 = A2 * A2;
    const ComplexMatrix A6 = A4 * A2;
    ComplexMatrix tmp = b[13] * A6 + b[11] * A4 + b[9] * A2;
    ComplexMatrix inner = A6 * tmp;
    inner += b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident;
    U.noalias() = A * inner;
    tmp = b[12] * A6 + b[10] * A4 + b[8] * A2;
    V.noalias() = A6 * tmp;
    V += b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident;
}

} // namespace

ComplexMatrix expm(const ComplexMatrix& M) {
    if (M.rows() != M.cols()) {
        throw std::invalid_argument("expm: matrix must be square");
    }
    if (!M.allFinite()) {
        throw NumericalError("expm: non-finite input");
    }
    const auto n = M.rows();
    if (n == 0) {
        return M;
    }
    const double norm = one_norm(M);
    ComplexMatrix U(n, n);
    ComplexMatrix V(n, n);
    int squarings = 0;
    if (norm <= kTheta3) {
        pade_low(M, kPade3, U, V);
    } else if (norm <= kTheta5) {
        pade_low(M, kPade5, U, V);
    } else if (norm <= kTheta7) {
        pade_low(M, kPade7, U, V);
    } else if (norm <= kTheta9) {
        pade_low(M, kPade9, U, V);
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta13))));
        if (squarings > 1000) {
            throw NumericalError("expm: norm too large for scaling and squaring");
        }
        pade13(M * std::ldexp(1.0, -squarings), U, V);
    }
    ComplexMatrix result = (V - U).partialPivLu().solve(V + U);
    for (int k = 0; k < squarings; ++k) {
        result = result * result;
    }
    if (!result.allFinite()) {
        throw NumericalError("expm: overflow");
    }
    return result;
}

// ---------------------------------------------------------------------------
// Decompositions
// ---------------------------------------------------------------------------

double hs_norm(const ComplexMatrix& X) { return X.norm(); }

double hermiticity_defect(const ComplexMatrix& X) {
    return (X - X.adjoint()).cwiseAbs().maxCoeff();
}

HermitianEigen hermitian_eigs(const ComplexMatrix& X, double tol) {
    if (X.rows() != X.cols()) {
        throw std::invalid_argument("hermitian_eigs: matrix must be square");
    }
    const double scale = std::max(1.0, X.cwiseAbs().maxCoeff());
    if (hermiticity_defect(X) > tol * scale) {
        throw std::invalid_argument("hermitian_eigs: input is not Hermitian within tolerance");
    }
    const ComplexMatrix sym = 0.5 * (X + X.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym);
    if (solver.info() != Eigen::Success) {
        throw NumericalError("hermitian_eigs: eigensolver failed");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

double min_eigenvalue(const ComplexMatrix& X) {
    const ComplexMatrix sym = 0.5 * (X + X.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

ComplexMatrix nullspace(const ComplexMatrix& S, double rel_tol) {
    if (!S.allFinite()) {
        throw NumericalError("nullspace: non-finite input");
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(S, Eigen::ComputeFullV);
    const RealVector& sigma = svd.singularValues();
    const double cutoff = rel_tol * std::max(sigma(0), std::numeric_limits<double>::min());
    std::vector<Eigen::Index> cols;
    for (Eigen::Index k = 0; k < sigma.size(); ++k) {
        if (sigma(k) <= cutoff) {
            cols.push_back(k);
        }
    }
    // Rank-deficient wide/tall inputs: V has more columns than singular values.
    for (Eigen::Index k = sigma.size(); k < svd.matrixV().cols(); ++k) {
        cols.push_back(k);
    }
    if (cols.empty()) {
        std::ostringstream msg;
        msg << "nullspace: empty numerical kernel (smallest singular value "
            << sigma(sigma.size() - 1) << ", cutoff " << cutoff << ")";
        throw NumericalError(msg.str());
    }
    ComplexMatrix out(S.cols(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
        out.col(static_cast<Eigen::Index>(k)) = svd.matrixV().col(cols[k]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Deadlines
// ---------------------------------------------------------------------------

namespace {
thread_local std::optional<std::chrono::steady_clock::time_point> t_deadline;
}

DeadlineScope::DeadlineScope(std::chrono::steady_clock::duration budget) : previous_(t_deadline) {
    const auto candidate = std::chrono::steady_clock::now() + budget;
    t_deadline = previous_ ? std::min(*previous_, candidate) : candidate;
}

DeadlineScope::~DeadlineScope() { t_deadline = previous_; }

void check_deadline() {
    if (t_deadline && std::chrono::steady_clock::now() > *t_deadline) {
        throw TimeoutError("computation exceeded its time budget");
    }
}

// ---------------------------------------------------------------------------
// Semigroup propagation
// ---------------------------------------------------------------------------

SemigroupPropagator::SemigroupPropagator(ComplexMatrix generator, double unit)
    : generator_(std::move(generator)), unit_(unit) {
    if (generator_.rows() != generator_.cols()) {
        throw std::invalid_argument("SemigroupPropagator: generator must be square");
    }
    if (!(unit > 0.0) || !std::isfinite(unit)) {
        throw std::invalid_argument("SemigroupPropagator: unit must be positive");
    }
}

void SemigroupPropagator::build_maps(std::vector<std::int64_t> counts) {
    std::erase_if(counts, [this](std::int64_t c) {
        return std::any_of(maps_.begin(), maps_.end(), [c](const auto& e) { return e.first == c; });
    });
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    if (counts.empty()) {
        return;
    }
    const auto n = generator_.rows();
    std::vector<std::optional<ComplexMatrix>> built(counts.size());
    ComplexMatrix power = expm(generator_ * unit_);
    const std::int64_t top = counts.back();
    for (int bit = 0; (std::int64_t{1} << bit) <= top; ++bit) {
        check_deadline();
        if (bit > 0) {
            power = power * power;
        }
        for (std::size_t k = 0; k < counts.size(); ++k) {
            if ((counts[k] >> bit) & 1) {
                if (built[k]) {
                    *built[k] = power * *built[k];
                } else {
                    built[k] = power;
                }
            }
        }
    }
    for (std::size_t k = 0; k < counts.size(); ++k) {
        maps_.emplace_back(counts[k], built[k] ? std::move(*built[k]) : ComplexMatrix::Identity(n, n));
    }
}

const ComplexMatrix& SemigroupPropagator::step_map(std::int64_t count) {
    if (count < 0) {
        throw std::invalid_argument("SemigroupPropagator: negative step count");
    }
    build_maps({count});
    for (const auto& [c, m] : maps_) {
        if (c == count) {
            return m;
        }
    }
    throw std::logic_error("SemigroupPropagator: step map missing");
}

std::vector<ComplexMatrix> SemigroupPropagator::propagate(const ComplexMatrix& y0,
                                                          std::span<const std::int64_t> indices) {
    std::vector<ComplexMatrix> out;
    out.reserve(indices.size());
    propagate(y0, indices, [&out](std::size_t, const ComplexMatrix& y) { out.push_back(y); });
    return out;
}

void SemigroupPropagator::propagate(const ComplexMatrix& y0, std::span<const std::int64_t> indices,
                                    const std::function<void(std::size_t, const ComplexMatrix&)>& visit) {
    if (y0.rows() != generator_.rows()) {
        throw std::invalid_argument("SemigroupPropagator: state dimension mismatch");
    }
    std::vector<std::int64_t> counts;
    for (std::size_t k = 1; k < indices.size(); ++k) {
        if (indices[k] < indices[k - 1]) {
            throw std::invalid_argument("SemigroupPropagator: indices must be ascending");
        }
        counts.push_back(indices[k] - indices[k - 1]);
    }
    build_maps(counts);
    if (indices.empty()) {
        return;
    }
    ComplexMatrix y = y0;
    ComplexMatrix next(y0.rows(), y0.cols());
    visit(0, y);
    for (std::size_t k = 1; k < indices.size(); ++k) {
        check_deadline();
        next.noalias() = step_map(indices[k] - indices[k - 1]) * y;
        y.swap(next);
        visit(k, y);
    }
}

std::vector<ComplexMatrix> propagate_constant(const ComplexMatrix& generator, const ComplexMatrix& y0,
                                              double t0, std::span<const double> times) {
    std::vector<ComplexMatrix> out;
    out.reserve(times.size());
    for (double t : times) {
        if (t < t0) {
            throw std::invalid_argument("propagate_constant: time before the initial time");
        }
        out.push_back(t == t0 ? y0 : ComplexMatrix(expm(generator * (t - t0)) * y0));
    }
    return out;
}

std::vector<double> linspace(double t0, double t1, std::size_t n) {
    if (n < 2) {
        throw std::invalid_argument("linspace: need at least two points");
    }
    std::vector<double> out(n);
    const double step = (t1 - t0) / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = t0 + step * static_cast<double>(k);
    }
    out.back() = t1;
    return out;
}

std::vector<double> merge_grids(std::span<const double> a, std::span<const double> b, double rel_tol) {
    std::vector<double> all(a.begin(), a.end());
    all.insert(all.end(), b.begin(), b.end());
    std::sort(all.begin(), all.end());
    double scale = 0.0;
    for (double t : all) {
        scale = std::max(scale, std::abs(t));
    }
    std::vector<double> out;
    for (double t : all) {
        if (out.empty() || t - out.back() > rel_tol * scale) {
            out.push_back(t);
        }
    }
    return out;
}

} // namespace qmeb::engine
