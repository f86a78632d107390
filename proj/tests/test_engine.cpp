#include "doctest.h"

#include <chrono>
#include <cmath>
#include <thread>

#include "qmeb/engine.hpp"
#include "qmeb/integrator.hpp"
#include "qmeb/masters.hpp"
#include "support.hpp"

using namespace qmeb;
using namespace qmeb::engine;

TEST_CASE("vectorization stacks columns") {
    ComplexMatrix X(2, 2);
    X << 1.0, 2.0, 3.0, 4.0; // [[a, b], [c, d]]
    const ComplexVector v = vectorize(X);
    CHECK(v(0) == cplx(1.0));
    CHECK(v(1) == cplx(3.0));
    CHECK(v(2) == cplx(2.0));
    CHECK(v(3) == cplx(4.0));
}

TEST_CASE("devectorize inverts vectorize bit-exactly") {
    testing::Gen gen;
    for (int k = 0; k < 10; ++k) {
        const ComplexMatrix X = gen.matrix(4);
        CHECK((devectorize(vectorize(X), 4) - X).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("superoperator builders match direct multiplication") {
    testing::Gen gen(7);
    for (int k = 0; k < 20; ++k) {
        const ComplexMatrix A = gen.matrix(4), B = gen.matrix(4), X = gen.matrix(4);
        const ComplexVector x = vectorize(X);
        CHECK((devectorize(sandwich(A, B) * x, 4) - A * X * B).norm() <= 1e-13 * (A * X * B).norm());
        CHECK((devectorize(left_mul(A) * x, 4) - A * X).norm() <= 1e-13 * (A * X).norm());
        CHECK((devectorize(right_mul(B) * x, 4) - X * B).norm() <= 1e-13 * (X * B).norm());
        CHECK((sandwich(A, B) - kron(B.transpose(), A)).norm() == 0.0);

        const ComplexMatrix H = gen.hermitian(4);
        const ComplexMatrix comm = -I * (H * X - X * H);
        CHECK((devectorize(hamiltonian_superop(H) * x, 4) - comm).norm() <= 1e-13 * comm.norm());
    }
}

TEST_CASE("Superoperator rejects inconsistent shapes") {
    CHECK_THROWS_AS(Superoperator(ComplexMatrix::Zero(5, 5)), std::invalid_argument);
    const Superoperator s(ComplexMatrix::Identity(16, 16));
    CHECK(s.dim == 4);
    Superoperator t(ComplexMatrix::Identity(4, 4));
    CHECK_THROWS_AS(t += s, std::invalid_argument);
}

TEST_CASE("expm: zero, diagonal and inverse pairs") {
    CHECK((expm(ComplexMatrix::Zero(6, 6)) - ComplexMatrix::Identity(6, 6)).norm() == 0.0);

    ComplexMatrix D = ComplexMatrix::Zero(3, 3);
    D(0, 0) = cplx(0.5, 1.0);
    D(1, 1) = -2.0;
    D(2, 2) = cplx(0.0, -7.0);
    const ComplexMatrix E = expm(D);
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(E(i, i) - std::exp(D(i, i))) <= 1e-14 * std::abs(std::exp(D(i, i))));
    }
    CHECK(std::abs(E(0, 1)) == 0.0);

    testing::Gen gen(11);
    for (double scale : {0.1, 1.0, 10.0}) {
        ComplexMatrix M = gen.matrix(8);
        M *= scale / M.norm();
        const ComplexMatrix P = expm(M) * expm(-M);
        CHECK((P - ComplexMatrix::Identity(8, 8)).norm() <= 1e-10);
    }
    // Large anti-Hermitian norm: the product must still be the identity.
    ComplexMatrix A = gen.hermitian(8);
    A *= I * 1e3 / A.norm();
    CHECK((expm(A) * expm(-A) - ComplexMatrix::Identity(8, 8)).norm() <= 1e-10);
}

TEST_CASE("expm of anti-Hermitian matrices is unitary") {
    testing::Gen gen(13);
    for (int k = 0; k < 10; ++k) {
        const ComplexMatrix M = I * gen.hermitian(16) * (1.0 + k);
        const ComplexMatrix U = expm(M);
        CHECK((U.adjoint() * U - ComplexMatrix::Identity(16, 16)).norm() <= 1e-10);
    }
}

TEST_CASE("expm rejects non-finite input") {
    ComplexMatrix M = ComplexMatrix::Zero(2, 2);
    M(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(expm(M), NumericalError);
}

TEST_CASE("hermitian_eigs") {
    ComplexMatrix sz(2, 2);
    sz << 1.0, 0.0, 0.0, -1.0;
    const auto e = hermitian_eigs(sz);
    CHECK(e.values(0) == doctest::Approx(-1.0));
    CHECK(e.values(1) == doctest::Approx(1.0));

    testing::Gen gen(17);
    for (int k = 0; k < 10; ++k) {
        const ComplexMatrix X = gen.hermitian(16);
        const auto eig = hermitian_eigs(X);
        const ComplexMatrix R = eig.vectors * eig.values.cast<cplx>().asDiagonal() * eig.vectors.adjoint();
        CHECK((X - R).norm() <= 1e-10 * std::max(1.0, X.norm()));
        for (Eigen::Index j = 0; j < 16; ++j) {
            CHECK((X * eig.vectors.col(j) - eig.values(j) * eig.vectors.col(j)).norm() <= 1e-10 * X.norm());
        }
        CHECK(min_eigenvalue(X) == doctest::Approx(eig.values(0)).epsilon(1e-12));
    }
    ComplexMatrix bad = ComplexMatrix::Zero(2, 2);
    bad(0, 1) = 1.0;
    CHECK_THROWS_AS(hermitian_eigs(bad), std::invalid_argument);
}

TEST_CASE("nullspace") {
    // Rank-deficient: one known kernel vector.
    testing::Gen gen(19);
    ComplexMatrix S = gen.matrix(6);
    S.col(5) = S.col(0) + 2.0 * S.col(1);
    const ComplexMatrix N = nullspace(S);
    REQUIRE(N.cols() == 1);
    CHECK((S * N).norm() <= 1e-9 * S.norm());
    CHECK_THROWS_AS(nullspace(ComplexMatrix::Identity(4, 4)), NumericalError);
}

TEST_CASE("integrator: scalar decay") {
    const std::vector<double> times = linspace(0.0, 5.0, 11);
    const auto ys = integrate([](double, const ComplexMatrix& y, ComplexMatrix& dy) { dy = -y; },
                              ComplexMatrix::Constant(1, 1, 1.0), times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK(std::abs(ys[k](0, 0) - std::exp(-times[k])) <= 1e-10);
    }
}

TEST_CASE("integrator: constant generator agrees with expm") {
    testing::Gen gen(23);
    ComplexMatrix G = gen.matrix(16);
    G = G / G.norm() - 0.2 * ComplexMatrix::Identity(16, 16);
    const ComplexMatrix y0 = gen.matrix(16).col(0);
    const std::vector<double> times = linspace(0.0, 4.0, 9);
    const auto ys = integrate(GeneratorFn([&](double) { return G; }), y0, times);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK((ys[k] - expm(G * times[k]) * y0).norm() <= 1e-8);
    }
}

TEST_CASE("integrator: dense output does not depend on the output grid") {
    testing::Gen gen(29);
    ComplexMatrix G = gen.matrix(4);
    auto gen_fn = GeneratorFn([&](double t) { return ComplexMatrix(G * std::cos(t)); });
    const ComplexMatrix y0 = ComplexMatrix::Identity(4, 4);
    const auto coarse_t = linspace(0.0, 3.0, 31);
    const auto fine_t = linspace(0.0, 3.0, 61);
    const auto coarse = integrate(gen_fn, y0, coarse_t);
    const auto fine = integrate(gen_fn, y0, fine_t);
    for (std::size_t k = 0; k < coarse.size(); ++k) {
        CHECK((coarse[k] - fine[2 * k]).norm() <= 1e-12 * coarse[k].norm());
    }
}

TEST_CASE("integrator: convergence order on the time-dependent Redfield generator") {
    const auto p = masters::Problem::make({1.0, 0.95}, {0.02371, 11.54, 1.0});
    auto gen_fn = GeneratorFn(
        [&](double t) { return masters::rfe_generator(p, t, masters::RedfieldVariant::tdc).matrix; });
    const ComplexMatrix y0 = vectorize(ComplexMatrix::Identity(4, 4) * 0.25 + 0.25 * ComplexMatrix::Ones(4, 4));
    const std::vector<double> times = {0.0, 1.0};
    auto solve = [&](double h) {
        OdeOptions o;
        o.fixed_step = h;
        return integrate(gen_fn, y0, times, o).back();
    };
    // Steps large enough that the truncation error is far above rounding.
    const ComplexMatrix a = solve(0.1), b = solve(0.05), c = solve(0.025);
    const double order = std::log2((a - b).norm() / (b - c).norm());
    MESSAGE("measured order " << order);
    CHECK(order >= 4.5);
}

TEST_CASE("integrator reports step underflow with the failing time") {
    OdeOptions o;
    o.max_steps = 1000000;
    try {
        integrate([](double t, const ComplexMatrix& y, ComplexMatrix& dy) { dy = y / ((1.0 - t) * (1.0 - t)); },
                  ComplexMatrix::Constant(1, 1, 1.0), std::vector<double>{0.0, 2.0}, o);
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("t =") != std::string::npos);
    }
}

TEST_CASE("SemigroupPropagator agrees with direct exponentials") {
    testing::Gen gen(31);
    ComplexMatrix G = gen.matrix(10);
    G = G / G.norm() - 0.1 * ComplexMatrix::Identity(10, 10);
    const ComplexMatrix y0 = gen.matrix(10).col(0);
    SemigroupPropagator prop(G, 0.05);
    const std::vector<std::int64_t> idx = {0, 1, 3, 7, 100, 101, 900};
    const auto ys = prop.propagate(y0, idx);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const ComplexMatrix ref = expm(G * (0.05 * static_cast<double>(idx[k]))) * y0;
        CHECK((ys[k] - ref).norm() <= 1e-10 * std::max(1.0, ref.norm()));
    }
}

TEST_CASE("propagate_constant, linspace and merge_grids") {
    const auto t = linspace(0.0, 1.0, 5);
    CHECK(t.front() == 0.0);
    CHECK(t.back() == 1.0);
    CHECK(t[2] == doctest::Approx(0.5));

    const std::vector<double> a = {0.0, 0.5, 1.0}, b = {0.25, 0.5, 2.0};
    const auto m = merge_grids(a, b);
    CHECK(m == std::vector<double>{0.0, 0.25, 0.5, 1.0, 2.0});

    ComplexMatrix G = ComplexMatrix::Zero(1, 1);
    G(0, 0) = -2.0;
    const auto ys = propagate_constant(G, ComplexMatrix::Constant(1, 1, 1.0), 0.0, t);
    CHECK(std::abs(ys.back()(0, 0) - std::exp(-2.0)) <= 1e-14);
}

TEST_CASE("DeadlineScope turns check_deadline into a timeout") {
    check_deadline(); // no scope installed: never throws
    {
        DeadlineScope scope(std::chrono::milliseconds(1));
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        CHECK_THROWS_AS(check_deadline(), TimeoutError);
    }
    CHECK_NOTHROW(check_deadline());
}

TEST_CASE("engine routines are deterministic") {
    testing::Gen gen(37);
    const ComplexMatrix M = gen.matrix(16);
    CHECK((expm(M) - expm(M)).norm() == 0.0);
    const ComplexMatrix H = gen.hermitian(16);
    CHECK((hermitian_eigs(H).values - hermitian_eigs(H).values).norm() == 0.0);
}
