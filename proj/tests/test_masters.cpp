#include "doctest.h"

#include <cmath>

#include "qmeb/masters.hpp"
#include "support.hpp"

using namespace qmeb;
using namespace qmeb::masters;
using engine::Superoperator;

namespace {

const sys::SystemParams kDetuned{1.0, 0.95};
const sys::SystemParams kResonant{1.0, 1.0};
const bath::BathParams kWeakDetuned{0.02371, 11.54, 1.0};

double trace_defect(const Superoperator& G, testing::Gen& gen) {
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const ComplexMatrix X = gen.hermitian(4);
        worst = std::max(worst, std::abs(G.apply(X).trace()));
    }
    return worst;
}

// Largest |tr M(X) - tr X| for a map M.
double trace_loss(const Superoperator& M, testing::Gen& gen) {
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        const ComplexMatrix X = gen.hermitian(4);
        worst = std::max(worst, std::abs(M.apply(X).trace() - X.trace()));
    }
    return worst;
}

double hermiticity_loss(const Superoperator& G, testing::Gen& gen) {
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
        worst = std::max(worst, engine::hermiticity_defect(G.apply(gen.hermitian(4))));
    }
    return worst;
}

// Choi matrix sum_ij |i><j| (x) M(|i><j|) of a map on 4x4 operators.
ComplexMatrix choi(const ComplexMatrix& map) {
    ComplexMatrix C = ComplexMatrix::Zero(16, 16);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            ComplexMatrix E = ComplexMatrix::Zero(4, 4);
            E(i, j) = 1.0;
            const ComplexMatrix out = engine::devectorize(map * engine::vectorize(E), 4);
            C.block(4 * i, 4 * j, 4, 4) = out;
        }
    }
    return C;
}

// GKSL generator over (w, L_w) written out term by term.
ComplexMatrix optical_reference(const ComplexMatrix& H, const std::vector<std::pair<double, ComplexMatrix>>& ops,
                                const bath::BathParams& b) {
    ComplexMatrix Hls = H;
    ComplexMatrix D = ComplexMatrix::Zero(16, 16);
    for (const auto& [w, L] : ops) {
        const ComplexMatrix LdL = L.adjoint() * L;
        Hls += bath::lamb_shift_density(b, w) * LdL;
        D += bath::spectral_density(b, w) *
             (2.0 * engine::sandwich(L, L.adjoint()) - engine::left_mul(LdL) - engine::right_mul(LdL));
    }
    return engine::hamiltonian_superop(Hls) + D;
}

} // namespace

TEST_CASE("method names") {
    for (Method m : kAllMethods) {
        CHECK(parse_method(method_name(m)) == m);
    }
    CHECK(method_name(Method::RFE_TDC) == "RFE_TDC");
    CHECK_THROWS_AS(parse_method("LINDBLAD"), std::invalid_argument);
    CHECK(GeneratorSpec::of(Method::CGME).picture == Picture::interaction);
    CHECK(GeneratorSpec::of(Method::EXPZ).picture == Picture::interaction);
    CHECK(GeneratorSpec::of(Method::QOME).picture == Picture::schroedinger);
    GeneratorSpec bad = GeneratorSpec::of(Method::CGME);
    bad.tau_cg = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    GeneratorSpec wrong = GeneratorSpec::of(Method::QOME);
    wrong.picture = Picture::interaction;
    CHECK_THROWS_AS(wrong.validate(), std::invalid_argument);
}

TEST_CASE("Redfield generators") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    const Superoperator g0 = rfe_generator(p, 0.0, RedfieldVariant::tdc);
    CHECK((g0.matrix - engine::hamiltonian_superop(p.model.H)).norm() == 0.0);

    const Superoperator late = rfe_generator(p, 50.0 / kWeakDetuned.gamma, RedfieldVariant::tdc);
    const Superoperator ac = rfe_generator(p, 0.0, RedfieldVariant::ac);
    CHECK((late.matrix - ac.matrix).norm() <= 1e-6);

    testing::Gen gen(53);
    for (double t : {0.0, 0.01, 0.1, 1.0}) {
        const auto g = rfe_generator(p, t, RedfieldVariant::tdc);
        CHECK(trace_defect(g, gen) <= 1e-12);
        CHECK(hermiticity_loss(g, gen) <= 1e-12);
    }
    CHECK(trace_defect(ac, gen) <= 1e-12);
}

TEST_CASE("optical master equation") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    const ComplexMatrix K = qome_kossakowski(p);
    for (Eigen::Index a = 0; a < K.rows(); ++a) {
        CHECK(K(a, a).real() >= 0.0);
        for (Eigen::Index b = 0; b < K.cols(); ++b) {
            if (a != b) {
                CHECK(K(a, b) == cplx(0.0));
            }
        }
    }
    std::vector<std::pair<double, ComplexMatrix>> ops;
    for (const auto& e : p.jumps.entries) {
        ops.emplace_back(e.omega, e.op);
    }
    CHECK((qome_generator(p).matrix - optical_reference(p.model.H, ops, kWeakDetuned)).norm() <= 1e-14);

    testing::Gen gen(59);
    CHECK(trace_defect(qome_generator(p), gen) <= 1e-12);
    CHECK(engine::nullspace(qome_generator(p).matrix).cols() == 1);
}

TEST_CASE("Lamb shift is nonlocal only for resonant qubits") {
    // Weight of the Lamb-shift Hamiltonian on two-body Pauli products.
    auto two_body = [](const Problem& p) {
        ComplexMatrix Hls = ComplexMatrix::Zero(4, 4);
        for (const auto& e : p.jumps.entries) {
            Hls += bath::lamb_shift_density(p.bath, e.omega) * e.op.adjoint() * e.op;
        }
        double w = 0.0;
        for (int a = 1; a < 4; ++a) {
            for (int b = 1; b < 4; ++b) {
                w += std::abs((sys::pauli_product(a, b) * Hls).trace());
            }
        }
        return w;
    };
    const bath::BathParams b{0.1, 0.5, 1.3};
    CHECK(two_body(Problem::make(kDetuned, b)) <= 1e-14);
    CHECK(two_body(Problem::make(kResonant, b)) > 1e-3);
}

TEST_CASE("partial secular approximation") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    CHECK((prwa_generator(p, 0.0).matrix - qome_generator(p).matrix).norm() <= 1e-12);

    const auto r = Problem::make(kResonant, kWeakDetuned);
    for (double tol : {0.0, 0.1, 3.0}) {
        CHECK((prwa_generator(r, tol).matrix - qome_generator(r).matrix).norm() <= 1e-12);
    }

    // Detuned with clustering: resonant form at the mean frequency with the
    // summed, nonlocal operator.
    const ComplexMatrix Lp = p.jumps.at(1.0) + p.jumps.at(0.95);
    const std::vector<std::pair<double, ComplexMatrix>> ops = {{-0.975, Lp.adjoint()}, {0.975, Lp}};
    CHECK((prwa_generator(p, 0.1).matrix - optical_reference(p.model.H, ops, kWeakDetuned)).norm() <= 1e-14);
}

TEST_CASE("resonant optical equation from the exact and the clustered route") {
    const auto direct = Problem::make(kResonant, kWeakDetuned);
    Problem near;
    near.model = sys::build_model({1.0, 1.0 - 1e-11});
    near.jumps = sys::jump_decomposition(near.model, 1e-13);
    near.bath = kWeakDetuned;
    REQUIRE(near.jumps.entries.size() == 4);
    CHECK((prwa_generator(near, 0.1).matrix - qome_generator(direct).matrix).norm() <= 1e-10);
}

TEST_CASE("coarse-graining generator") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    testing::Gen gen(61);
    for (double tau : {0.05, 1.0, 20.0}) {
        const ComplexMatrix K = cgme_kossakowski(p, tau);
        CHECK(engine::hermiticity_defect(K) <= 1e-14);
        CHECK(engine::min_eigenvalue(K) >= -1e-10);
        for (double t : {0.0, 0.7, 13.0}) {
            const auto g = cgme_generator(p, tau, t);
            CHECK(trace_defect(g, gen) <= 1e-12);
            CHECK(hermiticity_loss(g, gen) <= 1e-12);
        }
    }
    CHECK_THROWS_AS(cgme_generator(p, 0.0, 0.0), std::invalid_argument);

    // Long coarse graining: secular entries become those of the optical equation.
    const double tau = 1e4 / kWeakDetuned.gamma;
    const ComplexMatrix K = cgme_kossakowski(p, tau);
    const ComplexMatrix Kq = qome_kossakowski(p);
    for (Eigen::Index a = 0; a < K.rows(); ++a) {
        CHECK(std::abs(K(a, a) - Kq(a, a)) <= 1e-4 * std::abs(Kq(a, a)));
    }

    // The Schroedinger form is the free commutator plus the generator at t = 0.
    const ComplexMatrix s = cgme_schroedinger_generator(p, 1.0).matrix;
    CHECK((s - engine::hamiltonian_superop(p.model.H) - cgme_generator(p, 1.0, 0.0).matrix).norm() <= 1e-15);
}

TEST_CASE("ExpZ map") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    CHECK((expz_map(p, 0.0).matrix - ComplexMatrix::Identity(16, 16)).norm() <= 1e-15);
    testing::Gen gen(67);
    for (double t : {0.01, 0.5, 5.0, 100.0}) {
        const auto M = expz_map(p, t);
        CHECK(engine::min_eigenvalue(choi(M.matrix)) >= -1e-10);
        CHECK(trace_loss(M, gen) <= 1e-12);
        CHECK(hermiticity_loss(M, gen) <= 1e-12);
    }
    CHECK_THROWS_AS(expz_exponent(p, -1.0), std::invalid_argument);
}

TEST_CASE("decoupled bath: every method is unitary") {
    const auto p = Problem::make(kDetuned, {0.0, 2.0, 1.0});
    const std::vector<double> times = engine::linspace(0.0, 20.0, 41);
    const ComplexMatrix rho0 = sys::basis_projector(0);
    for (Method m : kAllMethods) {
        const auto tr = propagate(GeneratorSpec::of(m), p, rho0, times);
        for (std::size_t k = 0; k < times.size(); ++k) {
            const ComplexMatrix U = sys::evolution_operator(p.model, times[k]);
            CHECK((tr.states[k] - U * rho0 * U.adjoint()).norm() <= 1e-8);
        }
    }
}

TEST_CASE("trajectories preserve trace and Hermiticity; GKSL methods preserve positivity") {
    const auto p = Problem::make(kDetuned, {0.3, 1.5, 1.0});
    const std::vector<double> times = engine::linspace(0.0, 30.0, 61);
    testing::Gen gen(71);
    const ComplexMatrix rho0 = gen.density(4);
    for (Method m : kAllMethods) {
        const auto tr = propagate(GeneratorSpec::of(m), p, rho0, times);
        double worst_trace = 0.0, worst_herm = 0.0, min_eig = 1.0;
        for (const auto& s : tr.states) {
            worst_trace = std::max(worst_trace, std::abs(s.trace() - 1.0));
            worst_herm = std::max(worst_herm, engine::hermiticity_defect(s));
            min_eig = std::min(min_eig, engine::min_eigenvalue(s));
        }
        CAPTURE(method_name(m));
        CHECK(worst_trace <= 1e-9);
        CHECK(worst_herm <= 1e-9);
        if (m != Method::RFE_TDC && m != Method::RFE_AC) {
            CHECK(min_eig >= -1e-8);
        }
    }
}

TEST_CASE("propagation is linear for every method") {
    const auto p = Problem::make(kDetuned, {0.2, 3.0, 1.0});
    const std::vector<double> times = {0.0, 0.3, 2.0, 15.0};
    testing::Gen gen(73);
    const ComplexMatrix X = gen.hermitian(4), Y = gen.hermitian(4);
    const double a = 0.7, b = -1.9;
    for (Method m : kAllMethods) {
        const auto spec = GeneratorSpec::of(m);
        const auto tx = propagate(spec, p, X, times), ty = propagate(spec, p, Y, times);
        const auto txy = propagate(spec, p, a * X + b * Y, times);
        for (std::size_t k = 0; k < times.size(); ++k) {
            CHECK((txy.states[k] - a * tx.states[k] - b * ty.states[k]).norm() <= 1e-9);
        }
    }
}

TEST_CASE("time-dependent Redfield: the saturated tail continues the integration") {
    const auto p = Problem::make(kDetuned, {0.5, 4.0, 1.0});
    const double t_sw = -std::log(1e-16) / 4.0;
    const std::vector<double> times = {0.0, 0.5 * t_sw, 0.999 * t_sw, 1.001 * t_sw, 3.0 * t_sw};
    const auto spec = GeneratorSpec::of(Method::RFE_TDC);
    const auto switched = dynamical_maps(spec, p, times);
    PropagationOptions all_ode;
    all_ode.saturation = 1e-300; // switch time beyond the grid
    const auto ode = dynamical_maps(spec, p, times, all_ode);
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK((switched[k] - ode[k]).norm() <= 1e-8);
    }
}

TEST_CASE("Redfield loses positivity at strong coupling") {
    // Correlation time twice the system time scale.
    const auto p = Problem::make(kDetuned, {1.0, 0.5, 1.0});
    const auto tr = propagate(GeneratorSpec::of(Method::RFE_TDC), p, sys::basis_projector(0),
                              engine::linspace(0.0, 60.0, 601));
    double min_eig = 1.0;
    for (const auto& s : tr.states) {
        min_eig = std::min(min_eig, engine::min_eigenvalue(s));
    }
    MESSAGE("RFE_TDC minimum eigenvalue " << min_eig);
    CHECK(min_eig < -1e-8);
}

TEST_CASE("propagate rejects malformed input") {
    const auto p = Problem::make(kDetuned, kWeakDetuned);
    const std::vector<double> times = {0.0, 1.0};
    CHECK_THROWS_AS(propagate(GeneratorSpec::of(Method::QOME), p, ComplexMatrix::Identity(2, 2), times),
                    std::invalid_argument);
    ComplexMatrix nh = ComplexMatrix::Zero(4, 4);
    nh(0, 1) = 1.0;
    CHECK_THROWS_AS(propagate(GeneratorSpec::of(Method::QOME), p, nh, times), std::invalid_argument);
    const std::vector<double> backwards = {0.0, 2.0, 1.0};
    CHECK_THROWS_AS(propagate(GeneratorSpec::of(Method::QOME), p, sys::basis_projector(0), backwards),
                    std::invalid_argument);
}
