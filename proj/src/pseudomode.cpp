#include "qmeb/pseudomode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

namespace qmeb::pseudomode {

namespace {

// sigma_x (x) sigma_x eigenvalue of |++>, |+->, |-+>, |-->.
constexpr int kSystemParity[4] = {1, -1, -1, 1};

ComplexMatrix sigma_x_product_basis() {
    const double r = 1.0 / std::sqrt(2.0);
    ComplexVector plus(2), minus(2);
    plus << r, r;
    minus << r, -r;
    ComplexMatrix W(4, 4);
    W.col(0) = engine::kron(plus, plus);
    W.col(1) = engine::kron(plus, minus);
    W.col(2) = engine::kron(minus, plus);
    W.col(3) = engine::kron(minus, minus);
    return W;
}

ComplexMatrix lowering(int d) {
    ComplexMatrix b = ComplexMatrix::Zero(d, d);
    for (int k = 1; k < d; ++k) {
        b(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    return b;
}

SparseMatrix sparse_identity(Eigen::Index n) {
    SparseMatrix id(n, n);
    id.setIdentity();
    return id;
}

SparseMatrix kron_sparse(const SparseMatrix& A, const SparseMatrix& B) {
    SparseMatrix out = Eigen::kroneckerProduct(A, B);
    return out;
}

ComplexMatrix total_rotation(const PseudoModeModel& pm) {
    return engine::kron(pm.W, ComplexMatrix::Identity(pm.d, pm.d));
}

// Working-basis operator split into its two sector vectors.
struct SplitVector {
    ComplexVector even;
    ComplexVector odd;
};

SplitVector split(const PseudoModeModel& pm, const ComplexMatrix& Pw) {
    const Eigen::Index N = pm.dim();
    SplitVector s{ComplexVector::Zero(static_cast<Eigen::Index>(pm.even.positions.size())),
                  ComplexVector::Zero(static_cast<Eigen::Index>(pm.odd.positions.size()))};
    for (Eigen::Index j = 0; j < N; ++j) {
        for (Eigen::Index i = 0; i < N; ++i) {
            const auto pos = pm.local_position[static_cast<std::size_t>(i + N * j)];
            if (&pm.sector_of(i, j) == &pm.even) {
                s.even(pos) = Pw(i, j);
            } else {
                s.odd(pos) = Pw(i, j);
            }
        }
    }
    return s;
}

ComplexMatrix join(const PseudoModeModel& pm, const ComplexVector& even, const ComplexVector* odd) {
    const Eigen::Index N = pm.dim();
    ComplexMatrix Pw = ComplexMatrix::Zero(N, N);
    for (std::size_t k = 0; k < pm.even.positions.size(); ++k) {
        const auto v = pm.even.positions[k];
        Pw(v % N, v / N) = even(static_cast<Eigen::Index>(k));
    }
    if (odd) {
        for (std::size_t k = 0; k < pm.odd.positions.size(); ++k) {
            const auto v = pm.odd.positions[k];
            Pw(v % N, v / N) = (*odd)(static_cast<Eigen::Index>(k));
        }
    }
    return Pw;
}

// Positions of the elements ((s,k),(s',k)) that feed the reduced element (s,s').
struct TraceEntry {
    int s;
    int sp;
    Eigen::Index position;
};

std::vector<TraceEntry> trace_entries(const PseudoModeModel& pm, bool even) {
    const Eigen::Index N = pm.dim();
    std::vector<TraceEntry> out;
    for (int sp = 0; sp < 4; ++sp) {
        for (int s = 0; s < 4; ++s) {
            if ((kSystemParity[s] * kSystemParity[sp] > 0) != even) {
                continue;
            }
            for (int k = 0; k < pm.d; ++k) {
                const Eigen::Index i = s * pm.d + k;
                const Eigen::Index j = sp * pm.d + k;
                out.push_back({s, sp, pm.local_position[static_cast<std::size_t>(i + N * j)]});
            }
        }
    }
    return out;
}

// Sector-resolved batch of reduced initial operators embedded with the vacuum.
struct Batch {
    ComplexMatrix even;
    ComplexMatrix odd;
    bool has_even{false};
    bool has_odd{false};
};

Batch embed_batch(const PseudoModeModel& pm, std::span<const ComplexMatrix> rho0s) {
    const Eigen::Index N = pm.dim();
    const auto m = static_cast<Eigen::Index>(rho0s.size());
    Batch b;
    b.even = ComplexMatrix::Zero(static_cast<Eigen::Index>(pm.even.positions.size()), m);
    b.odd = ComplexMatrix::Zero(static_cast<Eigen::Index>(pm.odd.positions.size()), m);
    for (Eigen::Index c = 0; c < m; ++c) {
        const ComplexMatrix& rho = rho0s[static_cast<std::size_t>(c)];
        if (rho.rows() != 4 || rho.cols() != 4) {
            throw std::invalid_argument("reference propagation: reduced operators must be 4x4");
        }
        const ComplexMatrix rw = pm.W.adjoint() * rho * pm.W;
        for (int sp = 0; sp < 4; ++sp) {
            for (int s = 0; s < 4; ++s) {
                const Eigen::Index i = s * pm.d;
                const Eigen::Index j = sp * pm.d;
                const auto pos = pm.local_position[static_cast<std::size_t>(i + N * j)];
                if (rw(s, sp) == cplx{0.0, 0.0}) {
                    continue;
                }
                if (kSystemParity[s] * kSystemParity[sp] > 0) {
                    b.even(pos, c) = rw(s, sp);
                    b.has_even = true;
                } else {
                    b.odd(pos, c) = rw(s, sp);
                    b.has_odd = true;
                }
            }
        }
    }
    return b;
}

// Adds the partial trace of every column of Y into out[col] (working basis).
void accumulate_reduced(const ComplexMatrix& Y, const std::vector<TraceEntry>& entries,
                        std::vector<ComplexMatrix>& out) {
    for (Eigen::Index c = 0; c < Y.cols(); ++c) {
        ComplexMatrix& r = out[static_cast<std::size_t>(c)];
        for (const auto& e : entries) {
            r(e.s, e.sp) += Y(e.position, c);
        }
    }
}

void rotate_back(const PseudoModeModel& pm, std::vector<std::vector<ComplexMatrix>>& result) {
    for (auto& series : result) {
        for (auto& r : series) {
            r = pm.W * r * pm.W.adjoint();
        }
    }
}

} // namespace

void PseudoModeConfig::validate() const {
    if (d_init < 2) {
        throw std::invalid_argument("PseudoModeConfig: d_init must be at least 2");
    }
    if (d_step < 1) {
        throw std::invalid_argument("PseudoModeConfig: d_step must be at least 1");
    }
    if (!(state_tol > 0.0 && state_tol < 1.0) || !(tmax_tol > 0.0 && tmax_tol < 1.0)) {
        throw std::invalid_argument("PseudoModeConfig: tolerances must lie in (0, 1)");
    }
    if (d_cap < d_init) {
        throw std::invalid_argument("PseudoModeConfig: d_cap below d_init");
    }
    if (!(horizon_factor > 0.0)) {
        throw std::invalid_argument("PseudoModeConfig: horizon_factor must be positive");
    }
    if (coarse_points < 8 || coarse_points % 4 != 0) {
        throw std::invalid_argument("PseudoModeConfig: coarse_points must be a multiple of 4, at least 8");
    }
    if (!(resolution > 0.0 && resolution < 1.0)) {
        throw std::invalid_argument("PseudoModeConfig: resolution must lie in (0, 1)");
    }
}

ComplexMatrix PseudoModeModel::apply(const ComplexMatrix& P) const {
    const ComplexMatrix n = a.adjoint() * a;
    return -I * (H_P * P - P * H_P) + gamma * (2.0 * a * P * a.adjoint() - n * P - P * n);
}

PseudoModeModel build_pseudomode(const sys::SystemModel& model, const bath::BathParams& bath, int d) {
    if (d < 2) {
        throw std::invalid_argument("build_pseudomode: truncation d must be at least 2");
    }
    bath.validate();
    PseudoModeModel pm;
    pm.d = d;
    pm.gamma = bath.gamma;
    const Eigen::Index N = 4 * static_cast<Eigen::Index>(d);

    const ComplexMatrix b = lowering(d);
    const ComplexMatrix id_d = ComplexMatrix::Identity(d, d);
    const ComplexMatrix id_s = ComplexMatrix::Identity(4, 4);
    const double g = std::sqrt(bath.eta);
    pm.H_P = engine::kron(model.H, id_d) + g * engine::kron(model.L, b + b.adjoint()) +
             bath.omega0 * engine::kron(id_s, b.adjoint() * b);
    pm.a = engine::kron(id_s, b);
    pm.W = sigma_x_product_basis();

    // Working basis: system factor rotated by W.
    const ComplexMatrix Hs = pm.W.adjoint() * model.H * pm.W;
    const ComplexMatrix Ls = pm.W.adjoint() * model.L * pm.W;
    const ComplexMatrix Hw_dense = engine::kron(Hs, id_d) + g * engine::kron(Ls, b + b.adjoint()) +
                                   bath.omega0 * engine::kron(id_s, b.adjoint() * b);
    const SparseMatrix Hw = Hw_dense.sparseView();
    const SparseMatrix aw = pm.a.sparseView();
    const SparseMatrix nw = SparseMatrix(aw.adjoint()) * aw;
    const SparseMatrix id = sparse_identity(N);

    SparseMatrix full = cplx{0.0, -1.0} * (kron_sparse(id, Hw) - kron_sparse(SparseMatrix(Hw.transpose()), id));
    full += bath.gamma * (2.0 * kron_sparse(SparseMatrix(aw.conjugate()), aw) - kron_sparse(id, nw) -
                          kron_sparse(SparseMatrix(nw.transpose()), id));
    full.prune(cplx{0.0, 0.0});

    pm.parity.resize(static_cast<std::size_t>(N));
    for (int s = 0; s < 4; ++s) {
        for (int k = 0; k < d; ++k) {
            pm.parity[static_cast<std::size_t>(s * d + k)] = kSystemParity[s] * (k % 2 == 0 ? 1 : -1);
        }
    }
    const Eigen::Index N2 = N * N;
    pm.local_position.resize(static_cast<std::size_t>(N2));
    std::vector<char> is_even(static_cast<std::size_t>(N2));
    for (Eigen::Index v = 0; v < N2; ++v) {
        const bool e = pm.parity[static_cast<std::size_t>(v % N)] * pm.parity[static_cast<std::size_t>(v / N)] > 0;
        is_even[static_cast<std::size_t>(v)] = e;
        auto& positions = e ? pm.even.positions : pm.odd.positions;
        pm.local_position[static_cast<std::size_t>(v)] = static_cast<Eigen::Index>(positions.size());
        positions.push_back(v);
    }

    std::vector<Eigen::Triplet<cplx>> te, to;
    te.reserve(static_cast<std::size_t>(full.nonZeros()));
    for (Eigen::Index c = 0; c < full.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(full, c); it; ++it) {
            const auto r = it.row();
            if (is_even[static_cast<std::size_t>(r)] != is_even[static_cast<std::size_t>(c)]) {
                throw std::logic_error("build_pseudomode: generator couples the parity sectors");
            }
            const auto lr = pm.local_position[static_cast<std::size_t>(r)];
            const auto lc = pm.local_position[static_cast<std::size_t>(c)];
            (is_even[static_cast<std::size_t>(c)] ? te : to).emplace_back(lr, lc, it.value());
        }
    }
    const auto ne = static_cast<Eigen::Index>(pm.even.positions.size());
    const auto no = static_cast<Eigen::Index>(pm.odd.positions.size());
    pm.even.generator.resize(ne, ne);
    pm.even.generator.setFromTriplets(te.begin(), te.end());
    pm.odd.generator.resize(no, no);
    pm.odd.generator.setFromTriplets(to.begin(), to.end());
    return pm;
}

ComplexMatrix embed(const ComplexMatrix& rho, int d) {
    ComplexMatrix vac = ComplexMatrix::Zero(d, d);
    vac(0, 0) = 1.0;
    return engine::kron(rho, vac);
}

ComplexMatrix partial_trace(const ComplexMatrix& P, int d) {
    if (d < 1 || P.rows() != P.cols() || P.rows() % d != 0) {
        throw std::invalid_argument("partial_trace: dimension is not a multiple of d");
    }
    const Eigen::Index ns = P.rows() / d;
    ComplexMatrix r = ComplexMatrix::Zero(ns, ns);
    for (Eigen::Index s = 0; s < ns; ++s) {
        for (Eigen::Index sp = 0; sp < ns; ++sp) {
            cplx acc = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) {
                acc += P(s * d + k, sp * d + k);
            }
            r(s, sp) = acc;
        }
    }
    return r;
}

ComplexMatrix steady_state(const PseudoModeModel& pm) {
    const Eigen::Index N = pm.dim();
    const SparseMatrix& G = pm.even.generator;
    const Eigen::Index m = G.rows();
    const Eigen::Index row = pm.local_position[0]; // element (0, 0)

    // Replace the (0,0) balance row, which is redundant because the generator
    // preserves the trace, by the normalization tr P = 1.
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<std::size_t>(G.nonZeros()) + static_cast<std::size_t>(N));
    for (Eigen::Index c = 0; c < G.outerSize(); ++c) {
        for (SparseMatrix::InnerIterator it(G, c); it; ++it) {
            if (it.row() != row) {
                trip.emplace_back(it.row(), c, it.value());
            }
        }
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        trip.emplace_back(row, pm.local_position[static_cast<std::size_t>(i + N * i)], 1.0);
    }
    SparseMatrix A(m, m);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();

    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    if (lu.info() != Eigen::Success) {
        throw NumericalError("steady_state: generator kernel is degenerate (singular normalized system)");
    }
    ComplexVector rhs = ComplexVector::Zero(m);
    rhs(row) = 1.0;
    const ComplexVector x = lu.solve(rhs);

    // A second solve against a fixed pseudo-random right-hand side bounds the
    // conditioning; a multi-dimensional kernel makes the normalized system singular.
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ComplexVector z(m);
    for (Eigen::Index k = 0; k < m; ++k) {
        z(k) = cplx{u(rng), u(rng)};
    }
    const ComplexVector y = lu.solve(z);
    double a_norm = 0.0;
    for (Eigen::Index c = 0; c < A.outerSize(); ++c) {
        double col = 0.0;
        for (SparseMatrix::InnerIterator it(A, c); it; ++it) {
            col += std::abs(it.value());
        }
        a_norm = std::max(a_norm, col);
    }
    const double cond = a_norm * y.lpNorm<1>() / z.lpNorm<1>();
    if (!x.allFinite() || !std::isfinite(cond) || cond > 1e13) {
        std::ostringstream msg;
        msg << "steady_state: generator kernel is degenerate (condition estimate " << cond << ")";
        throw NumericalError(msg.str());
    }

    const ComplexMatrix T = total_rotation(pm);
    ComplexMatrix P = T * join(pm, x, nullptr) * T.adjoint();
    P = 0.5 * (P + P.adjoint()).eval();
    P /= P.trace();

    const double residual = engine::hs_norm(pm.apply(P)) / engine::hs_norm(P);
    if (!(residual <= 1e-8)) {
        std::ostringstream msg;
        msg << "steady_state: residual " << residual << " after the kernel solve";
        throw NumericalError(msg.str());
    }
    return P;
}

TruncationResult converge_truncation(const sys::SystemModel& model, const bath::BathParams& bath,
                                     const PseudoModeConfig& cfg) {
    cfg.validate();
    bath.validate();
    TruncationResult res;
    if (bath.eta == 0.0) {
        res.d = cfg.d_init;
        res.P_inf = embed(ComplexMatrix::Identity(4, 4) / 4.0, cfg.d_init);
        return res;
    }
    ComplexMatrix previous;
    for (int d = cfg.d_init; d <= cfg.d_cap; d += cfg.d_step) {
        engine::check_deadline();
        const PseudoModeModel pm = build_pseudomode(model, bath, d);
        ComplexMatrix P = steady_state(pm);
        const ComplexMatrix rho = partial_trace(P, d);
        if (previous.size() > 0) {
            const double change = engine::hs_norm(rho - previous) / engine::hs_norm(rho);
            res.ladder.emplace_back(d, change);
            if (change < cfg.state_tol) {
                res.d = d;
                res.P_inf = std::move(P);
                return res;
            }
        }
        previous = rho;
    }
    std::ostringstream msg;
    msg << "converge_truncation: no convergence up to d = " << cfg.d_cap << " (eta = " << bath.eta
        << ", gamma = " << bath.gamma << ", last relative change "
        << (res.ladder.empty() ? std::numeric_limits<double>::quiet_NaN() : res.ladder.back().second) << ")";
    throw NumericalError(msg.str());
}

double horizon_cap(const bath::BathParams& bath, const PseudoModeConfig& cfg) {
    double scale = std::max(1.0 / bath.gamma, 1.0);
    if (bath.eta > 0.0) {
        scale = std::max(scale, bath.gamma / bath.eta);
    }
    return cfg.horizon_factor * scale;
}

double determine_tmax(const PseudoModeModel& pm, const ComplexMatrix& P_inf, const ComplexMatrix& P0,
                      const PseudoModeConfig& cfg, double cap) {
    cfg.validate();
    const Eigen::Index N = pm.dim();
    if (P_inf.rows() != N || P0.rows() != N) {
        throw std::invalid_argument("determine_tmax: operators do not match the truncation");
    }
    const ComplexMatrix T = total_rotation(pm);
    const SplitVector inf = split(pm, T.adjoint() * P_inf * T);
    const SplitVector y0 = split(pm, T.adjoint() * P0 * T);
    const double inf_norm = std::sqrt(inf.even.squaredNorm() + inf.odd.squaredNorm());

    const ComplexMatrix Ge(pm.even.generator);
    const ComplexMatrix Go(pm.odd.generator);
    auto deviation = [&](const ComplexVector& e, const ComplexVector& o) {
        return std::sqrt((e - inf.even).squaredNorm() + (o - inf.odd).squaredNorm()) / inf_norm;
    };

    const int n = cfg.coarse_points;
    double horizon = std::max(1.0 / pm.gamma, 1.0);
    double h = horizon / n;
    ComplexMatrix Me = engine::expm(Ge * h);
    ComplexMatrix Mo = engine::expm(Go * h);

    std::vector<double> dev{deviation(y0.even, y0.odd)};
    ComplexVector ye = y0.even, yo = y0.odd;
    auto advance = [&](int to) {
        while (static_cast<int>(dev.size()) <= to) {
            engine::check_deadline();
            ye = Me * ye;
            yo = Mo * yo;
            dev.push_back(deviation(ye, yo));
        }
    };
    advance(n);
    for (;;) {
        const bool settled = std::all_of(dev.begin() + (n - n / 4), dev.end(),
                                         [&](double x) { return x < cfg.tmax_tol; });
        if (settled) {
            break;
        }
        if (2.0 * horizon > cap) {
            std::ostringstream msg;
            msg << "determine_tmax: no approach to the steady state within the horizon cap " << cap
                << " (relative distance " << dev.back() << " at t = " << horizon << ")";
            throw NumericalError(msg.str());
        }
        horizon *= 2.0;
        h *= 2.0;
        Me = Me * Me;
        Mo = Mo * Mo;
        std::vector<double> kept;
        for (std::size_t k = 0; k < dev.size(); k += 2) {
            kept.push_back(dev[k]);
        }
        dev.swap(kept);
        advance(n);
    }

    int last_bad = -1;
    for (int k = 0; k <= n; ++k) {
        if (!(dev[static_cast<std::size_t>(k)] < cfg.tmax_tol)) {
            last_bad = k;
        }
    }
    if (last_bad < 0) {
        return h;
    }
    double t_lo = last_bad * h;
    double t_hi = t_lo + h;
    if (t_hi - t_lo <= cfg.resolution * t_hi) {
        return t_hi;
    }

    // Bisection inside the last coarse interval that still violates the criterion.
    ComplexVector le = y0.even, lo = y0.odd;
    for (int k = 0; k < last_bad; ++k) {
        le = Me * le;
        lo = Mo * lo;
    }
    while (t_hi - t_lo > cfg.resolution * t_hi) {
        engine::check_deadline();
        const double mid = 0.5 * (t_lo + t_hi);
        const ComplexVector me = engine::expm(Ge * (mid - t_lo)) * le;
        const ComplexVector mo = engine::expm(Go * (mid - t_lo)) * lo;
        if (deviation(me, mo) < cfg.tmax_tol) {
            t_hi = mid;
        } else {
            t_lo = mid;
            le = me;
            lo = mo;
        }
    }
    return t_hi;
}

ReferenceSetup prepare_reference(const sys::SystemParams& system, const bath::BathParams& bath,
                                 const PseudoModeConfig& cfg) {
    ReferenceSetup out;
    sys::SystemParams used = system;
    if (system.resonant()) {
        used.omegaB = 0.95 * system.omegaA;
        out.borrowed = true;
    }
    const sys::SystemModel model = sys::build_model(used);
    const TruncationResult tr = converge_truncation(model, bath, cfg);
    const PseudoModeModel pm = build_pseudomode(model, bath, tr.d);
    const ComplexMatrix P0 = embed(sys::basis_projector(0), tr.d);
    out.d = tr.d;
    out.t_max = determine_tmax(pm, tr.P_inf, P0, cfg, horizon_cap(bath, cfg));
    return out;
}

ReferencePropagator::ReferencePropagator(const PseudoModeModel& pm) : pm_(pm) {}

std::vector<std::vector<ComplexMatrix>> ReferencePropagator::reduced(std::span<const ComplexMatrix> rho0s,
                                                                     double unit,
                                                                     std::span<const std::int64_t> indices) const {
    const Batch batch = embed_batch(pm_, rho0s);
    std::vector<std::vector<ComplexMatrix>> result(
        rho0s.size(), std::vector<ComplexMatrix>(indices.size(), ComplexMatrix::Zero(4, 4)));
    auto run = [&](const Sector& sector, const ComplexMatrix& Y0, bool even) {
        const auto entries = trace_entries(pm_, even);
        engine::SemigroupPropagator prop(ComplexMatrix(sector.generator), unit);
        prop.propagate(Y0, indices, [&](std::size_t k, const ComplexMatrix& Y) {
            for (std::size_t c = 0; c < rho0s.size(); ++c) {
                ComplexMatrix& r = result[c][k];
                for (const auto& e : entries) {
                    r(e.s, e.sp) += Y(e.position, static_cast<Eigen::Index>(c));
                }
            }
        });
    };
    if (batch.has_even) {
        run(pm_.even, batch.even, true);
    }
    if (batch.has_odd) {
        run(pm_.odd, batch.odd, false);
    }
    rotate_back(pm_, result);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] == 0) {
            for (std::size_t c = 0; c < rho0s.size(); ++c) {
                result[c][k] = rho0s[c];
            }
        }
    }
    return result;
}

Lattice lattice_of(std::span<const double> times, double rel_tol) {
    Lattice l;
    if (times.empty()) {
        return l;
    }
    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double g = times[k] - times[k - 1];
        if (g < 0.0) {
            throw std::invalid_argument("lattice_of: times must be ascending");
        }
        if (g > 0.0) {
            gap = std::min(gap, g);
        }
    }
    if (!std::isfinite(gap)) {
        gap = times.front() > 0.0 ? times.front() : 1.0;
    }
    const double scale = std::max(std::abs(times.back()), gap);
    std::vector<std::int64_t> idx;
    for (double t : times) {
        const double q = t / gap;
        if (q > 1e12) {
            return l;
        }
        const auto k = static_cast<std::int64_t>(std::llround(q));
        if (std::abs(static_cast<double>(k) * gap - t) > rel_tol * scale) {
            return l;
        }
        idx.push_back(k);
    }
    l.unit = gap;
    l.indices = std::move(idx);
    return l;
}

Trajectory reference_trajectory(const PseudoModeModel& pm, const ComplexMatrix& rho0,
                                std::span<const double> times) {
    Trajectory out;
    if (times.empty()) {
        return out;
    }
    if (times.front() < 0.0) {
        throw std::invalid_argument("reference_trajectory: times must be non-negative");
    }
    // Propagation always starts from t = 0.
    std::vector<double> grid;
    const bool prepend = times.front() > 0.0;
    if (prepend) {
        grid.push_back(0.0);
    }
    grid.insert(grid.end(), times.begin(), times.end());
    const ComplexMatrix inputs[] = {rho0};

    std::vector<ComplexMatrix> states;
    const Lattice lat = lattice_of(grid);
    if (!lat.indices.empty() && grid.size() > 1) {
        states = ReferencePropagator(pm).reduced(inputs, lat.unit, lat.indices).front();
    } else {
        const Batch batch = embed_batch(pm, inputs);
        const auto entries_e = trace_entries(pm, true);
        const auto entries_o = trace_entries(pm, false);
        const ComplexMatrix Ge(pm.even.generator);
        const ComplexMatrix Go(pm.odd.generator);
        ComplexMatrix ye = batch.even, yo = batch.odd;
        std::map<double, std::pair<ComplexMatrix, ComplexMatrix>> cache;
        std::vector<std::vector<ComplexMatrix>> result(1);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            engine::check_deadline();
            if (k > 0) {
                const double dt = grid[k] - grid[k - 1];
                if (dt > 0.0) {
                    auto it = cache.find(dt);
                    if (it == cache.end()) {
                        it = cache.emplace(dt, std::make_pair(engine::expm(Ge * dt), engine::expm(Go * dt))).first;
                    }
                    ye = it->second.first * ye;
                    yo = it->second.second * yo;
                }
            }
            std::vector<ComplexMatrix> slot{ComplexMatrix::Zero(4, 4)};
            accumulate_reduced(ye, entries_e, slot);
            accumulate_reduced(yo, entries_o, slot);
            result[0].push_back(slot[0]);
        }
        rotate_back(pm, result);
        states = std::move(result[0]);
    }
    if (prepend) {
        states.erase(states.begin());
    } else {
        states.front() = rho0; // the sector round trip costs a few ulps
    }
    out.times.assign(times.begin(), times.end());
    out.states = std::move(states);
    return out;
}

} // namespace qmeb::pseudomode
