#include "qmeb/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace qmeb::analysis {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_same_grid(const Trajectory& a, const Trajectory& b) {
    if (a.times.size() != b.times.size() || a.states.size() != b.states.size() ||
        a.states.size() != a.times.size()) {
        throw std::invalid_argument("trajectories are not on the same grid");
    }
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        const double scale = std::max(1.0, std::abs(a.times[k]));
        if (std::abs(a.times[k] - b.times[k]) > 1e-12 * scale) {
            throw std::invalid_argument("trajectories are not on the same grid");
        }
    }
}

} // namespace

std::array<PauliLabel, 16> all_labels() {
    std::array<PauliLabel, 16> out{};
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
            out[static_cast<std::size_t>(4 * a + b)] = {a, b};
        }
    }
    return out;
}

std::vector<double> partial_deviation(const Trajectory& ref, const Trajectory& approx) {
    check_same_grid(ref, approx);
    std::vector<double> out(ref.states.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = 0.25 * engine::hs_norm(ref.states[k] - approx.states[k]);
    }
    return out;
}

BoundResult error_bound(std::span<const Trajectory> refs, std::span<const Trajectory> approx) {
    if (refs.size() != 16 || approx.size() != 16) {
        throw std::invalid_argument("error_bound: need the 16 Pauli-operator trajectories of each side");
    }
    BoundResult res;
    res.summed.assign(refs[0].times.size(), 0.0);
    for (std::size_t i = 0; i < 16; ++i) {
        res.components[i] = partial_deviation(refs[i], approx[i]);
        if (res.components[i].size() != res.summed.size()) {
            throw std::invalid_argument("error_bound: grid mismatch between labels");
        }
        for (std::size_t k = 0; k < res.summed.size(); ++k) {
            res.summed[k] += res.components[i][k];
        }
    }
    for (double s : res.summed) {
        res.bound = std::max(res.bound, s);
    }
    return res;
}

SeriesMax relative_error(const Trajectory& ref, const Trajectory& approx) {
    check_same_grid(ref, approx);
    SeriesMax out;
    out.series.resize(ref.states.size());
    for (std::size_t k = 0; k < ref.states.size(); ++k) {
        const double n = engine::hs_norm(ref.states[k]);
        if (!(n > 0.0)) {
            throw std::invalid_argument("relative_error: reference state has zero norm");
        }
        out.series[k] = engine::hs_norm(ref.states[k] - approx.states[k]) / n;
        out.max = std::max(out.max, out.series[k]);
    }
    return out;
}

EigenTrack min_eigenvalue_track(const Trajectory& traj) {
    EigenTrack out;
    out.series.resize(traj.states.size());
    out.min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        out.series[k] = engine::min_eigenvalue(traj.states[k]);
        if (out.series[k] < out.min) {
            out.min = out.series[k];
            out.argmin = traj.times[k];
        }
    }
    out.flag = out.min < kPositivityThreshold;
    return out;
}

Trajectory tau_averaged_reference(const Trajectory& ref, const sys::SystemModel& model, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("tau_averaged_reference: tau must be positive");
    }
    const std::size_t n = ref.times.size();
    if (ref.states.size() != n) {
        throw std::invalid_argument("tau_averaged_reference: malformed trajectory");
    }
    for (std::size_t k = 1; k < n; ++k) {
        const double h = ref.times[k] - ref.times[k - 1];
        if (h < 0.0) {
            throw std::invalid_argument("tau_averaged_reference: times must be ascending");
        }
        if (h > tau / 10.0 * (1.0 + 1e-12)) {
            throw std::invalid_argument("tau_averaged_reference: grid step exceeds tau / 10");
        }
    }
    // Interaction picture: rho~(s) = U(s)^dag rho(s) U(s), U(s) = e^{-iHs}.
    std::vector<ComplexMatrix> tilde(n);
    std::vector<ComplexMatrix> U(n);
    for (std::size_t k = 0; k < n; ++k) {
        U[k] = sys::evolution_operator(model, ref.times[k]);
        tilde[k] = U[k].adjoint() * ref.states[k] * U[k];
    }
    // Cumulative trapezoid C[k] = int_{t_0}^{t_k} rho~.
    std::vector<ComplexMatrix> C(n);
    if (n > 0) {
        C[0] = ComplexMatrix::Zero(tilde[0].rows(), tilde[0].cols());
    }
    for (std::size_t k = 1; k < n; ++k) {
        C[k] = C[k - 1] + 0.5 * (ref.times[k] - ref.times[k - 1]) * (tilde[k] + tilde[k - 1]);
    }

    Trajectory out;
    out.times = ref.times;
    out.states.resize(n);
    std::size_t j = 0; // first index with t_j > window start
    for (std::size_t k = 0; k < n; ++k) {
        const double t = ref.times[k];
        const double w = std::min(t - ref.times.front(), tau);
        if (w <= 0.0) {
            out.states[k] = ref.states[k];
            continue;
        }
        const double a = t - w;
        while (j < k && ref.times[j] <= a) {
            ++j;
        }
        // a lies in [t_{j-1}, t_j)
        const std::size_t i0 = j - 1;
        const double h = ref.times[j] - ref.times[i0];
        const double theta = h > 0.0 ? (a - ref.times[i0]) / h : 0.0;
        const ComplexMatrix at_a = (1.0 - theta) * tilde[i0] + theta * tilde[j];
        const ComplexMatrix integral = C[k] - C[j] + 0.5 * (ref.times[j] - a) * (at_a + tilde[j]);
        const ComplexMatrix avg = integral / w;
        out.states[k] = U[k] * avg * U[k].adjoint();
    }
    return out;
}

Observables observables(const Trajectory& traj) {
    const ComplexMatrix local = sys::pauli_product(0, 3);
    const ComplexMatrix nonlocal = sys::pauli_product(3, 3);
    Observables out;
    out.local.reserve(traj.states.size());
    out.nonlocal.reserve(traj.states.size());
    for (const auto& rho : traj.states) {
        out.local.push_back((rho * local).trace().real());
        out.nonlocal.push_back((rho * nonlocal).trace().real());
    }
    return out;
}

double fit_scaling(std::span<const double> x, std::span<const double> y, double min_decades) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("fit_scaling: x and y differ in length");
    }
    if (x.size() < 4) {
        throw std::invalid_argument("fit_scaling: need at least 4 points");
    }
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) {
            throw std::invalid_argument("fit_scaling: values must be positive");
        }
        lo = std::min(lo, x[k]);
        hi = std::max(hi, x[k]);
    }
    if (std::log10(hi / lo) < min_decades - 1e-12) {
        throw std::invalid_argument("fit_scaling: points span too few decades");
    }
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += std::log(x[k]);
        sy += std::log(y[k]);
    }
    const double mx = sx / n, my = sy / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = std::log(x[k]) - mx;
        sxy += dx * (std::log(y[k]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

TimeGrid measurement_grid(double t_max, double gamma, std::size_t uniform_points, std::size_t early_points,
                          double early_gammas) {
    if (!(t_max > 0.0) || !std::isfinite(t_max)) {
        throw std::invalid_argument("measurement_grid: t_max must be positive");
    }
    if (!(gamma > 0.0) || uniform_points < 2 || early_points < 2 || !(early_gammas > 0.0)) {
        throw std::invalid_argument("measurement_grid: invalid grid parameters");
    }
    const double h2 = t_max / static_cast<double>(uniform_points - 1);
    const double window = std::min(early_gammas / gamma, t_max);
    const double h1 = window / static_cast<double>(early_points - 1);
    int m = 0;
    while (h2 / std::ldexp(1.0, m) > h1 * (1.0 + 1e-12) && m < 60) {
        ++m;
    }
    const std::int64_t stride = std::int64_t{1} << m;
    TimeGrid g;
    g.unit = h2 / static_cast<double>(stride);
    std::vector<std::int64_t> idx;
    for (std::size_t j = 0; j < uniform_points; ++j) {
        idx.push_back(static_cast<std::int64_t>(j) * stride);
    }
    for (std::size_t i = 0; i < early_points; ++i) {
        idx.push_back(static_cast<std::int64_t>(i));
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    g.indices = std::move(idx);
    g.times.reserve(g.indices.size());
    for (auto k : g.indices) {
        g.times.push_back(static_cast<double>(k) * g.unit);
    }
    g.times.back() = t_max;
    return g;
}

TimeGrid uniform_grid(double t_end, std::size_t n) {
    if (!(t_end > 0.0) || n < 2) {
        throw std::invalid_argument("uniform_grid: need t_end > 0 and at least two points");
    }
    TimeGrid g;
    g.unit = t_end / static_cast<double>(n - 1);
    for (std::size_t k = 0; k < n; ++k) {
        g.indices.push_back(static_cast<std::int64_t>(k));
        g.times.push_back(static_cast<double>(k) * g.unit);
    }
    g.times.back() = t_end;
    return g;
}

ComplexMatrix initial_state() { return sys::basis_projector(0); }

masters::GeneratorSpec method_spec(masters::Method m, const PointOptions& opt) {
    auto spec = masters::GeneratorSpec::of(m);
    spec.tau_cg = opt.tau_cg;
    spec.cluster_tol = opt.cluster_tol;
    return spec;
}

PointResult evaluate_point(const sys::SystemParams& system, const bath::BathParams& bath,
                           std::span<const masters::Method> methods, const PointOptions& opt) {
    PointResult res;
    res.eta = bath.eta;
    res.gamma = bath.gamma;
    const auto setup = pseudomode::prepare_reference(system, bath, opt.pseudomode);
    res.d = setup.d;
    res.t_max = setup.t_max;

    const sys::SystemModel model = sys::build_model(system);
    const auto pm = pseudomode::build_pseudomode(model, bath, setup.d);
    const TimeGrid grid =
        measurement_grid(setup.t_max, bath.gamma, opt.uniform_points, opt.early_points, opt.early_gammas);

    std::vector<ComplexMatrix> inputs;
    if (opt.with_bound) {
        for (const auto& l : all_labels()) {
            inputs.push_back(sys::pauli_product(l.alpha, l.beta));
        }
    }
    const ComplexMatrix rho0 = sys::basis_projector(opt.initial_state);
    inputs.push_back(rho0);
    const auto reduced = pseudomode::ReferencePropagator(pm).reduced(inputs, grid.unit, grid.indices);
    std::vector<Trajectory> refs;
    for (const auto& states : reduced) {
        refs.push_back({grid.times, states});
    }
    const Trajectory& ref_state = refs.back();

    const auto problem = masters::Problem::make(system, bath);
    for (masters::Method m : methods) {
        MethodOutcome o;
        o.method = m;
        o.epsilon_bound = kNaN;
        try {
            const auto maps = masters::dynamical_maps(method_spec(m, opt), problem, grid.times, opt.propagation);
            const Trajectory traj = masters::apply_maps(maps, grid.times, rho0);
            o.rel_err_max = relative_error(ref_state, traj).max;
            const auto eig = min_eigenvalue_track(traj);
            o.min_eig = eig.min;
            o.min_eig_time = eig.argmin;
            o.positivity_flag = eig.flag;
            if (opt.with_bound) {
                std::vector<Trajectory> approx;
                for (std::size_t i = 0; i < 16; ++i) {
                    approx.push_back(masters::apply_maps(maps, grid.times, inputs[i]));
                }
                o.epsilon_bound =
                    error_bound(std::span(refs).first(16), std::span<const Trajectory>(approx)).bound;
            }
        } catch (const TimeoutError&) {
            throw;
        } catch (const std::exception& e) {
            o.rel_err_max = kNaN;
            o.min_eig = kNaN;
            o.min_eig_time = kNaN;
            o.error = e.what();
        }
        res.methods.push_back(std::move(o));
    }
    return res;
}

} // namespace qmeb::analysis
