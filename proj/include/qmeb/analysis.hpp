// analysis.hpp — error measures, positivity tracking, averaged references,
// observables and scaling fits; plus the per-parameter-point assessment that
// ties reference and master equations together.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qmeb/bath.hpp"
#include "qmeb/engine.hpp"
#include "qmeb/masters.hpp"
#include "qmeb/pseudomode.hpp"
#include "qmeb/system.hpp"

namespace qmeb::analysis {

inline constexpr double kPositivityThreshold = -1e-8;

struct PauliLabel {
    int alpha{0};
    int beta{0};
};

/// The 16 labels in row-major order (alpha outer).
std::array<PauliLabel, 16> all_labels();

/// (1/4) |ref(t) - approx(t)|_HS per grid time. Throws std::invalid_argument
/// when the grids differ.
std::vector<double> partial_deviation(const Trajectory& ref, const Trajectory& approx);

struct BoundResult {
    double bound{0.0};               // max_t of the summed deviations
    std::vector<double> summed;      // sum over labels per time
    std::array<std::vector<double>, 16> components;
};

/// refs[i] and approx[i] are propagated from pauli_product(all_labels()[i]).
BoundResult error_bound(std::span<const Trajectory> refs, std::span<const Trajectory> approx);

struct SeriesMax {
    std::vector<double> series;
    double max{0.0};
};

/// |ref - approx|_HS / |ref|_HS per grid time.
SeriesMax relative_error(const Trajectory& ref, const Trajectory& approx);

struct EigenTrack {
    std::vector<double> series;
    double min{0.0};
    double argmin{0.0}; // time of the minimum
    bool flag{false};   // min < kPositivityThreshold
};

EigenTrack min_eigenvalue_track(const Trajectory& traj);

/// Running average of the interaction-picture reference over [t - min(t, tau), t],
/// trapezoidal on the grid with linear interpolation at the window start, mapped
/// back to the Schroedinger picture. Throws std::invalid_argument if tau <= 0 or
/// any grid step exceeds tau / 10.
Trajectory tau_averaged_reference(const Trajectory& ref, const sys::SystemModel& model, double tau);

struct Observables {
    std::vector<double> local;    // <1 (x) sz>
    std::vector<double> nonlocal; // <sz (x) sz>
};

Observables observables(const Trajectory& traj);

/// Least-squares slope of log y against log x. Needs >= 4 points spanning at
/// least min_decades in x; throws std::invalid_argument otherwise or for
/// non-positive values.
double fit_scaling(std::span<const double> x, std::span<const double> y, double min_decades = 1.5);

// ---------------------------------------------------------------------------
// Time grids. The measurement grid joins a uniform grid on [0, t_max] with a
// finer grid over the first few correlation times; both sit on one integer
// lattice so the reference can be stepped with exact exponentials.
// ---------------------------------------------------------------------------

struct TimeGrid {
    double unit{0.0};
    std::vector<std::int64_t> indices; // ascending, starts at 0
    std::vector<double> times;         // indices * unit, last uniform point exactly t_max
};

/// uniform_points on [0, t_max] plus early_points spaced by at most
/// early_window / (early_points - 1), early_window = min(early_gammas / gamma, t_max).
TimeGrid measurement_grid(double t_max, double gamma, std::size_t uniform_points = 400,
                          std::size_t early_points = 200, double early_gammas = 10.0);

/// Uniform grid of n points on [0, t_end] as a lattice.
TimeGrid uniform_grid(double t_end, std::size_t n);

// ---------------------------------------------------------------------------
// Assessment of one parameter point
// ---------------------------------------------------------------------------

struct PointOptions {
    pseudomode::PseudoModeConfig pseudomode{};
    masters::PropagationOptions propagation{};
    double tau_cg{1.0};
    double cluster_tol{0.1};
    std::size_t uniform_points{400};
    std::size_t early_points{200};
    double early_gammas{10.0};
    bool with_bound{true}; // propagate the 16 Pauli operators
    int initial_state{0};  // sigma_z product basis index of the tracked state
};

struct MethodOutcome {
    masters::Method method{masters::Method::QOME};
    double epsilon_bound{0.0}; // NaN when not requested
    double rel_err_max{0.0};
    double min_eig{0.0};
    double min_eig_time{0.0};
    bool positivity_flag{false};
    std::string error; // non-empty when the method failed
};

struct PointResult {
    double eta{0.0};
    double gamma{0.0};
    int d{0};
    double t_max{0.0};
    std::vector<MethodOutcome> methods;
};

masters::GeneratorSpec method_spec(masters::Method m, const PointOptions& opt);

/// Reference setup, reference propagation and every requested method on the
/// measurement grid. Errors in a single method are recorded in its outcome;
/// errors in the reference propagate.
PointResult evaluate_point(const sys::SystemParams& system, const bath::BathParams& bath,
                           std::span<const masters::Method> methods, const PointOptions& opt = {});

/// |up up><up up|.
ComplexMatrix initial_state();

} // namespace qmeb::analysis
