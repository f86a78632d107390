// pseudomode.hpp — exact reduced dynamics from a damped auxiliary oscillator
//
// The Lorentzian environment is replaced by one bosonic mode of frequency omega0
// decaying at rate gamma, coupled through sqrt(eta) L (a + a^dag). Total-space
// index is s * d + k (system index s in the sigma_z product basis, Fock level k).
//
// The total generator commutes with conjugation by (sx (x) sx) (x) (-1)^n. All
// propagation and kernel solves run in the two invariant halves of operator
// space separately, after rotating the system factor to the sigma_x product basis
// where that parity is diagonal.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Sparse>

#include "qmeb/bath.hpp"
#include "qmeb/engine.hpp"
#include "qmeb/system.hpp"

namespace qmeb::pseudomode {

using SparseMatrix = Eigen::SparseMatrix<cplx>;

struct PseudoModeConfig {
    int d_init{6};
    int d_step{4};
    double state_tol{1e-6};
    double tmax_tol{0.01};
    int d_cap{120};
    double horizon_factor{1e4}; // cap = horizon_factor * max(1/gamma, 1, gamma/eta)
    int coarse_points{200};
    double resolution{0.01};    // relative resolution of t_max

    void validate() const;
};

/// One invariant half of operator space: positions in the column-stacked
/// vectorization (working basis) and the generator restricted to them.
struct Sector {
    std::vector<Eigen::Index> positions;
    SparseMatrix generator;
};

struct PseudoModeModel {
    int d{0};
    double gamma{0.0};
    ComplexMatrix H_P; // sigma_z product basis (x) Fock
    ComplexMatrix a;   // 1 (x) b

    ComplexMatrix W;          // 4x4, columns: sigma_x product states |++>, |+->, |-+>, |-->
    std::vector<int> parity;  // +-1 per total index, working basis
    Sector even;              // holds every state and the identity
    Sector odd;
    std::vector<Eigen::Index> local_position; // vec index -> position inside its sector

    const Sector& sector_of(Eigen::Index i, Eigen::Index j) const {
        return parity[static_cast<std::size_t>(i)] * parity[static_cast<std::size_t>(j)] > 0 ? even : odd;
    }

    Eigen::Index dim() const { return 4 * static_cast<Eigen::Index>(d); }

    /// L_P[P] for a total-space operator in the sigma_z product basis (dense evaluation).
    ComplexMatrix apply(const ComplexMatrix& P) const;
};

PseudoModeModel build_pseudomode(const sys::SystemModel& model, const bath::BathParams& bath, int d);

/// rho (x) |0><0|.
ComplexMatrix embed(const ComplexMatrix& rho, int d);
/// Trace over the oscillator.
ComplexMatrix partial_trace(const ComplexMatrix& P, int d);

/// Unique zero of the generator with unit trace (sigma_z product basis).
/// Throws NumericalError when the kernel is degenerate.
ComplexMatrix steady_state(const PseudoModeModel& pm);

struct TruncationResult {
    int d{0};
    ComplexMatrix P_inf;
    std::vector<std::pair<int, double>> ladder; // (d, relative change against d - d_step)
};

/// Walks d_init, d_init + d_step, ... until the reduced steady state changes by less
/// than state_tol. At eta = 0 the decoupled product (1/4) (x) |0><0| is returned at
/// d_init. Throws NumericalError beyond d_cap.
TruncationResult converge_truncation(const sys::SystemModel& model, const bath::BathParams& bath,
                                     const PseudoModeConfig& cfg);

double horizon_cap(const bath::BathParams& bath, const PseudoModeConfig& cfg);

/// Smallest coarse-grid time after which |P(t) - P_inf| / |P_inf| < tmax_tol holds at
/// every later grid time. The horizon doubles from max(1/gamma, 1) until the tail
/// of the grid has settled. Throws NumericalError when the horizon exceeds cap.
double determine_tmax(const PseudoModeModel& pm, const ComplexMatrix& P_inf, const ComplexMatrix& P0,
                      const PseudoModeConfig& cfg, double cap);

/// Truncation, steady state and horizon for one parameter point. Degenerate
/// (resonant) qubits reuse the values of the detuned pair (omegaA, 0.95 omegaA),
/// whose steady state is unique.
struct ReferenceSetup {
    int d{0};
    double t_max{0.0};
    bool borrowed{false}; // taken from the detuned pair
};

ReferenceSetup prepare_reference(const sys::SystemParams& system, const bath::BathParams& bath,
                                 const PseudoModeConfig& cfg = {});

/// Propagates reduced initial operators rho (x) |0><0| on the lattice
/// t_k = indices[k] * unit. Result [input][time], 4x4 in the sigma_z basis.
class ReferencePropagator {
public:
    explicit ReferencePropagator(const PseudoModeModel& pm);

    std::vector<std::vector<ComplexMatrix>> reduced(std::span<const ComplexMatrix> rho0s, double unit,
                                                    std::span<const std::int64_t> indices) const;

private:
    const PseudoModeModel& pm_;
};

/// Integer-lattice description t_k = indices[k] * unit of an ascending grid.
/// indices is empty when no common unit fits within rel_tol.
struct Lattice {
    double unit{0.0};
    std::vector<std::int64_t> indices;
};
Lattice lattice_of(std::span<const double> times, double rel_tol = 1e-9);

/// rho_ref(t) = tr_PM exp(L_P t) (rho0 (x) |0><0|) at the given times (ascending,
/// from 0). Lattice grids use exact step maps; other grids one exponential per step.
Trajectory reference_trajectory(const PseudoModeModel& pm, const ComplexMatrix& rho0,
                                std::span<const double> times);

} // namespace qmeb::pseudomode
