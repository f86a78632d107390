// system.hpp — the two-qubit Hamiltonian, its coupling operator and the
// decomposition of the coupling into eigen-transition components
//
// All matrices are written in the product sigma_z basis
// {|up up>, |up down>, |down up>, |down down>}.

#pragma once

#include <vector>

#include "qmeb/engine.hpp"

namespace qmeb::sys {

inline constexpr double kGroupTol = 1e-9;

struct SystemParams {
    double omegaA{1.0};
    double omegaB{0.95};

    void validate() const;
    bool resonant() const { return omegaA == omegaB; }
};

struct SystemModel {
    SystemParams params;
    ComplexMatrix H;       // (omegaA/2) sx (x) 1 + (omegaB/2) 1 (x) sx
    ComplexMatrix L;       // (sz (x) 1 + 1 (x) sz) / 2
    RealVector eigvals;    // ascending
    ComplexMatrix eigvecs; // columns are products of sigma_x eigenvectors
};

struct JumpTerm {
    double omega{0.0};
    ComplexMatrix op;
};

/// L = sum_w L_w with L_w = sum_{e' - e = w} |e><e| L |e'><e'|. Entries sorted by omega.
struct JumpDecomposition {
    std::vector<JumpTerm> entries;

    /// Operator for the frequency within tol of omega; throws std::out_of_range otherwise.
    const ComplexMatrix& at(double omega, double tol = kGroupTol) const;
    ComplexMatrix sum() const;
};

struct Cluster {
    double omega_bar{0.0};
    std::vector<double> members;
    ComplexMatrix op; // sum of the member operators
};

struct FrequencyClustering {
    std::vector<Cluster> clusters;
    double cluster_tol{0.0};

    /// Jump decomposition over the representative frequencies.
    JumpDecomposition as_decomposition() const;
};

SystemModel build_model(const SystemParams& params);

/// Throws std::invalid_argument for group_tol <= 0 and NumericalError when two
/// retained frequencies lie closer than 2 * group_tol.
JumpDecomposition jump_decomposition(const SystemModel& model, double group_tol = kGroupTol);

/// sum_w e^{-i w t} L_w  ( = e^{iHt} L e^{-iHt} ).
ComplexMatrix interaction_picture_L(const JumpDecomposition& decomp, double t);

/// Single-linkage grouping of the transition frequencies; representative is the mean.
/// Frequencies of opposite sign are never grouped together.
FrequencyClustering cluster_frequencies(const JumpDecomposition& decomp, double cluster_tol);

/// e^{-iHt} from the eigendecomposition.
ComplexMatrix evolution_operator(const SystemModel& model, double t);

/// Pauli matrix sigma_k, k = 0..3 (identity, x, y, z).
ComplexMatrix pauli(int k);

/// sigma_alpha (x) sigma_beta.
ComplexMatrix pauli_product(int alpha, int beta);

/// |psi><psi| for a product sigma_z basis index (0 = |up up>).
ComplexMatrix basis_projector(int index);

} // namespace qmeb::sys
