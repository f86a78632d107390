#include "qmeb/system.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace qmeb::sys {

void SystemParams::validate() const {
    if (!std::isfinite(omegaA) || !std::isfinite(omegaB)) {
        throw std::invalid_argument("SystemParams: qubit frequencies must be finite");
    }
}

ComplexMatrix pauli(int k) {
    ComplexMatrix s = ComplexMatrix::Zero(2, 2);
    switch (k) {
    case 0:
        s(0, 0) = 1.0;
        s(1, 1) = 1.0;
        break;
    case 1:
        s(0, 1) = 1.0;
        s(1, 0) = 1.0;
        break;
    case 2:
        s(0, 1) = -I;
        s(1, 0) = I;
        break;
    case 3:
        s(0, 0) = 1.0;
        s(1, 1) = -1.0;
        break;
    default:
        throw std::out_of_range("pauli: index must be in 0..3");
    }
    return s;
}

ComplexMatrix pauli_product(int alpha, int beta) { return engine::kron(pauli(alpha), pauli(beta)); }

ComplexMatrix basis_projector(int index) {
    if (index < 0 || index > 3) {
        throw std::out_of_range("basis_projector: index must be in 0..3");
    }
    ComplexMatrix p = ComplexMatrix::Zero(4, 4);
    p(index, index) = 1.0;
    return p;
}

SystemModel build_model(const SystemParams& params) {
    params.validate();
    SystemModel m;
    m.params = params;
    const ComplexMatrix id = pauli(0);
    m.H = 0.5 * params.omegaA * engine::kron(pauli(1), id) + 0.5 * params.omegaB * engine::kron(id, pauli(1));
    m.L = 0.5 * (engine::kron(pauli(3), id) + engine::kron(id, pauli(3)));

    // sigma_x eigenvectors |psi_+-> = (|up> +- |down>)/sqrt(2), eigenvalue +-1.
    const double r = 1.0 / std::sqrt(2.0);
    ComplexVector plus(2), minus(2);
    plus << r, r;
    minus << r, -r;
    struct Product {
        double energy;
        ComplexVector vec;
    };
    std::vector<Product> states;
    for (int a : {1, -1}) {
        for (int b : {1, -1}) {
            const ComplexVector& va = a > 0 ? plus : minus;
            const ComplexVector& vb = b > 0 ? plus : minus;
            states.push_back({0.5 * (a * params.omegaA + b * params.omegaB), engine::kron(va, vb)});
        }
    }
    std::stable_sort(states.begin(), states.end(),
                     [](const Product& x, const Product& y) { return x.energy < y.energy; });
    m.eigvals.resize(4);
    m.eigvecs.resize(4, 4);
    for (int k = 0; k < 4; ++k) {
        m.eigvals(k) = states[static_cast<std::size_t>(k)].energy;
        m.eigvecs.col(k) = states[static_cast<std::size_t>(k)].vec;
    }
    return m;
}

const ComplexMatrix& JumpDecomposition::at(double omega, double tol) const {
    for (const auto& e : entries) {
        if (std::abs(e.omega - omega) <= tol) {
            return e.op;
        }
    }
    std::ostringstream msg;
    msg << "JumpDecomposition: no component at omega = " << omega;
    throw std::out_of_range(msg.str());
}

ComplexMatrix JumpDecomposition::sum() const {
    if (entries.empty()) {
        return ComplexMatrix::Zero(4, 4);
    }
    ComplexMatrix s = ComplexMatrix::Zero(entries.front().op.rows(), entries.front().op.cols());
    for (const auto& e : entries) {
        s += e.op;
    }
    return s;
}

JumpDecomposition jump_decomposition(const SystemModel& model, double group_tol) {
    if (!(group_tol > 0.0)) {
        throw std::invalid_argument("jump_decomposition: group_tol must be positive");
    }
    const auto n = model.eigvals.size();
    const ComplexMatrix& V = model.eigvecs;
    const ComplexMatrix L_eig = V.adjoint() * model.L * V;

    struct Transition {
        double omega;
        Eigen::Index i;
        Eigen::Index j;
    };
    std::vector<Transition> transitions;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            transitions.push_back({model.eigvals(j) - model.eigvals(i), i, j});
        }
    }
    std::stable_sort(transitions.begin(), transitions.end(),
                     [](const Transition& a, const Transition& b) { return a.omega < b.omega; });

    // Single-linkage grouping of eigenvalue differences.
    std::vector<std::vector<Transition>> groups;
    for (const auto& tr : transitions) {
        if (groups.empty() || tr.omega - groups.back().back().omega > group_tol) {
            groups.emplace_back();
        }
        groups.back().push_back(tr);
    }

    JumpDecomposition out;
    for (const auto& g : groups) {
        ComplexMatrix op = ComplexMatrix::Zero(4, 4);
        double mean = 0.0;
        for (const auto& tr : g) {
            op += V.col(tr.i) * L_eig(tr.i, tr.j) * V.col(tr.j).adjoint();
            mean += tr.omega;
        }
        mean /= static_cast<double>(g.size());
        if (op.norm() <= 1e-13 * std::max(1.0, model.L.norm())) {
            continue;
        }
        out.entries.push_back({std::abs(mean) < group_tol ? 0.0 : mean, std::move(op)});
    }
    for (std::size_t k = 1; k < out.entries.size(); ++k) {
        if (out.entries[k].omega - out.entries[k - 1].omega < 2.0 * group_tol) {
            throw NumericalError("jump_decomposition: ambiguous frequency grouping");
        }
    }
    return out;
}

ComplexMatrix interaction_picture_L(const JumpDecomposition& decomp, double t) {
    ComplexMatrix out = ComplexMatrix::Zero(4, 4);
    for (const auto& e : decomp.entries) {
        out += std::exp(cplx{0.0, -e.omega * t}) * e.op;
    }
    return out;
}

FrequencyClustering cluster_frequencies(const JumpDecomposition& decomp, double cluster_tol) {
    if (!(cluster_tol >= 0.0)) {
        throw std::invalid_argument("cluster_frequencies: cluster_tol must be non-negative");
    }
    FrequencyClustering out;
    out.cluster_tol = cluster_tol;
    // entries are sorted by omega; absorption and emission frequencies never share
    // a cluster
    const auto sign = [](double w) { return (w > 0.0) - (w < 0.0); };
    for (const auto& e : decomp.entries) {
        if (out.clusters.empty() || e.omega - out.clusters.back().members.back() > cluster_tol ||
            sign(e.omega) != sign(out.clusters.back().members.back())) {
            out.clusters.push_back({e.omega, {}, ComplexMatrix::Zero(e.op.rows(), e.op.cols())});
        }
        auto& c = out.clusters.back();
        c.members.push_back(e.omega);
        c.op += e.op;
    }
    for (auto& c : out.clusters) {
        c.omega_bar = std::accumulate(c.members.begin(), c.members.end(), 0.0) /
                      static_cast<double>(c.members.size());
    }
    return out;
}

JumpDecomposition FrequencyClustering::as_decomposition() const {
    JumpDecomposition d;
    for (const auto& c : clusters) {
        d.entries.push_back({c.omega_bar, c.op});
    }
    return d;
}

ComplexMatrix evolution_operator(const SystemModel& model, double t) {
    ComplexVector phases(model.eigvals.size());
    for (Eigen::Index k = 0; k < phases.size(); ++k) {
        phases(k) = std::exp(cplx{0.0, -model.eigvals(k) * t});
    }
    return model.eigvecs * phases.asDiagonal() * model.eigvecs.adjoint();
}

} // namespace qmeb::sys
