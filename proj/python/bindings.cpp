// Python access to the benchmark: bath functions, master-equation and
// reference propagation, per-point assessment and the batch drivers.

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "qmeb/analysis.hpp"
#include "qmeb/cli.hpp"

namespace py = pybind11;
using namespace qmeb;

namespace {

// (n, 4, 4) complex array.
py::array_t<cplx> stack(const std::vector<ComplexMatrix>& states) {
    const auto n = static_cast<py::ssize_t>(states.size());
    py::array_t<cplx> out({n, py::ssize_t{4}, py::ssize_t{4}});
    auto r = out.mutable_unchecked<3>();
    for (py::ssize_t k = 0; k < n; ++k) {
        for (py::ssize_t i = 0; i < 4; ++i) {
            for (py::ssize_t j = 0; j < 4; ++j) {
                r(k, i, j) = states[static_cast<std::size_t>(k)](i, j);
            }
        }
    }
    return out;
}

ComplexMatrix check_state(const ComplexMatrix& rho) {
    if (rho.rows() != 4 || rho.cols() != 4) {
        throw std::invalid_argument("expected a 4x4 operator");
    }
    return rho;
}

py::array_t<cplx> propagate(masters::Method m, const sys::SystemParams& s, const bath::BathParams& b,
                            const ComplexMatrix& rho0, const std::vector<double>& times, double tau_cg,
                            double cluster_tol) {
    auto spec = masters::GeneratorSpec::of(m);
    spec.tau_cg = tau_cg;
    spec.cluster_tol = cluster_tol;
    const auto problem = masters::Problem::make(s, b);
    Trajectory tr;
    {
        py::gil_scoped_release release;
        tr = masters::propagate(spec, problem, check_state(rho0), times);
    }
    return stack(tr.states);
}

py::array_t<cplx> reference(const sys::SystemParams& s, const bath::BathParams& b, const ComplexMatrix& rho0,
                            const std::vector<double>& times, std::optional<int> d) {
    Trajectory tr;
    {
        py::gil_scoped_release release;
        const int dd = d ? *d : pseudomode::prepare_reference(s, b).d;
        const auto pm = pseudomode::build_pseudomode(sys::build_model(s), b, dd);
        tr = pseudomode::reference_trajectory(pm, check_state(rho0), times);
    }
    return stack(tr.states);
}

py::list evaluate(const sys::SystemParams& s, const bath::BathParams& b, const std::vector<masters::Method>& methods,
                  bool with_bound, double tau_cg, double cluster_tol, int initial_state) {
    analysis::PointOptions opt;
    opt.with_bound = with_bound;
    opt.tau_cg = tau_cg;
    opt.cluster_tol = cluster_tol;
    opt.initial_state = initial_state;
    analysis::PointResult r;
    {
        py::gil_scoped_release release;
        r = analysis::evaluate_point(s, b, methods, opt);
    }
    py::list out;
    for (const auto& m : r.methods) {
        py::dict row;
        row["method"] = masters::method_name(m.method);
        row["eta"] = r.eta;
        row["gamma"] = r.gamma;
        row["epsilon_bound"] = m.epsilon_bound;
        row["rel_err_max"] = m.rel_err_max;
        row["min_eig"] = m.min_eig;
        row["min_eig_time"] = m.min_eig_time;
        row["positivity_flag"] = m.positivity_flag;
        row["t_max"] = r.t_max;
        row["d"] = r.d;
        row["error"] = m.error;
        out.append(row);
    }
    return out;
}

py::dict observables(const py::array_t<cplx, py::array::c_style | py::array::forcecast>& states) {
    if (states.ndim() != 3 || states.shape(1) != 4 || states.shape(2) != 4) {
        throw std::invalid_argument("expected an (n, 4, 4) array");
    }
    Trajectory tr;
    auto r = states.unchecked<3>();
    for (py::ssize_t k = 0; k < states.shape(0); ++k) {
        ComplexMatrix m(4, 4);
        for (py::ssize_t i = 0; i < 4; ++i) {
            for (py::ssize_t j = 0; j < 4; ++j) {
                m(i, j) = r(k, i, j);
            }
        }
        tr.times.push_back(static_cast<double>(k));
        tr.states.push_back(m);
    }
    const auto o = analysis::observables(tr);
    py::dict out;
    out["local"] = o.local;
    out["nonlocal"] = o.nonlocal;
    return out;
}

py::dict run_config(const std::filesystem::path& path, const std::string& mode,
                    std::optional<std::filesystem::path> out, std::optional<int> workers) {
    auto cfg = cli::load_config(path, cli::parse_mode(mode));
    if (out) {
        cfg.out = *out;
    }
    if (workers) {
        cfg.workers = *workers;
    }
    cli::RunSummary s;
    {
        py::gil_scoped_release release;
        s = cli::run(cfg);
    }
    py::dict d;
    d["points"] = s.points;
    d["failed"] = s.failed;
    d["files"] = s.files;
    d["warnings"] = s.warnings;
    return d;
}

} // namespace

PYBIND11_MODULE(_qmeb, m) {
    m.doc() = "Two-qubit spin-boson master-equation benchmark (C++ core)";

    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception<TimeoutError>(m, "TimeoutError", PyExc_RuntimeError);

    py::class_<sys::SystemParams>(m, "SystemParams")
        .def(py::init([](double a, double b) { return sys::SystemParams{a, b}; }), py::arg("omegaA") = 1.0,
             py::arg("omegaB") = 0.95)
        .def_readwrite("omegaA", &sys::SystemParams::omegaA)
        .def_readwrite("omegaB", &sys::SystemParams::omegaB)
        .def("__repr__", [](const sys::SystemParams& s) {
            return "SystemParams(omegaA=" + std::to_string(s.omegaA) + ", omegaB=" + std::to_string(s.omegaB) + ")";
        });

    py::class_<bath::BathParams>(m, "BathParams")
        .def(py::init([](double eta, double gamma, double omega0) {
                 bath::BathParams b{eta, gamma, omega0};
                 b.validate();
                 return b;
             }),
             py::arg("eta"), py::arg("gamma"), py::arg("omega0") = 1.0)
        .def_readwrite("eta", &bath::BathParams::eta)
        .def_readwrite("gamma", &bath::BathParams::gamma)
        .def_readwrite("omega0", &bath::BathParams::omega0)
        .def("__repr__", [](const bath::BathParams& b) {
            return "BathParams(eta=" + std::to_string(b.eta) + ", gamma=" + std::to_string(b.gamma) +
                   ", omega0=" + std::to_string(b.omega0) + ")";
        });

    py::enum_<masters::Method>(m, "Method")
        .value("RFE_TDC", masters::Method::RFE_TDC)
        .value("RFE_AC", masters::Method::RFE_AC)
        .value("QOME", masters::Method::QOME)
        .value("PRWA", masters::Method::PRWA)
        .value("CGME", masters::Method::CGME)
        .value("EXPZ", masters::Method::EXPZ);

    m.def("spectral_density", &bath::spectral_density, py::arg("bath"), py::arg("omega"));
    m.def("bcf", &bath::bcf, py::arg("bath"), py::arg("tau"));
    m.def("half_fourier", &bath::half_fourier, py::arg("bath"), py::arg("omega"));
    m.def("redfield_coeff", &bath::redfield_coeff, py::arg("bath"), py::arg("omega"), py::arg("t"));
    m.def("cg_coeff", &bath::cg_coeff, py::arg("bath"), py::arg("omega"), py::arg("omega_p"), py::arg("tau"),
          py::arg("degeneracy_tol") = bath::kDegeneracyTol);

    m.def("basis_projector", &sys::basis_projector, py::arg("index"),
          "|s><s| in the sigma_z product basis, 0 = up up.");
    m.def("pauli_product", &sys::pauli_product, py::arg("alpha"), py::arg("beta"));

    m.def("propagate", &propagate, py::arg("method"), py::arg("system"), py::arg("bath"), py::arg("rho0"),
          py::arg("times"), py::arg("tau_cg") = 1.0, py::arg("cluster_tol") = 0.1,
          "Master-equation trajectory as an (n, 4, 4) array.");
    m.def("reference", &reference, py::arg("system"), py::arg("bath"), py::arg("rho0"), py::arg("times"),
          py::arg("d") = py::none(),
          "Exact reduced trajectory from the pseudo-mode; d defaults to the converged truncation.");
    m.def(
        "prepare_reference",
        [](const sys::SystemParams& s, const bath::BathParams& b) {
            const auto r = pseudomode::prepare_reference(s, b);
            py::dict d;
            d["d"] = r.d;
            d["t_max"] = r.t_max;
            d["borrowed"] = r.borrowed;
            return d;
        },
        py::arg("system"), py::arg("bath"));
    m.def("evaluate_point", &evaluate, py::arg("system"), py::arg("bath"), py::arg("methods"),
          py::arg("with_bound") = true, py::arg("tau_cg") = 1.0, py::arg("cluster_tol") = 0.1,
          py::arg("initial_state") = 0, "Error bound, relative error and positivity per method.");
    m.def("observables", &observables, py::arg("states"), "<1 (x) sz> and <sz (x) sz> per state.");
    m.def("run_config", &run_config, py::arg("path"), py::arg("mode"), py::arg("out") = py::none(),
          py::arg("workers") = py::none(), "Batch run from an INI file; returns the run summary.");

    m.attr("POSITIVITY_THRESHOLD") = analysis::kPositivityThreshold;
}
