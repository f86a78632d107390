// cli.hpp — experiment configuration and the four batch drivers
//
// A config is an INI file (sections system, bath, methods, analysis,
// pseudomode, run). Every driver writes a '#'-annotated CSV, a resolved copy of
// the configuration and, for scaling runs, a JSON file with the fitted slopes.
// Results are sorted before writing, so output bytes do not depend on the
// number of workers.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "qmeb/analysis.hpp"
#include "qmeb/masters.hpp"

namespace qmeb::cli {

enum class Mode { landscape, trajectory, scaling, positivity };

std::string mode_name(Mode m);
Mode parse_mode(const std::string& name);

struct ExperimentConfig {
    Mode mode{Mode::landscape};

    sys::SystemParams system{};
    std::vector<double> eta;       // eta / Delta^2
    std::vector<double> inv_gamma; // Delta / gamma
    double omega0{1.0};

    std::vector<masters::Method> methods;
    double tau_cg{1.0};
    double cluster_tol{0.1};

    int initial_state{0}; // sigma_z product basis index, 0 = |up up>
    std::size_t uniform_points{400};
    std::size_t early_points{200};
    std::size_t trajectory_points{1000};
    double t_end{0.0};      // trajectory runs; 0 selects the reference t_max
    bool with_bound{true};  // landscape runs
    bool tau_average{false}; // trajectory runs: add the tau-averaged reference
    double fit_min_decades{1.5};

    pseudomode::PseudoModeConfig pseudomode{};

    int workers{1};
    std::filesystem::path out{"results"};
    double timeout_s{600.0};

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Default methods per mode: all six for landscape/trajectory/scaling, the two
/// Redfield variants for positivity.
ExperimentConfig default_config(Mode mode);

/// Reads an INI file on top of default_config(mode). Lists are comma separated;
/// a grid may also be given as eta_range = lo, hi, n (log spaced).
ExperimentConfig load_config(const std::filesystem::path& path, Mode mode);

/// Same, from INI text.
ExperimentConfig parse_config(const std::string& text, Mode mode);

/// INI text that load_config reads back to the same configuration.
std::string serialize_config(const ExperimentConfig& cfg);

std::vector<masters::Method> parse_method_list(const std::string& list);

struct RunSummary {
    std::size_t points{0};
    std::size_t failed{0};
    std::vector<std::filesystem::path> files;
    std::vector<std::string> warnings;

    /// 0 unless every point failed.
    int exit_code() const { return points > 0 && failed == points ? 1 : 0; }
};

RunSummary run_landscape(const ExperimentConfig& cfg);
RunSummary run_trajectory(const ExperimentConfig& cfg);
RunSummary run_scaling(const ExperimentConfig& cfg);
RunSummary run_positivity(const ExperimentConfig& cfg);

RunSummary run(const ExperimentConfig& cfg);

/// Full-precision scientific formatting used for every CSV float ("%.17e").
std::string format_double(double x);

} // namespace qmeb::cli
