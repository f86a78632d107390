#include "qmeb/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

namespace qmeb::cli {

namespace pt = boost::property_tree;
namespace fs = std::filesystem;
using masters::Method;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

double to_double(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || trim(s.substr(used)) != "") {
        throw std::invalid_argument("config: '" + key + "' expects a number, got '" + s + "'");
    }
    return v;
}

long to_integer(const std::string& s, const std::string& key) {
    const double v = to_double(s, key);
    if (v != std::floor(v) || std::abs(v) > 1e15) {
        throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + s + "'");
    }
    return static_cast<long>(v);
}

bool to_bool(const std::string& s, const std::string& key) {
    const std::string v = trim(s);
    if (v == "true" || v == "1" || v == "yes" || v == "on") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no" || v == "off") {
        return false;
    }
    throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + s + "'");
}

std::vector<double> to_doubles(const std::string& s, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(s)) {
        out.push_back(to_double(item, key));
    }
    return out;
}

std::vector<double> log_range(const std::string& s, const std::string& key) {
    const auto v = to_doubles(s, key);
    if (v.size() != 3 || !(v[0] > 0.0) || !(v[1] > 0.0) || v[2] < 1 || v[2] != std::floor(v[2])) {
        throw std::invalid_argument("config: '" + key + "' expects lo, hi, n with lo, hi > 0 and n >= 1");
    }
    const auto n = static_cast<std::size_t>(v[2]);
    std::vector<double> out;
    for (std::size_t k = 0; k < n; ++k) {
        const double f = n == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(n - 1);
        out.push_back(std::pow(10.0, std::log10(v[0]) + f * (std::log10(v[1]) - std::log10(v[0]))));
    }
    return out;
}

int parse_initial_state(const std::string& s) {
    static const char* names[] = {"upup", "updown", "downup", "downdown"};
    for (int k = 0; k < 4; ++k) {
        if (s == names[k]) {
            return k;
        }
    }
    const long v = to_integer(s, "analysis.initial_state");
    if (v < 0 || v > 3) {
        throw std::invalid_argument("config: analysis.initial_state must be one of upup, updown, downup, downdown");
    }
    return static_cast<int>(v);
}

std::string initial_state_name(int k) {
    static const char* names[] = {"upup", "updown", "downup", "downdown"};
    return names[k];
}

std::string fmt_g(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) {
        s += (k ? ", " : "") + fmt_g(v[k]);
    }
    return s;
}

std::string csv_text(const std::string& s) {
    if (s.empty()) {
        return "";
    }
    std::string out = "\"";
    for (char c : s) {
        out += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    }
    return out + "\"";
}

template <class F>
void parallel_for(std::size_t n, int workers, F&& body) {
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            body(i);
        }
    };
    const auto count = static_cast<std::size_t>(std::max(1, workers));
    if (count == 1 || n <= 1) {
        loop();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(count, n); ++w) {
        pool.emplace_back(loop);
    }
    for (auto& t : pool) {
        t.join();
    }
}

struct GridPoint {
    double eta;
    double inv_gamma;
};

std::vector<GridPoint> grid_points(const ExperimentConfig& cfg) {
    std::vector<GridPoint> pts;
    for (double e : cfg.eta) {
        for (double ig : cfg.inv_gamma) {
            pts.push_back({e, ig});
        }
    }
    // eta ascending, then gamma ascending (inv_gamma descending)
    std::sort(pts.begin(), pts.end(), [](const GridPoint& a, const GridPoint& b) {
        if (a.eta != b.eta) {
            return a.eta < b.eta;
        }
        return a.inv_gamma > b.inv_gamma;
    });
    return pts;
}

bath::BathParams bath_of(const ExperimentConfig& cfg, const GridPoint& p) {
    return {p.eta, 1.0 / p.inv_gamma, cfg.omega0};
}

analysis::PointOptions point_options(const ExperimentConfig& cfg, bool with_bound) {
    analysis::PointOptions o;
    o.pseudomode = cfg.pseudomode;
    o.tau_cg = cfg.tau_cg;
    o.cluster_tol = cfg.cluster_tol;
    o.uniform_points = cfg.uniform_points;
    o.early_points = cfg.early_points;
    o.with_bound = with_bound;
    o.initial_state = cfg.initial_state;
    return o;
}

std::chrono::steady_clock::duration budget(const ExperimentConfig& cfg) {
    return std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(cfg.timeout_s));
}

struct PointOutcome {
    GridPoint point{};
    analysis::PointResult result;
    std::string error; // reference failure
};

std::vector<PointOutcome> evaluate_grid(const ExperimentConfig& cfg, bool with_bound) {
    const auto pts = grid_points(cfg);
    std::vector<PointOutcome> out(pts.size());
    const auto opts = point_options(cfg, with_bound);
    parallel_for(pts.size(), cfg.workers, [&](std::size_t i) {
        PointOutcome& o = out[i];
        o.point = pts[i];
        try {
            engine::DeadlineScope deadline(budget(cfg));
            o.result = analysis::evaluate_point(cfg.system, bath_of(cfg, pts[i]), cfg.methods, opts);
        } catch (const TimeoutError& e) {
            o.error = std::string("timeout: ") + e.what();
        } catch (const std::exception& e) {
            o.error = e.what();
        }
    });
    return out;
}

std::ofstream open_output(const ExperimentConfig& cfg, const std::string& name, RunSummary& summary) {
    fs::create_directories(cfg.out);
    const fs::path path = cfg.out / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error("cannot write " + path.string());
    }
    summary.files.push_back(path);
    return f;
}

void write_config_echo(const ExperimentConfig& cfg, RunSummary& summary) {
    auto f = open_output(cfg, "config.resolved.ini", summary);
    f << serialize_config(cfg);
}

std::string metadata_line(const ExperimentConfig& cfg) {
    std::ostringstream s;
    s << "# qmeb " << mode_name(cfg.mode) << ": omegaA=" << format_double(cfg.system.omegaA)
      << " omegaB=" << format_double(cfg.system.omegaB) << " omega0=" << format_double(cfg.omega0)
      << " tau_cg=" << format_double(cfg.tau_cg) << " cluster_tol=" << format_double(cfg.cluster_tol)
      << " initial_state=" << initial_state_name(cfg.initial_state)
      << " positivity_threshold=" << format_double(analysis::kPositivityThreshold) << "\n";
    return s.str();
}

std::size_t count_failed(const std::vector<PointOutcome>& results) {
    std::size_t failed = 0;
    for (const auto& r : results) {
        bool bad = !r.error.empty();
        if (!bad) {
            bad = std::all_of(r.result.methods.begin(), r.result.methods.end(),
                              [](const analysis::MethodOutcome& m) { return !m.error.empty(); });
        }
        failed += bad ? 1 : 0;
    }
    return failed;
}

// One row per (method, point), sorted by (method name, eta, gamma).
struct MethodRow {
    std::string method;
    GridPoint point;
    const PointOutcome* outcome;
    const analysis::MethodOutcome* m; // null when the reference failed
};

std::vector<MethodRow> method_rows(const ExperimentConfig& cfg, const std::vector<PointOutcome>& results) {
    std::vector<MethodRow> rows;
    for (const auto& r : results) {
        for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
            const analysis::MethodOutcome* m = r.error.empty() ? &r.result.methods[k] : nullptr;
            rows.push_back({masters::method_name(cfg.methods[k]), r.point, &r, m});
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const MethodRow& a, const MethodRow& b) {
        if (a.method != b.method) {
            return a.method < b.method;
        }
        if (a.point.eta != b.point.eta) {
            return a.point.eta < b.point.eta;
        }
        return a.point.inv_gamma > b.point.inv_gamma;
    });
    return rows;
}

std::string row_error(const MethodRow& r) {
    return r.m ? r.m->error : r.outcome->error;
}

} // namespace

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

std::string mode_name(Mode m) {
    switch (m) {
    case Mode::landscape:
        return "landscape";
    case Mode::trajectory:
        return "trajectory";
    case Mode::scaling:
        return "scaling";
    case Mode::positivity:
        return "positivity";
    }
    throw std::invalid_argument("unknown mode");
}

Mode parse_mode(const std::string& name) {
    for (Mode m : {Mode::landscape, Mode::trajectory, Mode::scaling, Mode::positivity}) {
        if (mode_name(m) == name) {
            return m;
        }
    }
    throw std::invalid_argument("unknown mode '" + name + "'");
}

std::vector<Method> parse_method_list(const std::string& list) {
    std::vector<Method> out;
    for (const auto& item : split_list(list)) {
        const Method m = masters::parse_method(item);
        if (std::find(out.begin(), out.end(), m) != out.end()) {
            throw std::invalid_argument("method '" + item + "' listed twice");
        }
        out.push_back(m);
    }
    if (out.empty()) {
        throw std::invalid_argument("config: methods.list is empty");
    }
    return out;
}

ExperimentConfig default_config(Mode mode) {
    ExperimentConfig c;
    c.mode = mode;
    c.system = {1.0, 0.95};
    switch (mode) {
    case Mode::landscape:
        c.eta = log_range("0.01, 100, 12", "bath.eta_range");
        c.inv_gamma = log_range("0.001, 10, 12", "bath.inv_gamma_range");
        c.methods.assign(std::begin(masters::kAllMethods), std::end(masters::kAllMethods));
        break;
    case Mode::trajectory:
        c.eta = {0.149};
        c.inv_gamma = {0.673};
        c.methods.assign(std::begin(masters::kAllMethods), std::end(masters::kAllMethods));
        break;
    case Mode::scaling:
        c.eta = log_range("0.001, 0.1, 5", "bath.eta_range");
        c.inv_gamma = {0.1};
        c.methods.assign(std::begin(masters::kAllMethods), std::end(masters::kAllMethods));
        break;
    case Mode::positivity:
        c.eta = {0.75};
        c.inv_gamma = log_range("0.01, 1, 6", "bath.inv_gamma_range");
        c.methods = {Method::RFE_TDC, Method::RFE_AC};
        break;
    }
    return c;
}

void ExperimentConfig::validate() const {
    system.validate();
    if (eta.empty() || inv_gamma.empty()) {
        throw std::invalid_argument("config: bath grids must not be empty");
    }
    for (double e : eta) {
        if (!(e >= 0.0) || !std::isfinite(e)) {
            throw std::invalid_argument("config: bath.eta values must be finite and non-negative");
        }
    }
    for (double g : inv_gamma) {
        if (!(g > 0.0) || !std::isfinite(g)) {
            throw std::invalid_argument("config: bath.inv_gamma values must be positive");
        }
    }
    if (!std::isfinite(omega0)) {
        throw std::invalid_argument("config: bath.omega0 must be finite");
    }
    if (methods.empty()) {
        throw std::invalid_argument("config: the method list is empty");
    }
    if (std::find(methods.begin(), methods.end(), Method::CGME) != methods.end() && !(tau_cg > 0.0)) {
        throw std::invalid_argument("config: methods.tau_cg must be positive when CGME is requested");
    }
    if (!(cluster_tol >= 0.0)) {
        throw std::invalid_argument("config: methods.cluster_tol must be non-negative");
    }
    if (uniform_points < 2 || early_points < 2 || trajectory_points < 2) {
        throw std::invalid_argument("config: grids need at least two points");
    }
    if (!(t_end >= 0.0)) {
        throw std::invalid_argument("config: analysis.t_end must be non-negative");
    }
    if (!(fit_min_decades > 0.0)) {
        throw std::invalid_argument("config: analysis.fit_min_decades must be positive");
    }
    if (tau_average && !(tau_cg > 0.0)) {
        throw std::invalid_argument("config: tau averaging needs methods.tau_cg > 0");
    }
    pseudomode.validate();
    if (workers < 1) {
        throw std::invalid_argument("config: run.workers must be at least 1");
    }
    if (!(timeout_s > 0.0)) {
        throw std::invalid_argument("config: run.timeout must be positive");
    }
}

ExperimentConfig parse_config(const std::string& text, Mode mode) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    static const std::map<std::string, std::set<std::string>> known = {
        {"system", {"omegaA", "omegaB"}},
        {"bath", {"eta", "eta_range", "inv_gamma", "inv_gamma_range", "omega0"}},
        {"methods", {"list", "tau_cg", "cluster_tol"}},
        {"analysis",
         {"mode", "initial_state", "uniform_points", "early_points", "trajectory_points", "t_end", "with_bound",
          "tau_average", "fit_min_decades"}},
        {"pseudomode",
         {"d_init", "d_step", "state_tol", "tmax_tol", "d_cap", "horizon_factor", "coarse_points", "resolution"}},
        {"run", {"workers", "out", "timeout"}},
    };
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end() || body.data() != "") {
            throw std::invalid_argument("config: unknown section '" + section + "'");
        }
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) {
                throw std::invalid_argument("config: unknown key '" + section + "." + key + "'");
            }
        }
    }
    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.'))) {
            return trim(*v);
        }
        return std::nullopt;
    };

    // The verb decides the mode; a mode entry in the file only has to be valid.
    if (auto v = get("analysis.mode")) {
        parse_mode(*v);
    }
    ExperimentConfig c = default_config(mode);
    if (auto v = get("system.omegaA")) c.system.omegaA = to_double(*v, "system.omegaA");
    if (auto v = get("system.omegaB")) c.system.omegaB = to_double(*v, "system.omegaB");
    if (get("bath.eta") && get("bath.eta_range")) {
        throw std::invalid_argument("config: give either bath.eta or bath.eta_range");
    }
    if (get("bath.inv_gamma") && get("bath.inv_gamma_range")) {
        throw std::invalid_argument("config: give either bath.inv_gamma or bath.inv_gamma_range");
    }
    if (auto v = get("bath.eta")) c.eta = to_doubles(*v, "bath.eta");
    if (auto v = get("bath.eta_range")) c.eta = log_range(*v, "bath.eta_range");
    if (auto v = get("bath.inv_gamma")) c.inv_gamma = to_doubles(*v, "bath.inv_gamma");
    if (auto v = get("bath.inv_gamma_range")) c.inv_gamma = log_range(*v, "bath.inv_gamma_range");
    if (auto v = get("bath.omega0")) c.omega0 = to_double(*v, "bath.omega0");
    if (auto v = get("methods.list")) c.methods = parse_method_list(*v);
    if (auto v = get("methods.tau_cg")) c.tau_cg = to_double(*v, "methods.tau_cg");
    if (auto v = get("methods.cluster_tol")) c.cluster_tol = to_double(*v, "methods.cluster_tol");
    if (auto v = get("analysis.initial_state")) c.initial_state = parse_initial_state(*v);
    if (auto v = get("analysis.uniform_points"))
        c.uniform_points = static_cast<std::size_t>(std::max(0L, to_integer(*v, "analysis.uniform_points")));
    if (auto v = get("analysis.early_points"))
        c.early_points = static_cast<std::size_t>(std::max(0L, to_integer(*v, "analysis.early_points")));
    if (auto v = get("analysis.trajectory_points"))
        c.trajectory_points = static_cast<std::size_t>(std::max(0L, to_integer(*v, "analysis.trajectory_points")));
    if (auto v = get("analysis.t_end")) c.t_end = to_double(*v, "analysis.t_end");
    if (auto v = get("analysis.with_bound")) c.with_bound = to_bool(*v, "analysis.with_bound");
    if (auto v = get("analysis.tau_average")) c.tau_average = to_bool(*v, "analysis.tau_average");
    if (auto v = get("analysis.fit_min_decades")) c.fit_min_decades = to_double(*v, "analysis.fit_min_decades");
    if (auto v = get("pseudomode.d_init")) c.pseudomode.d_init = static_cast<int>(to_integer(*v, "pseudomode.d_init"));
    if (auto v = get("pseudomode.d_step")) c.pseudomode.d_step = static_cast<int>(to_integer(*v, "pseudomode.d_step"));
    if (auto v = get("pseudomode.state_tol")) c.pseudomode.state_tol = to_double(*v, "pseudomode.state_tol");
    if (auto v = get("pseudomode.tmax_tol")) c.pseudomode.tmax_tol = to_double(*v, "pseudomode.tmax_tol");
    if (auto v = get("pseudomode.d_cap")) c.pseudomode.d_cap = static_cast<int>(to_integer(*v, "pseudomode.d_cap"));
    if (auto v = get("pseudomode.horizon_factor"))
        c.pseudomode.horizon_factor = to_double(*v, "pseudomode.horizon_factor");
    if (auto v = get("pseudomode.coarse_points"))
        c.pseudomode.coarse_points = static_cast<int>(to_integer(*v, "pseudomode.coarse_points"));
    if (auto v = get("pseudomode.resolution")) c.pseudomode.resolution = to_double(*v, "pseudomode.resolution");
    if (auto v = get("run.workers")) c.workers = static_cast<int>(to_integer(*v, "run.workers"));
    if (auto v = get("run.out")) c.out = *v;
    if (auto v = get("run.timeout")) c.timeout_s = to_double(*v, "run.timeout");
    return c;
}

ExperimentConfig load_config(const fs::path& path, Mode mode) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::invalid_argument("config: cannot read " + path.string());
    }
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), mode);
}

std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream s;
    std::string methods;
    for (std::size_t k = 0; k < c.methods.size(); ++k) {
        methods += (k ? ", " : "") + masters::method_name(c.methods[k]);
    }
    s << "[system]\n"
      << "omegaA = " << fmt_g(c.system.omegaA) << "\n"
      << "omegaB = " << fmt_g(c.system.omegaB) << "\n\n"
      << "[bath]\n"
      << "eta = " << join_doubles(c.eta) << "\n"
      << "inv_gamma = " << join_doubles(c.inv_gamma) << "\n"
      << "omega0 = " << fmt_g(c.omega0) << "\n\n"
      << "[methods]\n"
      << "list = " << methods << "\n"
      << "tau_cg = " << fmt_g(c.tau_cg) << "\n"
      << "cluster_tol = " << fmt_g(c.cluster_tol) << "\n\n"
      << "[analysis]\n"
      << "mode = " << mode_name(c.mode) << "\n"
      << "initial_state = " << initial_state_name(c.initial_state) << "\n"
      << "uniform_points = " << c.uniform_points << "\n"
      << "early_points = " << c.early_points << "\n"
      << "trajectory_points = " << c.trajectory_points << "\n"
      << "t_end = " << fmt_g(c.t_end) << "\n"
      << "with_bound = " << (c.with_bound ? "true" : "false") << "\n"
      << "tau_average = " << (c.tau_average ? "true" : "false") << "\n"
      << "fit_min_decades = " << fmt_g(c.fit_min_decades) << "\n\n"
      << "[pseudomode]\n"
      << "d_init = " << c.pseudomode.d_init << "\n"
      << "d_step = " << c.pseudomode.d_step << "\n"
      << "state_tol = " << fmt_g(c.pseudomode.state_tol) << "\n"
      << "tmax_tol = " << fmt_g(c.pseudomode.tmax_tol) << "\n"
      << "d_cap = " << c.pseudomode.d_cap << "\n"
      << "horizon_factor = " << fmt_g(c.pseudomode.horizon_factor) << "\n"
      << "coarse_points = " << c.pseudomode.coarse_points << "\n"
      << "resolution = " << fmt_g(c.pseudomode.resolution) << "\n\n"
      << "[run]\n"
      << "out = " << c.out.string() << "\n"
      << "timeout = " << fmt_g(c.timeout_s) << "\n";
    // workers is deliberately not echoed: it does not influence the results and
    // the echo must be identical across worker counts.
    return s.str();
}

RunSummary run_landscape(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    const auto results = evaluate_grid(cfg, cfg.with_bound);
    summary.points = results.size();
    summary.failed = count_failed(results);

    auto f = open_output(cfg, "landscape.csv", summary);
    f << metadata_line(cfg);
    f << "# columns: method, eta [Delta^2], inv_gamma [Delta/gamma], gamma [Delta], epsilon_bound, "
         "rel_err_max, min_eig, min_eig_time [1/Delta], positivity_flag, t_max [1/Delta], d, errors\n";
    f << "method,eta,inv_gamma,gamma,epsilon_bound,rel_err_max,min_eig,min_eig_time,positivity_flag,t_max,d,errors\n";
    for (const auto& r : method_rows(cfg, results)) {
        const auto& pr = r.outcome->result;
        const bool ok = r.m != nullptr;
        f << r.method << ',' << format_double(r.point.eta) << ',' << format_double(r.point.inv_gamma) << ','
          << format_double(1.0 / r.point.inv_gamma) << ',' << format_double(ok ? r.m->epsilon_bound : kNaN) << ','
          << format_double(ok ? r.m->rel_err_max : kNaN) << ',' << format_double(ok ? r.m->min_eig : kNaN) << ','
          << format_double(ok ? r.m->min_eig_time : kNaN) << ',' << (ok && r.m->positivity_flag ? 1 : 0) << ','
          << format_double(ok ? pr.t_max : kNaN) << ',' << (ok ? pr.d : 0) << ',' << csv_text(row_error(r))
          << '\n';
    }
    write_config_echo(cfg, summary);
    return summary;
}

RunSummary run_positivity(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    const auto results = evaluate_grid(cfg, false);
    summary.points = results.size();
    summary.failed = count_failed(results);

    auto f = open_output(cfg, "positivity.csv", summary);
    f << metadata_line(cfg);
    std::string cols = "eta,inv_gamma,gamma";
    std::string doc = "# columns: eta [Delta^2], inv_gamma [Delta/gamma], gamma [Delta]";
    for (Method m : cfg.methods) {
        std::string n = masters::method_name(m);
        std::transform(n.begin(), n.end(), n.begin(), [](unsigned char ch) { return std::tolower(ch); });
        cols += "," + n + "_min_eig," + n + "_min_eig_time," + n + "_rel_err_max," + n + "_flag";
        doc += ", " + n + "_min_eig, " + n + "_min_eig_time [1/Delta], " + n + "_rel_err_max, " + n +
               "_flag (min_eig < threshold)";
    }
    cols += ",threshold,t_max,d,errors";
    doc += ", threshold, t_max [1/Delta], d, errors";
    f << doc << '\n' << cols << '\n';
    for (const auto& r : results) {
        const bool ok = r.error.empty();
        f << format_double(r.point.eta) << ',' << format_double(r.point.inv_gamma) << ','
          << format_double(1.0 / r.point.inv_gamma);
        std::string errors = r.error;
        for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
            const analysis::MethodOutcome* m = ok ? &r.result.methods[k] : nullptr;
            f << ',' << format_double(m ? m->min_eig : kNaN) << ',' << format_double(m ? m->min_eig_time : kNaN)
              << ',' << format_double(m ? m->rel_err_max : kNaN) << ',' << (m && m->positivity_flag ? 1 : 0);
            if (m && !m->error.empty()) {
                errors += (errors.empty() ? "" : "; ") + masters::method_name(m->method) + ": " + m->error;
            }
        }
        f << ',' << format_double(analysis::kPositivityThreshold) << ','
          << format_double(ok ? r.result.t_max : kNaN) << ',' << (ok ? r.result.d : 0) << ',' << csv_text(errors)
          << '\n';
    }
    write_config_echo(cfg, summary);
    return summary;
}

RunSummary run_scaling(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    const auto results = evaluate_grid(cfg, false);
    summary.points = results.size();
    summary.failed = count_failed(results);

    auto f = open_output(cfg, "scaling.csv", summary);
    f << metadata_line(cfg);
    f << "# columns: method, eta [Delta^2], inv_gamma [Delta/gamma], rel_err_max, t_max [1/Delta], d, errors\n";
    f << "method,eta,inv_gamma,rel_err_max,t_max,d,errors\n";
    const auto rows = method_rows(cfg, results);
    for (const auto& r : rows) {
        const bool ok = r.m != nullptr;
        f << r.method << ',' << format_double(r.point.eta) << ',' << format_double(r.point.inv_gamma) << ','
          << format_double(ok ? r.m->rel_err_max : kNaN) << ','
          << format_double(ok ? r.outcome->result.t_max : kNaN) << ',' << (ok ? r.outcome->result.d : 0) << ','
          << csv_text(row_error(r)) << '\n';
    }

    // Slopes per (inv_gamma, method) along eta.
    nlohmann::ordered_json fits = nlohmann::ordered_json::array();
    std::vector<double> gammas = cfg.inv_gamma;
    std::sort(gammas.begin(), gammas.end());
    gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());
    std::vector<std::string> names;
    for (Method m : cfg.methods) {
        names.push_back(masters::method_name(m));
    }
    std::sort(names.begin(), names.end());
    for (double ig : gammas) {
        nlohmann::ordered_json entry;
        entry["inv_gamma"] = ig;
        nlohmann::ordered_json slopes = nlohmann::ordered_json::object();
        for (const auto& name : names) {
            std::vector<double> x, y;
            for (const auto& r : rows) {
                if (r.method == name && r.point.inv_gamma == ig && r.m && std::isfinite(r.m->rel_err_max) &&
                    r.m->rel_err_max > 0.0) {
                    x.push_back(r.point.eta);
                    y.push_back(r.m->rel_err_max);
                }
            }
            nlohmann::ordered_json s;
            s["points"] = x.size();
            try {
                s["slope"] = analysis::fit_scaling(x, y, cfg.fit_min_decades);
            } catch (const std::invalid_argument& e) {
                summary.warnings.push_back("slope for " + name + " at inv_gamma = " + fmt_g(ig) +
                                           " omitted: " + e.what());
                s["slope_omitted"] = e.what();
            }
            // Slope over the lowest decade of eta, where a flattening shows first.
            if (!x.empty()) {
                const double lo = *std::min_element(x.begin(), x.end());
                std::vector<double> xs, ys;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    if (x[k] <= 10.0 * lo * (1.0 + 1e-12)) {
                        xs.push_back(x[k]);
                        ys.push_back(y[k]);
                    }
                }
                try {
                    s["smallest_decade_slope"] = analysis::fit_scaling(xs, ys, 1.0);
                } catch (const std::invalid_argument&) {
                }
            }
            slopes[name] = s;
        }
        entry["slopes"] = slopes;
        fits.push_back(entry);
    }
    nlohmann::ordered_json doc;
    doc["mode"] = "scaling";
    doc["fit"] = "least-squares slope of log(rel_err_max) against log(eta)";
    doc["min_decades"] = cfg.fit_min_decades;
    doc["fits"] = fits;
    doc["warnings"] = summary.warnings;
    auto j = open_output(cfg, "slopes.json", summary);
    j << doc.dump(2) << '\n';
    write_config_echo(cfg, summary);
    return summary;
}

RunSummary run_trajectory(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    const auto pts = grid_points(cfg);
    summary.points = pts.size();

    struct Series {
        std::vector<double> times;
        analysis::Observables ref;
        std::optional<analysis::Observables> ref_avg;
        std::vector<std::optional<analysis::Observables>> methods;
        std::string error;
    };
    std::vector<Series> out(pts.size());
    parallel_for(pts.size(), cfg.workers, [&](std::size_t i) {
        Series& s = out[i];
        try {
            engine::DeadlineScope deadline(budget(cfg));
            const auto bath = bath_of(cfg, pts[i]);
            const auto setup = pseudomode::prepare_reference(cfg.system, bath, cfg.pseudomode);
            const double t_end = cfg.t_end > 0.0 ? cfg.t_end : setup.t_max;
            const auto grid = analysis::uniform_grid(t_end, cfg.trajectory_points);
            s.times = grid.times;
            const auto model = sys::build_model(cfg.system);
            const auto pm = pseudomode::build_pseudomode(model, bath, setup.d);
            const ComplexMatrix rho0 = sys::basis_projector(cfg.initial_state);
            const ComplexMatrix inputs[] = {rho0};
            const Trajectory ref{grid.times,
                                 pseudomode::ReferencePropagator(pm).reduced(inputs, grid.unit, grid.indices)[0]};
            s.ref = analysis::observables(ref);
            if (cfg.tau_average) {
                try {
                    s.ref_avg = analysis::observables(analysis::tau_averaged_reference(ref, model, cfg.tau_cg));
                } catch (const std::invalid_argument& e) {
                    s.error = std::string("tau average: ") + e.what();
                }
            }
            const auto problem = masters::Problem::make(cfg.system, bath);
            const auto opts = point_options(cfg, false);
            for (Method m : cfg.methods) {
                try {
                    const auto traj = masters::propagate(analysis::method_spec(m, opts), problem, rho0, grid.times);
                    s.methods.emplace_back(analysis::observables(traj));
                } catch (const TimeoutError&) {
                    throw;
                } catch (const std::exception& e) {
                    s.methods.emplace_back(std::nullopt);
                    s.error += (s.error.empty() ? "" : "; ") + masters::method_name(m) + ": " + e.what();
                }
            }
        } catch (const TimeoutError& e) {
            s.error = std::string("timeout: ") + e.what();
            s.methods.clear();
        } catch (const std::exception& e) {
            s.error = e.what();
            s.methods.clear();
        }
    });

    auto f = open_output(cfg, "trajectory.csv", summary);
    f << metadata_line(cfg);
    std::string cols = "eta,inv_gamma,t,reference_local,reference_nonlocal";
    if (cfg.tau_average) {
        cols += ",reference_avg_local,reference_avg_nonlocal";
    }
    for (Method m : cfg.methods) {
        const auto n = masters::method_name(m);
        cols += "," + n + "_local," + n + "_nonlocal";
    }
    cols += ",errors";
    f << "# columns: eta [Delta^2], inv_gamma [Delta/gamma], t [1/Delta]; *_local = <1 (x) sz>, "
         "*_nonlocal = <sz (x) sz>; reference = exact pseudo-mode dynamics"
      << (cfg.tau_average ? "; reference_avg = reference averaged over tau_cg in the interaction picture" : "")
      << '\n'
      << cols << '\n';
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Series& s = out[i];
        if (s.times.empty()) {
            ++summary.failed;
            f << format_double(pts[i].eta) << ',' << format_double(pts[i].inv_gamma) << ",nan,nan,nan";
            if (cfg.tau_average) {
                f << ",nan,nan";
            }
            for (std::size_t k = 0; k < cfg.methods.size(); ++k) {
                f << ",nan,nan";
            }
            f << ',' << csv_text(s.error) << '\n';
            continue;
        }
        for (std::size_t k = 0; k < s.times.size(); ++k) {
            f << format_double(pts[i].eta) << ',' << format_double(pts[i].inv_gamma) << ','
              << format_double(s.times[k]) << ',' << format_double(s.ref.local[k]) << ','
              << format_double(s.ref.nonlocal[k]);
            if (cfg.tau_average) {
                f << ',' << format_double(s.ref_avg ? s.ref_avg->local[k] : kNaN) << ','
                  << format_double(s.ref_avg ? s.ref_avg->nonlocal[k] : kNaN);
            }
            for (const auto& m : s.methods) {
                f << ',' << format_double(m ? m->local[k] : kNaN) << ',' << format_double(m ? m->nonlocal[k] : kNaN);
            }
            f << ',' << csv_text(k == 0 ? s.error : "") << '\n';
        }
    }
    write_config_echo(cfg, summary);
    return summary;
}

RunSummary run(const ExperimentConfig& cfg) {
    switch (cfg.mode) {
    case Mode::landscape:
        return run_landscape(cfg);
    case Mode::trajectory:
        return run_trajectory(cfg);
    case Mode::scaling:
        return run_scaling(cfg);
    case Mode::positivity:
        return run_positivity(cfg);
    }
    throw std::invalid_argument("unknown mode");
}

} // namespace qmeb::cli
