#include "qmeb/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace qmeb::engine {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// Continuous extension (Hairer & Wanner, DOPRI5 dense output).
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double error_norm(const ComplexMatrix& err, const ComplexMatrix& y0, const ComplexMatrix& y1,
                  double rtol, double atol) {
    double acc = 0.0;
    const auto n = err.size();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double sc = atol + rtol * std::max(std::abs(y0.data()[k]), std::abs(y1.data()[k]));
        const double r = std::abs(err.data()[k]) / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(n, 1)));
}

double rms_scaled(const ComplexMatrix& v, const ComplexMatrix& y, double rtol, double atol) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
        const double sc = atol + rtol * std::abs(y.data()[k]);
        const double r = std::abs(v.data()[k]) / sc;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(v.size(), 1)));
}

[[noreturn]] void fail(const std::string& what, double t, double h) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "integrate: " << what << " at t = " << t << " (step " << h << ")";
    throw NumericalError(msg.str());
}

} // namespace

std::vector<ComplexMatrix> integrate(const OdeRhs& f, const ComplexMatrix& y0, std::span<const double> times,
                                     const OdeOptions& opt, OdeStats* stats) {
    std::vector<ComplexMatrix> out;
    if (times.empty()) {
        return out;
    }
    for (std::size_t k = 1; k < times.size(); ++k) {
        if (times[k] < times[k - 1]) {
            throw std::invalid_argument("integrate: output times must be ascending");
        }
    }
    out.reserve(times.size());
    OdeStats local;
    OdeStats& st = stats ? *stats : local;

    const double t_end = times.back();
    double t = times.front();
    ComplexMatrix y = y0;
    const auto rows = y.rows();
    const auto cols = y.cols();
    ComplexMatrix k1(rows, cols), k2(rows, cols), k3(rows, cols), k4(rows, cols), k5(rows, cols),
        k6(rows, cols), k7(rows, cols), ytmp(rows, cols), ynew(rows, cols), err(rows, cols);

    std::size_t next_out = 0;
    while (next_out < times.size() && times[next_out] <= t) {
        out.push_back(y);
        ++next_out;
    }
    if (next_out == times.size()) {
        return out;
    }

    f(t, y, k1);
    ++st.rhs_evaluations;

    const double span = t_end - t;
    double h = 0.0;
    if (opt.fixed_step > 0.0) {
        h = opt.fixed_step;
    } else if (opt.initial_step > 0.0) {
        h = opt.initial_step;
    } else {
        const double d0 = rms_scaled(y, y, opt.rtol, opt.atol);
        const double d1n = rms_scaled(k1, y, opt.rtol, opt.atol);
        double h0 = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
        h0 = std::min(h0, span);
        ytmp = y + h0 * k1;
        f(t + h0, ytmp, k2);
        ++st.rhs_evaluations;
        const double d2 = rms_scaled(k2 - k1, y, opt.rtol, opt.atol) / h0;
        const double dmax = std::max(d1n, d2);
        const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
        h = std::min(100.0 * h0, h1);
    }
    if (opt.max_step > 0.0) {
        h = std::min(h, opt.max_step);
    }
    h = std::min(h, span);

    double fac_old = 1e-4;
    bool last_rejected = false;
    constexpr double beta = 0.04;
    constexpr double expo = 0.2 - beta * 0.75;

    while (next_out < times.size()) {
        check_deadline();
        if (st.accepted + st.rejected >= opt.max_steps) {
            fail("maximum number of steps exceeded", t, h);
        }
        const bool final_step = t + h >= t_end || (t_end - (t + h)) < 1e-14 * std::abs(t_end);
        if (final_step) {
            h = t_end - t;
        }
        if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
            fail("step size underflow", t, h);
        }

        ytmp = y + h * (a21 * k1);
        f(t + c2 * h, ytmp, k2);
        ytmp = y + h * (a31 * k1 + a32 * k2);
        f(t + c3 * h, ytmp, k3);
        ytmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
        f(t + c4 * h, ytmp, k4);
        ytmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
        f(t + c5 * h, ytmp, k5);
        ytmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
        f(t + h, ytmp, k6);
        ynew = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
        f(t + h, ynew, k7);
        st.rhs_evaluations += 6;

        double err_norm = 0.0;
        if (opt.fixed_step <= 0.0) {
            err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            err_norm = error_norm(err, y, ynew, opt.rtol, opt.atol);
            if (!std::isfinite(err_norm)) {
                fail("non-finite error estimate", t, h);
            }
        }

        if (err_norm <= 1.0) {
            if (!ynew.allFinite()) {
                fail("non-finite state", t + h, h);
            }
            const double t_new = final_step ? t_end : t + h;
            // Dense output for every requested time inside (t, t_new].
            if (next_out < times.size() && times[next_out] <= t_new) {
                const ComplexMatrix r2 = ynew - y;
                const ComplexMatrix r3 = h * k1 - r2;
                const ComplexMatrix r4 = r2 - h * k7 - r3;
                const ComplexMatrix r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
                while (next_out < times.size() && times[next_out] <= t_new) {
                    const double tout = times[next_out];
                    if (tout == t_new) {
                        out.push_back(ynew);
                    } else {
                        const double th = (tout - t) / h;
                        const double th1 = 1.0 - th;
                        out.push_back(y + th * (r2 + th1 * (r3 + th * (r4 + th1 * r5))));
                    }
                    ++next_out;
                }
            }
            ++st.accepted;
            t = t_new;
            y.swap(ynew);
            k1.swap(k7);
            if (opt.fixed_step > 0.0) {
                h = opt.fixed_step;
            } else {
                const double fac11 = std::pow(std::max(err_norm, 1e-10), expo);
                double fac = fac11 / std::pow(fac_old, beta) / 0.9;
                fac = std::clamp(fac, 1.0 / 10.0, 5.0);
                if (last_rejected) {
                    fac = std::max(fac, 1.0);
                }
                fac_old = std::max(err_norm, 1e-4);
                h /= fac;
                if (opt.max_step > 0.0) {
                    h = std::min(h, opt.max_step);
                }
                last_rejected = false;
            }
        } else {
            ++st.rejected;
            const double fac11 = std::pow(err_norm, expo);
            h /= std::min(5.0, fac11 / 0.9);
            last_rejected = true;
        }
    }
    return out;
}

std::vector<ComplexMatrix> integrate(const GeneratorFn& generator, const ComplexMatrix& y0,
                                     std::span<const double> times, const OdeOptions& options,
                                     OdeStats* stats) {
    const OdeRhs rhs = [&generator](double t, const ComplexMatrix& y, ComplexMatrix& dy) {
        dy.noalias() = generator(t) * y;
    };
    return integrate(rhs, y0, times, options, stats);
}

} // namespace qmeb::engine
