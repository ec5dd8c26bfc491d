#include "slfv/quadrature.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>

namespace slfv {

namespace {

void require_converged(const char* what, double value, double error, double l1, double rel_tol)
{
    const double allowed = std::max(1e4 * rel_tol * l1, 1e-13);
    if (!std::isfinite(value) || !(error <= allowed)) {
        throw NumericalError(std::string(what) + ": quadrature did not converge (estimate " +
                             std::to_string(value) + ", error " + std::to_string(error) + ")");
    }
}

}  // namespace

QuadResult integrate_smooth(const RealFn& f, double a, double b, double rel_tol)
{
    if (a == b) return {};
    double err = 0.0, l1 = 0.0;
    double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, rel_tol, &err, &l1);
    require_converged("integrate_smooth", v, err, l1, rel_tol);
    return {v, err};
}

QuadResult integrate_singular(const RealFn& f, double a, double b, double rel_tol)
{
    if (a == b) return {};
    static thread_local boost::math::quadrature::tanh_sinh<double> rule(15);
    double err = 0.0, l1 = 0.0;
    std::size_t levels = 0;
    double v = rule.integrate(f, a, b, rel_tol, &err, &l1, &levels);
    require_converged("integrate_singular", v, err, l1, rel_tol);
    return {v, err};
}

QuadResult integrate_power(const RealFn& g, double p, double b, double rel_tol)
{
    if (!(p > 0.0)) throw std::invalid_argument("integrate_power needs p > 0");
    if (b == 0.0) return {};
    const double scale = std::pow(b, p) / p;
    const QuadResult r = integrate_singular([&](double v) { return g(b * std::pow(v, 1.0 / p)); }, 0.0, 1.0, rel_tol);
    return {scale * r.value, scale * r.error};
}

QuadResult integrate_to_infinity(const RealFn& f, double a, double rel_tol)
{
    static thread_local boost::math::quadrature::exp_sinh<double> rule(12);
    double err = 0.0, l1 = 0.0;
    std::size_t levels = 0;
    double v = rule.integrate(f, a, std::numeric_limits<double>::infinity(), rel_tol, &err, &l1, &levels);
    require_converged("integrate_to_infinity", v, err, l1, rel_tol);
    return {v, err};
}

namespace {

// Highest even column of the epsilon table built from s.
double wynn_estimate(const std::vector<double>& s)
{
    const std::size_t n = s.size();
    std::vector<double> prev(n + 1, 0.0);  // eps_{-1}
    std::vector<double> cur(s.begin(), s.end());  // eps_0
    double best = s.back();
    for (std::size_t k = 1; cur.size() > 1; ++k) {
        std::vector<double> next(cur.size() - 1);
        bool degenerate = false;
        for (std::size_t i = 0; i + 1 < cur.size(); ++i) {
            const double diff = cur[i + 1] - cur[i];
            if (diff == 0.0 || !std::isfinite(diff)) {
                degenerate = true;
                break;
            }
            next[i] = prev[i + 1] + 1.0 / diff;
        }
        if (degenerate) break;
        prev = std::move(cur);
        cur = std::move(next);
        if (k % 2 == 0 && std::isfinite(cur.back())) best = cur.back();
    }
    return best;
}

}  // namespace

QuadResult wynn_epsilon(const std::vector<double>& partial_sums)
{
    if (partial_sums.empty()) return {};
    const std::size_t window = 24;
    auto tail = [&](std::size_t end) {
        const std::size_t begin = end > window ? end - window : 0;
        return std::vector<double>(partial_sums.begin() + begin, partial_sums.begin() + end);
    };
    const double now = wynn_estimate(tail(partial_sums.size()));
    if (partial_sums.size() < 3) return {now, std::abs(now - partial_sums.front())};
    const double before = wynn_estimate(tail(partial_sums.size() - 1));
    return {now, std::abs(now - before)};
}

QuadResult integrate_oscillatory(const RealFn& f, const OscillatoryOptions& opt)
{
    double b0 = opt.breaks(0);
    bool clipped = false;
    if (b0 >= opt.cutoff) {
        b0 = opt.cutoff;
        clipped = true;
    }
    QuadResult first = integrate_singular(f, opt.start, b0, 1e-13);
    std::vector<double> sums{first.value};
    double quad_err = first.error;
    if (clipped) return {first.value, quad_err};

    double total = first.value;
    double left = b0;
    int settled = 0;
    int quiet = 0;
    QuadResult last{total, std::abs(total)};
    // cancellation floor: the partial sums cannot be resolved below this
    double floor = 1e-14 * std::abs(first.value);
    for (int k = 1; k <= opt.max_intervals; ++k) {
        double right = opt.breaks(k);
        bool at_cutoff = false;
        if (right >= opt.cutoff) {
            right = opt.cutoff;
            at_cutoff = true;
        }
        double err = 0.0;
        const double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            f, left, right, 10, 1e-11, &err);
        quad_err += err;
        total += piece;
        floor = std::max(floor, 1e-14 * std::abs(piece));
        sums.push_back(total);
        left = right;
        if (at_cutoff) return {total, quad_err + std::abs(piece)};

        const double scale = std::max(std::abs(total), opt.abs_tol);
        quiet = std::abs(piece) < 1e-3 * opt.rel_tol * scale ? quiet + 1 : 0;
        if (quiet >= 3) return {total, quad_err + 3 * std::abs(piece)};

        if (sums.size() >= 8) {
            QuadResult w = wynn_epsilon(sums);
            const double tol = std::max({opt.rel_tol * std::abs(w.value), opt.abs_tol, floor});
            settled = (w.error < tol && std::abs(w.value - last.value) < tol) ? settled + 1 : 0;
            last = w;
            if (settled >= 2) return {w.value, w.error + quad_err};
        }
    }
    throw NumericalError("integrate_oscillatory: tail extrapolation did not settle (last estimate " +
                         std::to_string(last.value) + ", spread " + std::to_string(last.error) + ")");
}

}  // namespace slfv
