#include "slfv/inference.hpp"

#include "slfv/wright_malecot.hpp"

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <ceres/ceres.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace slfv {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    return out;
}

bool has_stderr(const FitData& d, std::size_t i) { return i < d.stderr_.size() && d.stderr_[i] > 0.0; }

struct Prepared {
    FitProblem problem;
    std::vector<double> weight;  // multiplies the squared residual
};

LongRangeModel long_shape(int d, double alpha) { return LongRangeModel::create(d, alpha, 1.0, 1.0); }

double short_shape(int d, double mu, double x) { return f_short(d, mu, x); }

/// dG/dx for G(x) = (x/a)^nu K_nu(a x), nu = 1 - d/2: -a (x/a)^nu K_{nu-1}(a x).
double short_shape_derivative(int d, double mu, double x)
{
    if (x <= 0.0) return 0.0;
    const double a = std::sqrt(2.0 * mu);
    const double nu = 1.0 - 0.5 * d;
    return -a * std::pow(x / a, nu) * std::cyl_bessel_k(std::abs(nu - 1.0), a * x);
}

std::vector<double> base_weights(const FitProblem& p)
{
    std::vector<double> w(p.data.size(), 1.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!has_stderr(p.data, i)) continue;
        const double se = p.data.stderr_[i];
        w[i] = p.loss == LossScale::Linear ? 1.0 / (se * se) : std::pow(p.data.p_hat[i] / se, 2);
    }
    return w;
}

Prepared prepare(const FitProblem& problem, const std::vector<double>& start)
{
    Prepared out{problem, base_weights(problem)};
    if (problem.kind == ModelKind::Short && problem.d >= 2) {
        const double sigma = std::sqrt(start[0]);
        for (std::size_t i = 0; i < out.weight.size(); ++i) {
            if (problem.data.h[i] < 0.5 * sigma) out.weight[i] *= problem.small_bin_weight;
        }
    }
    return out;
}

std::vector<double> residuals_impl(const FitProblem& p, const std::vector<double>& w, const std::vector<double>& x,
                                   std::vector<double>* jac)
{
    const std::size_t n = p.data.size();
    const std::size_t k = p.parameter_count();
    std::vector<double> r(n);
    std::vector<double> grad(k);
    if (jac) jac->assign(n * k, 0.0);
    std::optional<LongRangeModel> shape;
    if (p.kind == ModelKind::Long) shape = long_shape(p.d, x[2]);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = p.data.h[i];
        double m = 0.0;
        if (p.kind == ModelKind::Short) {
            const double xs = h / std::sqrt(x[0]);
            const double g = short_shape(p.d, p.mu, xs);
            m = x[1] * g;
            grad[0] = x[1] * short_shape_derivative(p.d, p.mu, xs) * (-0.5 * xs / x[0]);
            grad[1] = g;
        }
        else {
            m = x[0] * f_long(*shape, x[1] * h);
        }
        const double sw = std::sqrt(w[i]);
        if (p.loss == LossScale::Linear) {
            r[i] = sw * (m - p.data.p_hat[i]);
        }
        else {
            r[i] = sw * (std::log(m) - std::log(p.data.p_hat[i]));
            for (double& gj : grad) gj /= m;
        }
        if (jac && p.kind == ModelKind::Short) {
            for (std::size_t j = 0; j < k; ++j) (*jac)[i * k + j] = sw * grad[j];
        }
    }
    return r;
}

std::vector<double> central_difference(const FitProblem& p, const std::vector<double>& w, const std::vector<double>& x,
                                       double step)
{
    const std::size_t n = p.data.size();
    const std::size_t k = x.size();
    std::vector<double> jac(n * k);
    for (std::size_t j = 0; j < k; ++j) {
        const double hj = step * std::max(std::abs(x[j]), 1e-8);
        std::vector<double> xp = x, xm = x;
        xp[j] += hj;
        xm[j] -= hj;
        const auto rp = residuals_impl(p, w, xp, nullptr);
        const auto rm = residuals_impl(p, w, xm, nullptr);
        for (std::size_t i = 0; i < n; ++i) jac[i * k + j] = (rp[i] - rm[i]) / (2.0 * hj);
    }
    return jac;
}

constexpr double kLongJacobianStep = 1e-4;

std::vector<double> residuals_with_jacobian(const FitProblem& p, const std::vector<double>& w,
                                            const std::vector<double>& x, std::vector<double>* jac)
{
    auto r = residuals_impl(p, w, x, jac);
    if (jac && p.kind == ModelKind::Long) *jac = central_difference(p, w, x, kLongJacobianStep);
    return r;
}

class ResidualCost : public ceres::CostFunction {
public:
    explicit ResidualCost(const Prepared& prep) : prep_(prep)
    {
        set_num_residuals(static_cast<int>(prep.problem.data.size()));
        mutable_parameter_block_sizes()->push_back(static_cast<int>(prep.problem.parameter_count()));
    }

    bool Evaluate(double const* const* parameters, double* residuals, double** jacobians) const override
    {
        const std::size_t k = prep_.problem.parameter_count();
        std::vector<double> x(parameters[0], parameters[0] + k);
        std::vector<double> jac;
        const bool want = jacobians != nullptr && jacobians[0] != nullptr;
        try {
            const auto r = residuals_with_jacobian(prep_.problem, prep_.weight, x, want ? &jac : nullptr);
            for (std::size_t i = 0; i < r.size(); ++i) {
                if (!std::isfinite(r[i])) return false;
                residuals[i] = r[i];
            }
            if (want) {
                for (std::size_t i = 0; i < jac.size(); ++i) {
                    if (!std::isfinite(jac[i])) return false;
                    jacobians[0][i] = jac[i];
                }
            }
        }
        catch (const std::exception&) {
            return false;
        }
        return true;
    }

private:
    const Prepared& prep_;
};

double weighted_linear_prefactor(const std::vector<double>& y, const std::vector<double>& g, const std::vector<double>& w)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        num += w[i] * y[i] * g[i];
        den += w[i] * g[i] * g[i];
    }
    return den > 0.0 ? num / den : 1.0;
}

std::vector<double> clamp_to(const std::vector<double>& x, const std::vector<double>& lo, const std::vector<double>& hi)
{
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], lo[i], hi[i]);
    return out;
}

FitProblem usable(const FitProblem& problem, std::vector<std::string>& warnings)
{
    problem.validate();
    FitProblem p = problem;
    if (p.kind == ModelKind::Short && p.d >= 2) {
        FitData kept;
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            if (p.data.h[i] < 1e-8) continue;
            kept.h.push_back(p.data.h[i]);
            kept.p_hat.push_back(p.data.p_hat[i]);
            if (!p.data.stderr_.empty()) kept.stderr_.push_back(p.data.stderr_[i]);
        }
        if (kept.size() != p.data.size()) {
            warnings.push_back("dropped " + std::to_string(p.data.size() - kept.size()) +
                               " bins at h = 0, where the short-range form diverges");
        }
        p.data = std::move(kept);
        p.data.validate();
    }
    return p;
}

FitResult single_fit(const FitProblem& p, const std::vector<double>& start)
{
    const auto lo = p.lower.value_or(p.default_lower());
    const auto hi = p.upper.value_or(p.default_upper());
    const Prepared prep = prepare(p, start);
    std::vector<double> x = clamp_to(start, lo, hi);

    ceres::Problem cp;
    cp.AddResidualBlock(new ResidualCost(prep), nullptr, x.data());
    for (std::size_t j = 0; j < x.size(); ++j) {
        cp.SetParameterLowerBound(x.data(), static_cast<int>(j), lo[j]);
        cp.SetParameterUpperBound(x.data(), static_cast<int>(j), hi[j]);
    }
    ceres::Solver::Options opt;
    opt.minimizer_type = ceres::TRUST_REGION;
    opt.trust_region_strategy_type = ceres::LEVENBERG_MARQUARDT;
    opt.linear_solver_type = ceres::DENSE_QR;
    opt.max_num_iterations = 500;
    opt.gradient_tolerance = 1e-12;
    opt.parameter_tolerance = 1e-10;
    opt.function_tolerance = 1e-15;
    opt.num_threads = 1;
    opt.logging_type = ceres::SILENT;
    opt.minimizer_progress_to_stdout = false;
    ceres::Solver::Summary summary;
    ceres::Solve(opt, &cp, &summary);

    FitResult res;
    res.kind = p.kind;
    res.names = p.parameter_names();
    res.estimate = x;
    res.n = p.data.size();
    res.iterations = static_cast<int>(summary.iterations.size());
    res.termination = summary.message;
    res.converged = summary.termination_type == ceres::CONVERGENCE || summary.termination_type == ceres::USER_SUCCESS;
    if (!res.converged) {
        std::ostringstream msg;
        msg << to_string(p.kind) << " fit did not converge after " << res.iterations
            << " iterations: " << summary.message << " (cost " << summary.final_cost << ")";
        throw FitError(msg.str());
    }

    std::vector<double> jac;
    const auto r = residuals_with_jacobian(p, prep.weight, x, &jac);
    double rss = 0.0;
    for (double v : r) rss += v * v;
    res.weighted_rss = rss;
    res.residual_norm = std::sqrt(rss);

    const std::size_t n = r.size(), k = x.size();
    Eigen::MatrixXd J(n, k);
    Eigen::VectorXd rv(n);
    for (std::size_t i = 0; i < n; ++i) {
        rv(i) = r[i];
        for (std::size_t j = 0; j < k; ++j) J(i, j) = jac[i * k + j];
    }
    const Eigen::VectorXd g = J.transpose() * rv;
    res.gradient_max_norm = g.cwiseAbs().maxCoeff();
    Eigen::MatrixXd cov = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(J.transpose() * J).pseudoInverse();
    bool any_se = false;
    for (std::size_t i = 0; i < p.data.size(); ++i) any_se = any_se || has_stderr(p.data, i);
    if (!any_se && n > k) cov *= rss / static_cast<double>(n - k);
    res.covariance.assign(k, std::vector<double>(k));
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < k; ++b) res.covariance[a][b] = cov(a, b);
    return res;
}

std::vector<double> scaled_start(const FitProblem& p, const std::vector<double>& x, int s)
{
    if (s == 0) return x;
    const double factor = std::pow(2.0, (s + 1) / 2) * 1.0;
    std::vector<double> out = x;
    const std::size_t j = p.kind == ModelKind::Short ? 0 : 1;
    out[j] = s % 2 == 1 ? x[j] / factor : x[j] * factor;
    return out;
}

}  // namespace

FitData FitData::from_curve(const IdentityCurve& curve)
{
    FitData d;
    for (const auto& b : curve.bins) {
        d.h.push_back(b.h);
        d.p_hat.push_back(b.p_hat);
        d.stderr_.push_back(b.std_error);
    }
    return d;
}

void FitData::validate() const
{
    if (p_hat.size() != h.size()) throw std::invalid_argument("h and p_hat differ in length");
    if (!stderr_.empty() && stderr_.size() != h.size()) throw std::invalid_argument("stderr and h differ in length");
    std::set<double> distinct;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!std::isfinite(h[i]) || h[i] < 0.0) throw std::invalid_argument("distances must be finite and non-negative");
        if (!std::isfinite(p_hat[i])) throw std::invalid_argument("p_hat must be finite");
        if (!stderr_.empty() && !(stderr_[i] >= 0.0)) throw std::invalid_argument("stderr must be non-negative");
        distinct.insert(h[i]);
    }
    if (distinct.size() < 3) throw std::invalid_argument("fitting needs at least three distinct distance bins");
}

FitData read_identity_csv(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("identity CSV is empty");
    const auto header = split_csv(line);
    auto find = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int ih = find("h"), ip = find("p_hat"), is = find("stderr"), it = find("t");
    if (ih < 0 || ip < 0) throw std::invalid_argument("identity CSV header needs columns h and p_hat");
    struct Row {
        double t, h, p, s;
    };
    std::vector<Row> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv(line);
        auto num = [&](int col) {
            if (col >= static_cast<int>(cells.size())) {
                throw std::invalid_argument("line " + std::to_string(lineno) + ": missing column");
            }
            try {
                std::size_t used = 0;
                const double v = std::stod(cells[col], &used);
                if (used != cells[col].size()) throw std::invalid_argument("trailing characters");
                return v;
            }
            catch (const std::exception&) {
                throw std::invalid_argument("line " + std::to_string(lineno) + ": cannot parse '" + cells[col] + "'");
            }
        };
        rows.push_back({it >= 0 ? num(it) : 0.0, num(ih), num(ip), is >= 0 ? num(is) : 0.0});
    }
    double tmax = -std::numeric_limits<double>::infinity();
    for (const auto& r : rows) tmax = std::max(tmax, r.t);
    FitData d;
    for (const auto& r : rows) {
        if (r.t != tmax) continue;
        d.h.push_back(r.h);
        d.p_hat.push_back(r.p);
        if (is >= 0) d.stderr_.push_back(r.s);
    }
    d.validate();
    return d;
}

std::string to_string(ModelKind k) { return k == ModelKind::Short ? "short" : "long"; }

void FitProblem::validate() const
{
    data.validate();
    if (d < 1 || d > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
    if (kind == ModelKind::Short && !(mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (!(small_bin_weight > 0.0)) throw std::invalid_argument("small_bin_weight must be positive");
    if (starts < 1) throw std::invalid_argument("starts must be at least 1");
    if (loss == LossScale::Log) {
        for (double y : data.p_hat)
            if (!(y > 0.0)) throw std::invalid_argument("log-scale loss needs positive p_hat");
    }
    const std::size_t k = parameter_count();
    for (const auto* v : {&initial, &lower, &upper}) {
        if (v->has_value() && (*v)->size() != k) throw std::invalid_argument("parameter vector has the wrong length");
    }
    const auto lo = lower.value_or(default_lower());
    const auto hi = upper.value_or(default_upper());
    for (std::size_t j = 0; j < k; ++j) {
        if (!(lo[j] < hi[j])) throw std::invalid_argument("lower bound must be below upper bound");
    }
    if (kind == ModelKind::Long && (lo[2] <= 0.0 || hi[2] >= std::min(d, 2))) {
        throw std::invalid_argument("alpha bounds must lie inside (0, min(d, 2))");
    }
}

std::vector<std::string> FitProblem::parameter_names() const
{
    if (kind == ModelKind::Short) return {"sigma2", "prefactor"};
    return {"prefactor", "length_scale", "alpha"};
}

std::vector<double> FitProblem::default_lower() const
{
    if (kind == ModelKind::Short) return {1e-10, 1e-12};
    return {1e-12, 1e-8, 0.02};
}

std::vector<double> FitProblem::default_upper() const
{
    if (kind == ModelKind::Short) return {1e10, 1e12};
    return {1e12, 1e8, std::min(d, 2) - 0.02};
}

std::vector<double> FitResult::standard_errors() const
{
    std::vector<double> se(estimate.size());
    for (std::size_t j = 0; j < se.size(); ++j) se[j] = std::sqrt(std::max(covariance[j][j], 0.0));
    return se;
}

double model_value(const FitProblem& problem, const std::vector<double>& params, double h)
{
    if (problem.kind == ModelKind::Short) return params[1] * short_shape(problem.d, problem.mu, h / std::sqrt(params[0]));
    return params[0] * f_long(long_shape(problem.d, params[2]), params[1] * h);
}

std::vector<double> weighted_residuals(const FitProblem& problem, const std::vector<double>& params,
                                       std::vector<double>* jacobian)
{
    problem.validate();
    const Prepared prep = prepare(problem, problem.initial.value_or(params));
    return residuals_with_jacobian(problem, prep.weight, params, jacobian);
}

std::vector<double> finite_difference_jacobian(const FitProblem& problem, const std::vector<double>& params, double step)
{
    problem.validate();
    const Prepared prep = prepare(problem, problem.initial.value_or(params));
    return central_difference(problem, prep.weight, params, step);
}

std::vector<double> initial_guess(const FitProblem& problem)
{
    problem.validate();
    const FitData& data = problem.data;
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return data.h[a] < data.h[b]; });
    const auto w = base_weights(problem);
    const auto lo = problem.lower.value_or(problem.default_lower());
    const auto hi = problem.upper.value_or(problem.default_upper());

    if (problem.kind == ModelKind::Short) {
        std::size_t first = 0;
        while (first < order.size() && problem.d >= 2 && data.h[order[first]] < 1e-8) ++first;
        if (first + 1 >= order.size()) throw std::invalid_argument("too few positive distances to initialize");
        const double h0 = data.h[order[first]];
        const double y0 = data.p_hat[order[first]];
        const double target = y0 / std::exp(1.0);
        double he = data.h[order.back()];
        for (std::size_t q = first + 1; q < order.size(); ++q) {
            const double ya = data.p_hat[order[q - 1]], yb = data.p_hat[order[q]];
            if (yb <= target) {
                const double ha = data.h[order[q - 1]], hb = data.h[order[q]];
                he = ya > yb ? ha + (ya - target) / (ya - yb) * (hb - ha) : hb;
                break;
            }
        }
        auto ratio_gap = [&](double log_sigma) {
            const double s = std::exp(log_sigma);
            const double g0 = short_shape(problem.d, problem.mu, std::max(h0, 1e-8 * s) / s);
            return std::log(short_shape(problem.d, problem.mu, he / s)) - std::log(g0) + 1.0;
        };
        double sigma = he;
        const double a = std::log(he) - 12.0, b = std::log(he) + 12.0;
        if (he > h0 && ratio_gap(a) * ratio_gap(b) < 0.0) {
            boost::uintmax_t iters = 200;
            const auto root = boost::math::tools::toms748_solve(
                ratio_gap, a, b, boost::math::tools::eps_tolerance<double>(40), iters);
            sigma = std::exp(0.5 * (root.first + root.second));
        }
        std::vector<double> g(data.size()), ws = w;
        for (std::size_t i = 0; i < data.size(); ++i) {
            g[i] = data.h[i] < 1e-8 && problem.d >= 2 ? 0.0 : short_shape(problem.d, problem.mu, data.h[i] / sigma);
            if (g[i] == 0.0) ws[i] = 0.0;
        }
        return clamp_to({sigma * sigma, weighted_linear_prefactor(data.p_hat, g, ws)}, lo, hi);
    }

    // alpha from the log-log slope of the outer third of the bins
    std::vector<double> lx, ly;
    const std::size_t n = order.size();
    for (std::size_t q = n - std::max<std::size_t>(2, n / 3); q < n; ++q) {
        const std::size_t i = order[q];
        if (data.h[i] > 0.0 && data.p_hat[i] > 0.0) {
            lx.push_back(std::log(data.h[i]));
            ly.push_back(std::log(data.p_hat[i]));
        }
    }
    double alpha = 0.5 * (lo[2] + hi[2]);
    if (lx.size() >= 2) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            mx += lx[i];
            my += ly[i];
        }
        mx /= lx.size();
        my /= lx.size();
        double sxy = 0, sxx = 0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        if (sxx > 0.0) alpha = std::clamp(-sxy / sxx, lo[2] + 0.05, hi[2] - 0.05);
    }
    const LongRangeModel shape = long_shape(problem.d, alpha);
    std::vector<double> hs;
    for (double h : data.h)
        if (h > 0.0) hs.push_back(h);
    std::sort(hs.begin(), hs.end());
    const double hmed = hs.empty() ? 1.0 : hs[hs.size() / 2];
    double best_rss = std::numeric_limits<double>::infinity();
    std::vector<double> best{1.0, 1.0 / hmed, alpha};
    for (int k = -12; k <= 12; ++k) {
        const double lambda = std::pow(10.0, k / 4.0) / hmed;
        std::vector<double> g(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            g[i] = f_long(shape, std::max(lambda * data.h[i], 1e-12 * lambda * hmed));
        const double A = weighted_linear_prefactor(data.p_hat, g, w);
        if (!(A > 0.0)) continue;
        double rss = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double e = problem.loss == LossScale::Linear ? A * g[i] - data.p_hat[i]
                                                               : std::log(A * g[i]) - std::log(data.p_hat[i]);
            rss += w[i] * e * e;
        }
        if (rss < best_rss) {
            best_rss = rss;
            best = {A, lambda, alpha};
        }
    }
    return clamp_to(best, lo, hi);
}

FitResult fit(const FitProblem& problem)
{
    std::vector<std::string> warnings;
    const FitProblem p = usable(problem, warnings);
    if (p.kind == ModelKind::Long) {
        for (double h : p.data.h)
            if (!(h > 0.0)) throw std::invalid_argument("the long-range model needs positive distances");
    }
    const std::vector<double> start = p.initial.value_or(initial_guess(p));
    std::vector<std::future<FitResult>> jobs;
    for (int s = 0; s < p.starts; ++s) {
        jobs.push_back(std::async(s == 0 ? std::launch::deferred : std::launch::async,
                                  [&p, &start, s] { return single_fit(p, scaled_start(p, start, s)); }));
    }
    std::optional<FitResult> best;
    std::string first_error;
    for (auto& j : jobs) {
        try {
            FitResult r = j.get();
            if (!best || r.residual_norm < best->residual_norm) best = std::move(r);
        }
        catch (const FitError& e) {
            if (first_error.empty()) first_error = e.what();
        }
    }
    if (!best) throw FitError(first_error);
    best->warnings = warnings;
    return *best;
}

double aic(const FitResult& r)
{
    const double n = static_cast<double>(r.n);
    const double rss = std::max(r.weighted_rss, 1e-300);
    return n * std::log(rss / n) + 2.0 * static_cast<double>(r.estimate.size());
}

ModelComparison compare_models(const std::vector<FitResult>& fits, double tie_threshold)
{
    if (fits.size() < 2) throw std::invalid_argument("model comparison needs at least two fits");
    for (const auto& f : fits) {
        if (f.n != fits.front().n) throw std::invalid_argument("compared fits must use the same data");
    }
    ModelComparison c;
    c.tie_threshold = tie_threshold;
    for (const auto& f : fits) c.entries.push_back({f.kind, f, aic(f)});
    std::sort(c.entries.begin(), c.entries.end(), [](const auto& a, const auto& b) { return a.aic < b.aic; });
    c.delta_aic = c.entries[1].aic - c.entries[0].aic;
    if (c.delta_aic > tie_threshold) c.preferred = c.entries[0].kind;
    return c;
}

ModelComparison model_select(const FitData& data, int d, double mu, const std::vector<ModelKind>& candidates)
{
    std::vector<FitResult> fits;
    for (ModelKind k : candidates) {
        FitProblem p;
        p.data = data;
        p.kind = k;
        p.d = d;
        p.mu = mu;
        fits.push_back(fit(p));
    }
    return compare_models(fits);
}

namespace {

nlohmann::json fit_json(const FitResult& r)
{
    nlohmann::json j;
    j["model"] = to_string(r.kind);
    const auto se = r.standard_errors();
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        j["parameters"][r.names[i]] = {{"estimate", r.estimate[i]}, {"std_error", se[i]}};
    }
    j["covariance"] = r.covariance;
    j["residual_norm"] = r.residual_norm;
    j["weighted_rss"] = r.weighted_rss;
    j["n"] = r.n;
    j["aic"] = aic(r);
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["termination"] = r.termination;
    j["gradient_max_norm"] = r.gradient_max_norm;
    j["warnings"] = r.warnings;
    return j;
}

}  // namespace

void write_fit_report(std::ostream& out, const FitResult& r) { out << fit_json(r).dump(2) << "\n"; }

void write_comparison_report(std::ostream& out, const ModelComparison& c)
{
    nlohmann::json j;
    for (const auto& e : c.entries) j["fits"].push_back(fit_json(e.result));
    j["delta_aic"] = c.delta_aic;
    j["tie_threshold"] = c.tie_threshold;
    j["preferred"] = c.preferred ? to_string(*c.preferred) : "tie";
    out << j.dump(2) << "\n";
}

void write_parameter_table(std::ostream& out, const std::vector<FitResult>& fits)
{
    out << "model,parameter,estimate,std_error\n";
    out.precision(17);
    for (const auto& r : fits) {
        const auto se = r.standard_errors();
        for (std::size_t i = 0; i < r.names.size(); ++i) {
            out << to_string(r.kind) << ',' << r.names[i] << ',' << r.estimate[i] << ',' << se[i] << '\n';
        }
    }
}

}  // namespace slfv
