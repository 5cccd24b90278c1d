#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "darswin/lens.hpp"
#include "darswin/threads.hpp"

namespace darswin {

/// Monotone reparameterization of the incident angle,
///
///   g(theta) = lambda * b * (theta/a)^n + (1 - lambda) * (1 - (1 - theta/a)^m)
///
/// on [0, a] with a = fov/2. Radial sample nodes are placed uniformly in
/// g-space and mapped back through g^-1, so curves that rise quickly where
/// the lens spreads radii apart produce denser angle samples there.
struct GFunction {
    double lambda = 1.0;  // mixing weight in [0, 1]
    double n = 1.0;       // power-law exponent, > 0
    double m = 1.0;       // reflected exponent, > 0
    double b = 1.0;       // power-law scale, > 0
    double a = kPi / 2;   // half field of view, radians
};

inline void validate(const GFunction& g) {
    if (g.lambda < 0.0 || g.lambda > 1.0)
        throw std::domain_error("sampling: lambda out of [0,1]: " + std::to_string(g.lambda));
    if (!(g.n > 0.0) || !(g.m > 0.0) || !(g.b > 0.0) || !(g.a > 0.0))
        throw std::domain_error("sampling: GFunction parameters must be positive");
}

namespace detail {
inline void check_g_theta(const GFunction& g, double theta) {
    constexpr double tol = 1e-12;
    if (theta < -tol || theta > g.a + tol)
        throw std::domain_error("sampling: theta " + std::to_string(theta) +
                                " outside [0, a] with a=" + std::to_string(g.a));
}
}  // namespace detail

inline double g_eval(const GFunction& g, double theta) {
    detail::check_g_theta(g, theta);
    const double t = std::clamp(theta / g.a, 0.0, 1.0);
    return g.lambda * g.b * std::pow(t, g.n) + (1.0 - g.lambda) * (1.0 - std::pow(1.0 - t, g.m));
}

inline double g_derivative(const GFunction& g, double theta) {
    detail::check_g_theta(g, theta);
    const double t = std::clamp(theta / g.a, 0.0, 1.0);
    const double dp = g.n <= 1.0 && t == 0.0 ? (g.n == 1.0 ? 1.0 : std::numeric_limits<double>::infinity())
                                             : std::pow(t, g.n - 1.0);
    const double dq = g.m <= 1.0 && t == 1.0 ? (g.m == 1.0 ? 1.0 : std::numeric_limits<double>::infinity())
                                             : std::pow(1.0 - t, g.m - 1.0);
    return g.lambda * g.b * g.n / g.a * dp + (1.0 - g.lambda) * g.m / g.a * dq;
}

/// g is monotone, so bisection converges unconditionally. |g(theta) - u| < 1e-10.
inline double g_inverse(const GFunction& g, double u) {
    const double ga = g_eval(g, g.a);
    if (u < -1e-12 || u > ga + 1e-12)
        throw std::domain_error("sampling: u " + std::to_string(u) + " outside [0, g(a)=" +
                                std::to_string(ga) + "]");
    if (u <= 0.0) return 0.0;
    if (u >= ga) return g.a;
    double lo = 0.0, hi = g.a;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * g.a; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (g_eval(g, mid) < u)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Inclusive linspace search grid matching the published protocol:
/// "k steps" over [lo, hi] means k linearly spaced points including both ends.
struct SearchGrid {
    int lambda_steps = 10;  // over [0, 1]
    int m_steps = 60;       // over [1, 20]
    int n_steps = 20;       // over [0.5, 5]
    int b_steps = 40;       // over [2, 10]
    int theta_grid = 512;
    double lambda_lo = 0.0, lambda_hi = 1.0;
    double m_lo = 1.0, m_hi = 20.0;
    double n_lo = 0.5, n_hi = 5.0;
    double b_lo = 2.0, b_hi = 10.0;
};

inline void validate(const SearchGrid& grid) {
    if (grid.lambda_steps < 1 || grid.m_steps < 1 || grid.n_steps < 1 || grid.b_steps < 1)
        throw std::domain_error("sampling: grid step counts must be >= 1");
    if (grid.theta_grid < 2)
        throw std::domain_error("sampling: theta_grid must be >= 2");
}

inline std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * i / (count - 1);
    return v;
}

/// Interior theta evaluation grid for the sparsity objective. Endpoints are
/// excluded by half a cell so g'(0) = 0 candidates (n > 1) stay evaluable.
inline std::vector<double> objective_theta_grid(double a, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) v[i] = (i + 0.5) * a / count;
    return v;
}

/// Worst-case inter-sample spread proxy: evaluates P'(theta)/g'(theta) for
/// xi = 0 and xi = 1 (focal normalized per xi) on the interior theta grid and
/// returns the sum of the two maxima. Degenerate candidates whose g'
/// underflows below 1e-12 anywhere on the grid score +infinity.
inline double sparsity_objective(const GFunction& g, double fov, int theta_grid = 512) {
    validate(g);
    if (!(fov > 0.0) || fov >= kPi)
        throw std::domain_error("sampling: fov out of (0,pi): " + std::to_string(fov));
    const LensModel lens0 = make_lens(0.0, fov);
    const LensModel lens1 = make_lens(1.0, fov);
    const std::vector<double> thetas = objective_theta_grid(g.a, theta_grid);
    double max0 = 0.0, max1 = 0.0;
    for (const double th : thetas) {
        const double gp = g_derivative(g, th);
        if (gp < 1e-12) return std::numeric_limits<double>::infinity();
        max0 = std::max(max0, projection_derivative(lens0, std::min(th, fov / 2.0)) / gp);
        max1 = std::max(max1, projection_derivative(lens1, std::min(th, fov / 2.0)) / gp);
    }
    return max0 + max1;
}

struct RankedCandidate {
    GFunction g;
    double cost = std::numeric_limits<double>::infinity();
    std::size_t lex_index = 0;  // flattened (lambda, m, n, b) grid index
};

struct GridSearchResult {
    GFunction best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<RankedCandidate> ranking;  // ascending cost, lex index tie-break
};

/// Exhaustive evaluation of sparsity_objective over the full parameter grid.
/// Candidates are scored independently (parallel over lambda rows) and
/// reduced in lexicographic (lambda, m, n, b) order, so ties and the ranking
/// are deterministic regardless of thread count.
inline GridSearchResult grid_search(const SearchGrid& grid, double fov, int threads = 0,
                                    bool keep_ranking = false) {
    validate(grid);
    const double a = fov / 2.0;
    const std::vector<double> lambdas = linspace(grid.lambda_lo, grid.lambda_hi, grid.lambda_steps);
    const std::vector<double> ms = linspace(grid.m_lo, grid.m_hi, grid.m_steps);
    const std::vector<double> ns = linspace(grid.n_lo, grid.n_hi, grid.n_steps);
    const std::vector<double> bs = linspace(grid.b_lo, grid.b_hi, grid.b_steps);

    const LensModel lens0 = make_lens(0.0, fov);
    const LensModel lens1 = make_lens(1.0, fov);
    const std::vector<double> thetas = objective_theta_grid(a, grid.theta_grid);
    const std::size_t nt = thetas.size();

    // P' depends only on the lens, g' factors into per-exponent pow tables;
    // the inner loop over (b, theta) is then multiply-add only.
    std::vector<double> p0(nt), p1(nt), tfrac(nt), sfrac(nt);
    for (std::size_t i = 0; i < nt; ++i) {
        p0[i] = projection_derivative(lens0, thetas[i]);
        p1[i] = projection_derivative(lens1, thetas[i]);
        tfrac[i] = thetas[i] / a;
        sfrac[i] = 1.0 - tfrac[i];
    }
    std::vector<std::vector<double>> tpow(ns.size(), std::vector<double>(nt));
    for (std::size_t k = 0; k < ns.size(); ++k)
        for (std::size_t i = 0; i < nt; ++i) tpow[k][i] = std::pow(tfrac[i], ns[k] - 1.0);
    std::vector<std::vector<double>> spow(ms.size(), std::vector<double>(nt));
    for (std::size_t k = 0; k < ms.size(); ++k)
        for (std::size_t i = 0; i < nt; ++i) spow[k][i] = std::pow(sfrac[i], ms[k] - 1.0);

    const std::size_t per_lambda = ms.size() * ns.size() * bs.size();
    std::vector<double> costs(lambdas.size() * per_lambda);

    parallel_for(lambdas.size(), threads, [&](std::size_t llo, std::size_t lhi) {
        for (std::size_t li = llo; li < lhi; ++li) {
            const double lambda = lambdas[li];
            std::size_t idx = li * per_lambda;
            for (std::size_t mi = 0; mi < ms.size(); ++mi) {
                const double qcoef = (1.0 - lambda) * ms[mi] / a;
                for (std::size_t ni = 0; ni < ns.size(); ++ni) {
                    const double pcoef = lambda * ns[ni] / a;
                    for (std::size_t bi = 0; bi < bs.size(); ++bi, ++idx) {
                        const double pb = pcoef * bs[bi];
                        double max0 = 0.0, max1 = 0.0;
                        bool degenerate = false;
                        for (std::size_t i = 0; i < nt; ++i) {
                            const double gp = pb * tpow[ni][i] + qcoef * spow[mi][i];
                            if (gp < 1e-12) {
                                degenerate = true;
                                break;
                            }
                            max0 = std::max(max0, p0[i] / gp);
                            max1 = std::max(max1, p1[i] / gp);
                        }
                        costs[idx] = degenerate ? std::numeric_limits<double>::infinity()
                                                : max0 + max1;
                    }
                }
            }
        }
    });

    GridSearchResult out;
    std::size_t best_idx = 0;
    for (std::size_t i = 0; i < costs.size(); ++i)
        if (costs[i] < costs[best_idx]) best_idx = i;
    const auto unflatten = [&](std::size_t idx) {
        const std::size_t bi = idx % bs.size();
        const std::size_t ni = (idx / bs.size()) % ns.size();
        const std::size_t mi = (idx / (bs.size() * ns.size())) % ms.size();
        const std::size_t li = idx / per_lambda;
        return GFunction{lambdas[li], ns[ni], ms[mi], bs[bi], a};
    };
    out.best = unflatten(best_idx);
    out.best_cost = costs[best_idx];
    if (keep_ranking) {
        out.ranking.resize(costs.size());
        for (std::size_t i = 0; i < costs.size(); ++i)
            out.ranking[i] = RankedCandidate{unflatten(i), costs[i], i};
        std::stable_sort(out.ranking.begin(), out.ranking.end(),
                         [](const RankedCandidate& x, const RankedCandidate& y) {
                             if (x.cost != y.cost) return x.cost < y.cost;
                             return x.lex_index < y.lex_index;
                         });
    }
    return out;
}

/// Radial patch boundaries: uniform partition of [0, g(a)] mapped through
/// g^-1 and projected. Node 0 is exactly (0, 0) and node count is exactly
/// (fov/2, 1) by the focal normalization.
inline std::vector<std::pair<double, double>> radial_nodes(const LensModel& lens,
                                                           const GFunction& g, int count) {
    if (count < 1) throw std::domain_error("sampling: radial node count must be >= 1");
    validate(g);
    const double ga = g_eval(g, g.a);
    std::vector<std::pair<double, double>> nodes(static_cast<std::size_t>(count) + 1);
    nodes[0] = {0.0, 0.0};
    nodes[count] = {g.a, 1.0};
    for (int j = 1; j < count; ++j) {
        const double theta = g_inverse(g, ga * j / count);
        nodes[j] = {theta, project(lens, theta)};
    }
    return nodes;
}

/// Uniform partition of [0, 2pi]; first node 0, last node exactly 2pi.
inline std::vector<double> azimuth_nodes(int count) {
    if (count < 1) throw std::domain_error("sampling: azimuth node count must be >= 1");
    std::vector<double> nodes(static_cast<std::size_t>(count) + 1);
    for (int j = 0; j <= count; ++j) nodes[j] = 2.0 * kPi * j / count;
    nodes[count] = 2.0 * kPi;
    return nodes;
}

/// Baseline radial parameterizations used for sparsity comparisons:
/// radii from uniform increments of theta itself and of tan(theta).
inline std::vector<double> radii_uniform_theta(const LensModel& lens, int samples) {
    if (samples < 2) throw std::domain_error("sampling: need >= 2 radial samples");
    std::vector<double> radii(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j)
        radii[j] = project(lens, lens.fov / 2.0 * j / (samples - 1));
    return radii;
}

inline std::vector<double> radii_uniform_tan(const LensModel& lens, int samples) {
    if (samples < 2) throw std::domain_error("sampling: need >= 2 radial samples");
    const double tmax = std::tan(lens.fov / 2.0);
    std::vector<double> radii(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j)
        radii[j] = project(lens, std::atan(tmax * j / (samples - 1)));
    return radii;
}

inline std::vector<double> radii_uniform_g(const LensModel& lens, const GFunction& g,
                                           int samples) {
    if (samples < 2) throw std::domain_error("sampling: need >= 2 radial samples");
    const double ga = g_eval(g, g.a);
    std::vector<double> radii(static_cast<std::size_t>(samples));
    for (int j = 0; j < samples; ++j)
        radii[j] = project(lens, g_inverse(g, ga * j / (samples - 1)));
    radii.back() = 1.0;
    return radii;
}

inline double max_gap(const std::vector<double>& radii) {
    double gap = 0.0;
    for (std::size_t i = 1; i < radii.size(); ++i) gap = std::max(gap, radii[i] - radii[i - 1]);
    return gap;
}

/// Largest hole in the dense radial sample set (normalized radius units).
inline double max_radial_gap(const LensModel& lens, const GFunction& g, int samples_per_radius) {
    return max_gap(radii_uniform_g(lens, g, samples_per_radius));
}

/// The optimum reported for the unified model at 175 degrees field of view.
inline GFunction reference_g(double fov = deg2rad(175.0)) {
    return GFunction{0.777, 5.0, 5.5084, 4.1052, fov / 2.0};
}

inline nlohmann::json g_to_json(const GFunction& g, double cost = -1.0) {
    nlohmann::json j{{"lambda", g.lambda}, {"m", g.m}, {"n", g.n}, {"b", g.b}, {"a_rad", g.a}};
    if (cost >= 0.0) j["cost"] = cost;
    return j;
}

inline GFunction g_from_json(const nlohmann::json& j) {
    GFunction g{j.at("lambda").get<double>(), j.at("n").get<double>(), j.at("m").get<double>(),
                j.at("b").get<double>(), j.at("a_rad").get<double>()};
    validate(g);
    return g;
}

}  // namespace darswin
