#pragma once

// Axis-aligned Gaussian-mixture model of an illumination field,
//
//   I(x, y) = A * sum_k w_k exp(-(x - mu_xk)^2 / (2 sx_k^2) - (y - mu_yk)^2 / (2 sy_k^2)),
//
// its flat feature-vector encoding and a weighted EM fit on radiance rasters.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vlcuav/error.hpp"
#include "vlcuav/geometry.hpp"
#include "vlcuav/grid.hpp"

namespace vlcuav {

inline constexpr double default_sigma_floor = 0.05;

struct GaussianComponent {
    double weight = 0.0;
    double mu_x = 0.0;
    double mu_y = 0.0;
    double sigma_x = 1.0;
    double sigma_y = 1.0;

    Point2 center() const { return {mu_x, mu_y}; }

    friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct GmmFrame {
    double amplitude = 0.0;
    std::vector<GaussianComponent> components;

    std::size_t size() const { return components.size(); }

    friend bool operator==(const GmmFrame&, const GmmFrame&) = default;
};

inline std::size_t feature_length(std::size_t k) { return 5 * k + 1; }

inline void validate(const GmmFrame& f)
{
    if (f.components.empty())
        throw Error(ErrorKind::invalid_argument, "mixture has no components");
    if (!(f.amplitude >= 0.0))
        throw Error(ErrorKind::invalid_argument, "mixture amplitude must be non-negative");
    double sum = 0.0;
    for (const auto& c : f.components) {
        if (!(c.weight >= 0.0 && c.weight <= 1.0))
            throw Error(ErrorKind::invalid_argument, "component weight outside [0, 1]");
        if (!(c.sigma_x > 0.0 && c.sigma_y > 0.0))
            throw Error(ErrorKind::invalid_argument, "component deviations must be positive");
        sum += c.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw Error(ErrorKind::invalid_argument, "component weights must sum to 1");
}

inline double evaluate_gmm(const GmmFrame& f, Point2 p)
{
    double acc = 0.0;
    for (const auto& c : f.components) {
        const double dx = p.x - c.mu_x;
        const double dy = p.y - c.mu_y;
        acc += c.weight * std::exp(-dx * dx / (2.0 * c.sigma_x * c.sigma_x) -
                                   dy * dy / (2.0 * c.sigma_y * c.sigma_y));
    }
    return f.amplitude * acc;
}

/// Renders the mixture at every pixel centre of `like`.
inline IlluminationGrid render_gmm(const GmmFrame& f, const IlluminationGrid& like)
{
    IlluminationGrid out = like;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = evaluate_gmm(f, out.pixel_center(i));
    return out;
}

/// [A, w1, mux1, muy1, sx1, sy1, ..., wK, muxK, muyK, sxK, syK]
inline std::vector<double> flatten(const GmmFrame& f)
{
    std::vector<double> q;
    q.reserve(feature_length(f.size()));
    q.push_back(f.amplitude);
    for (const auto& c : f.components) {
        q.push_back(c.weight);
        q.push_back(c.mu_x);
        q.push_back(c.mu_y);
        q.push_back(c.sigma_x);
        q.push_back(c.sigma_y);
    }
    return q;
}

/// Inverse of flatten(). Vectors that are not valid frames (e.g. network
/// predictions) are projected: negative amplitude and weights go to zero,
/// weights are renormalised, deviations are clamped to `sigma_floor`.
inline GmmFrame unflatten(std::span<const double> q, std::size_t k, double sigma_floor = default_sigma_floor)
{
    if (k == 0 || q.size() != feature_length(k))
        throw Error(ErrorKind::shape_mismatch, "feature vector of length " + std::to_string(q.size()) +
                                                   " does not encode " + std::to_string(k) + " components");
    GmmFrame f;
    f.amplitude = q[0];
    f.components.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        auto& c = f.components[i];
        const auto* v = q.data() + 1 + 5 * i;
        c = {v[0], v[1], v[2], v[3], v[4]};
    }

    if (!(f.amplitude >= 0.0))
        f.amplitude = 0.0;

    bool weights_valid = true;
    double sum = 0.0;
    for (const auto& c : f.components) {
        weights_valid = weights_valid && c.weight >= 0.0 && c.weight <= 1.0;
        sum += c.weight;
    }
    weights_valid = weights_valid && std::abs(sum - 1.0) <= 1e-9;
    if (!weights_valid) {
        sum = 0.0;
        for (auto& c : f.components) {
            if (!(c.weight > 0.0))
                c.weight = 0.0;
            sum += c.weight;
        }
        for (auto& c : f.components)
            c.weight = sum > 0.0 ? c.weight / sum : 1.0 / static_cast<double>(k);
    }

    for (auto& c : f.components) {
        if (!(c.sigma_x >= sigma_floor))
            c.sigma_x = sigma_floor;
        if (!(c.sigma_y >= sigma_floor))
            c.sigma_y = sigma_floor;
    }
    return f;
}

/// Descending weight; ties by ascending mu_x, then mu_y.
inline void canonical_order(GmmFrame& f)
{
    std::stable_sort(f.components.begin(), f.components.end(),
                     [](const GaussianComponent& a, const GaussianComponent& b) {
                         if (a.weight != b.weight)
                             return a.weight > b.weight;
                         if (a.mu_x != b.mu_x)
                             return a.mu_x < b.mu_x;
                         return a.mu_y < b.mu_y;
                     });
}

/// Permutes the components of `next` so that the summed squared distance
/// between matched centres is minimal. Exhaustive; ties keep the
/// lexicographically first permutation, so the identity wins when optimal.
inline GmmFrame match_components(const GmmFrame& prev, const GmmFrame& next)
{
    const std::size_t k = prev.size();
    if (next.size() != k)
        throw Error(ErrorKind::shape_mismatch, "cannot match mixtures of different sizes");
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::size_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            cost += squared_distance(prev.components[i].center(), next.components[perm[i]].center());
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));

    GmmFrame out;
    out.amplitude = next.amplitude;
    out.components.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        out.components.push_back(next.components[best[i]]);
    return out;
}

struct EmConfig {
    int max_iters = 200;
    double tol = 1e-6; // relative log-likelihood improvement
    std::uint64_t seed = 1;
    double sigma_floor = default_sigma_floor;
};

struct GmmFit {
    GmmFrame frame;
    std::vector<double> log_likelihood; // per iteration, mass-normalised
    int iterations = 0;
    bool converged = false;
    bool sigma_clamped = false;
};

namespace detail {

struct WeightedPoint {
    double x;
    double y;
    double w; // normalised so that the weights sum to 1
};

struct EmComponent {
    double pi;
    double mx, my, sx, sy;
};

inline double log_normal_pdf(const EmComponent& c, double x, double y)
{
    const double dx = (x - c.mx) / c.sx;
    const double dy = (y - c.my) / c.sy;
    return -std::log(2.0 * std::numbers::pi * c.sx * c.sy) - 0.5 * (dx * dx + dy * dy);
}

// k-means++ style seeding on intensity-weighted pixel centres, followed by a
// hard assignment to obtain initial moments.
inline std::vector<EmComponent> seed_components(const std::vector<WeightedPoint>& pts, std::size_t k,
                                                const EmConfig& cfg, bool& clamped)
{
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto sample = [&](const std::vector<double>& mass) {
        const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
        double u = unit(rng) * total;
        for (std::size_t i = 0; i < mass.size(); ++i) {
            u -= mass[i];
            if (u <= 0.0 && mass[i] > 0.0)
                return i;
        }
        for (std::size_t i = mass.size(); i-- > 0;)
            if (mass[i] > 0.0)
                return i;
        return std::size_t{0};
    };

    std::vector<Point2> centers;
    std::vector<double> mass(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        mass[i] = pts[i].w;
    const std::size_t first = sample(mass);
    centers.push_back({pts[first].x, pts[first].y});
    std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            nearest[i] = std::min(nearest[i], squared_distance({pts[i].x, pts[i].y}, centers.back()));
            mass[i] = pts[i].w * nearest[i];
        }
        const std::size_t pick = sample(mass);
        centers.push_back({pts[pick].x, pts[pick].y});
    }

    std::vector<EmComponent> comps(k, EmComponent{0, 0, 0, 0, 0});
    std::vector<double> sxx(k, 0.0), syy(k, 0.0);
    std::vector<std::size_t> label(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            const double d = squared_distance({pts[i].x, pts[i].y}, centers[c]);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        label[i] = best;
        comps[best].pi += pts[i].w;
        comps[best].mx += pts[i].w * pts[i].x;
        comps[best].my += pts[i].w * pts[i].y;
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (comps[c].pi > 0.0) {
            comps[c].mx /= comps[c].pi;
            comps[c].my /= comps[c].pi;
        } else {
            comps[c].mx = centers[c].x;
            comps[c].my = centers[c].y;
        }
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto& c = comps[label[i]];
        sxx[label[i]] += pts[i].w * (pts[i].x - c.mx) * (pts[i].x - c.mx);
        syy[label[i]] += pts[i].w * (pts[i].y - c.my) * (pts[i].y - c.my);
    }
    for (std::size_t c = 0; c < k; ++c) {
        auto& comp = comps[c];
        const double n = comp.pi;
        comp.sx = n > 0.0 ? std::sqrt(sxx[c] / n) : 0.0;
        comp.sy = n > 0.0 ? std::sqrt(syy[c] / n) : 0.0;
        if (comp.sx < cfg.sigma_floor) {
            comp.sx = cfg.sigma_floor;
            clamped = true;
        }
        if (comp.sy < cfg.sigma_floor) {
            comp.sy = cfg.sigma_floor;
            clamped = true;
        }
        // Keep every component alive at the start.
        comp.pi = std::max(comp.pi, 1e-6);
    }
    const double total = std::accumulate(comps.begin(), comps.end(), 0.0,
                                         [](double s, const EmComponent& c) { return s + c.pi; });
    for (auto& c : comps)
        c.pi /= total;
    return comps;
}

} // namespace detail

/// Weighted EM on pixel centres (weight = radiance). The normalised mixture is
/// converted to the shared-amplitude form via component peaks
/// c_k = mass * cell^2 * pi_k / (2 pi sx_k sy_k), A = sum c_k, w_k = c_k / A.
inline GmmFit fit_gmm(const IlluminationGrid& grid, std::size_t k, const EmConfig& cfg = {})
{
    validate(grid);
    if (k == 0)
        throw Error(ErrorKind::invalid_argument, "mixture needs at least one component");
    const double mass = grid.total();
    if (!(mass > 0.0))
        throw Error(ErrorKind::no_illumination, "grid carries no radiance");

    std::vector<detail::WeightedPoint> pts;
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
        if (grid.values[i] > 0.0) {
            const auto p = grid.pixel_center(i);
            pts.push_back({p.x, p.y, grid.values[i] / mass});
        }
    }
    if (pts.size() < k)
        throw Error(ErrorKind::invalid_argument, "fewer lit pixels than mixture components");

    GmmFit fit;
    auto comps = detail::seed_components(pts, k, cfg, fit.sigma_clamped);

    std::vector<double> resp(pts.size() * k);
    std::vector<double> logp(k);
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        // E-step, accumulating the log-likelihood of the current parameters.
        double ll = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            double top = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                logp[c] = comps[c].pi > 0.0
                              ? std::log(comps[c].pi) + detail::log_normal_pdf(comps[c], pts[i].x, pts[i].y)
                              : -std::numeric_limits<double>::infinity();
                top = std::max(top, logp[c]);
            }
            double sum = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                resp[i * k + c] = std::exp(logp[c] - top);
                sum += resp[i * k + c];
            }
            for (std::size_t c = 0; c < k; ++c)
                resp[i * k + c] /= sum;
            ll += pts[i].w * (top + std::log(sum));
        }
        fit.log_likelihood.push_back(ll);
        fit.iterations = iter + 1;
        const auto n = fit.log_likelihood.size();
        if (n >= 2 && fit.log_likelihood[n - 1] - fit.log_likelihood[n - 2] <
                          cfg.tol * std::abs(fit.log_likelihood[n - 2])) {
            fit.converged = true;
            break;
        }

        // M-step.
        for (std::size_t c = 0; c < k; ++c) {
            double nk = 0.0, mx = 0.0, my = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double r = pts[i].w * resp[i * k + c];
                nk += r;
                mx += r * pts[i].x;
                my += r * pts[i].y;
            }
            auto& comp = comps[c];
            comp.pi = nk;
            if (!(nk > 0.0))
                continue;
            mx /= nk;
            my /= nk;
            double vx = 0.0, vy = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double r = pts[i].w * resp[i * k + c];
                vx += r * (pts[i].x - mx) * (pts[i].x - mx);
                vy += r * (pts[i].y - my) * (pts[i].y - my);
            }
            comp.mx = mx;
            comp.my = my;
            comp.sx = std::sqrt(vx / nk);
            comp.sy = std::sqrt(vy / nk);
            if (!(comp.sx >= cfg.sigma_floor)) {
                comp.sx = cfg.sigma_floor;
                fit.sigma_clamped = true;
            }
            if (!(comp.sy >= cfg.sigma_floor)) {
                comp.sy = cfg.sigma_floor;
                fit.sigma_clamped = true;
            }
        }
    }

    const double cell_area = grid.cell_size * grid.cell_size;
    std::vector<double> peaks(k);
    for (std::size_t c = 0; c < k; ++c)
        peaks[c] = mass * cell_area * comps[c].pi / (2.0 * std::numbers::pi * comps[c].sx * comps[c].sy);
    const double amplitude = std::accumulate(peaks.begin(), peaks.end(), 0.0);
    fit.frame.amplitude = amplitude;
    for (std::size_t c = 0; c < k; ++c)
        fit.frame.components.push_back(
            {peaks[c] / amplitude, comps[c].mx, comps[c].my, comps[c].sx, comps[c].sy});
    canonical_order(fit.frame);
    return fit;
}

/// Frame used when a raster carries no light at all: zero amplitude, uniform
/// weights, floor-width components at the raster centre.
inline GmmFrame dark_frame(const IlluminationGrid& grid, std::size_t k, double sigma_floor = default_sigma_floor)
{
    const Point2 c{grid.origin.x + 0.5 * grid.cell_size * static_cast<double>(grid.width),
                   grid.origin.y + 0.5 * grid.cell_size * static_cast<double>(grid.height)};
    GmmFrame f;
    f.components.assign(k, {1.0 / static_cast<double>(k), c.x, c.y, sigma_floor, sigma_floor});
    return f;
}

} // namespace vlcuav
