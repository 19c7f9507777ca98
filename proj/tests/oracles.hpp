#pragma once

// Test-only reference computations. None of these call into the code path
// they are used to check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "vlcuav/deployment.hpp"
#include "vlcuav/grid.hpp"
#include "vlcuav/gru.hpp"

namespace oracle {

using vlcuav::Point2;

/// Lambertian gain evaluated term by term: distance, both angles, the
/// concentrator branch and the cosine powers are computed separately.
inline double literal_channel_gain(Point2 uav, Point2 user, const vlcuav::ChannelParams& p)
{
    const long double dx = user.x - uav.x;
    const long double dy = user.y - uav.y;
    const long double h = p.altitude;
    const long double d = std::sqrt(dx * dx + dy * dy + h * h);
    const long double psi = std::acos(h / d);
    const long double cos_phi = h / d;
    const long double cos_psi = std::cos(psi);
    if (psi > static_cast<long double>(p.fov_semiangle))
        return 0.0;
    const long double m = -std::log(2.0L) / std::log(std::cos(static_cast<long double>(p.semiangle)));
    const long double sin_fov = std::sin(static_cast<long double>(p.fov_semiangle));
    const long double g = p.refractive_index * p.refractive_index / (sin_fov * sin_fov);
    const long double pi = std::numbers::pi_v<long double>;
    return static_cast<double>((m + 1.0L) * p.detector_area / (2.0L * pi * d * d) * g * std::pow(cos_phi, m) * cos_psi);
}

/// Plain-loop long-double GRU step using the library's storage orientation
/// (input matrices D_q x D_h, recurrent matrices applied as U h).
struct ScalarStep {
    std::vector<long double> reset, update, candidate, hidden;
};

inline ScalarStep scalar_step(const vlcuav::gru::Model& m, const Eigen::VectorXd& q, const Eigen::VectorXd& h_prev)
{
    const auto dq = m.input_dim;
    const auto dh = m.hidden_dim;
    const auto& w = m.weights;
    auto sig = [](long double a) { return 1.0L / (1.0L + std::exp(-a)); };
    ScalarStep s;
    s.reset.resize(dh);
    s.update.resize(dh);
    s.candidate.resize(dh);
    s.hidden.resize(dh);
    for (Eigen::Index j = 0; j < dh; ++j) {
        long double ar = 0, az = 0;
        for (Eigen::Index i = 0; i < dq; ++i) {
            ar += static_cast<long double>(w.w_reset(i, j)) * q(i);
            az += static_cast<long double>(w.w_update(i, j)) * q(i);
        }
        for (Eigen::Index k = 0; k < dh; ++k) {
            ar += static_cast<long double>(w.u_reset(j, k)) * h_prev(k);
            az += static_cast<long double>(w.u_update(j, k)) * h_prev(k);
        }
        s.reset[j] = sig(ar);
        s.update[j] = sig(az);
    }
    for (Eigen::Index j = 0; j < dh; ++j) {
        long double ac = 0;
        for (Eigen::Index i = 0; i < dq; ++i)
            ac += static_cast<long double>(w.w_candidate(i, j)) * q(i);
        for (Eigen::Index k = 0; k < dh; ++k)
            ac += static_cast<long double>(w.u_candidate(j, k)) * s.reset[k] * h_prev(k);
        s.candidate[j] = std::tanh(ac);
        s.hidden[j] = s.update[j] * h_prev(j) + (1.0L - s.update[j]) * s.candidate[j];
    }
    return s;
}

/// Central finite-difference gradient of the teacher-forced loss for one matrix.
template <typename Select>
Eigen::MatrixXd finite_difference(const vlcuav::gru::Model& model, const Eigen::MatrixXd& series, Select select,
                                  double eps)
{
    auto probe = model;
    Eigen::MatrixXd& target = select(probe.weights);
    Eigen::MatrixXd grad(target.rows(), target.cols());
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        const double orig = target.data()[i];
        target.data()[i] = orig + eps;
        const double up = vlcuav::gru::series_loss(vlcuav::gru::forward(probe, series), series);
        target.data()[i] = orig - eps;
        const double down = vlcuav::gru::series_loss(vlcuav::gru::forward(probe, series), series);
        target.data()[i] = orig;
        grad.data()[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

struct Minimax {
    Point2 position;
    double binding = 0.0; // max_j a_j (|p - p_j|^2 + H^2) at the optimum
};

/// Exact minimiser of max_j a_j (|p - p_j|^2 + H^2) by enumerating the
/// points where one, two or three constraints are simultaneously active.
inline Minimax exact_minimax(const vlcuav::CellProblem& problem)
{
    const auto& users = problem.users;
    const double h2 = problem.params.altitude * problem.params.altitude;
    auto value = [&](Point2 p) {
        double v = 0.0;
        for (const auto& u : users)
            v = std::max(v, u.coeff * (vlcuav::squared_distance(p, u.position) + h2));
        return v;
    };
    Minimax best{{0, 0}, std::numeric_limits<double>::infinity()};
    auto consider = [&](Point2 p) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y))
            return;
        const double v = value(p);
        if (v < best.binding)
            best = {p, v};
    };
    auto roots = [](double a, double b, double c) {
        std::vector<double> r;
        if (std::abs(a) < 1e-300) {
            if (std::abs(b) > 0)
                r.push_back(-c / b);
            return r;
        }
        const double disc = b * b - 4 * a * c;
        if (disc < 0)
            return r;
        const double s = std::sqrt(disc);
        r.push_back((-b - s) / (2 * a));
        r.push_back((-b + s) / (2 * a));
        return r;
    };

    const std::size_t n = users.size();
    for (const auto& u : users)
        consider(u.position);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& ui = users[i];
            const auto& uj = users[j];
            const double l2 = vlcuav::squared_distance(ui.position, uj.position);
            const double ai = ui.coeff, aj = uj.coeff;
            for (double s : roots((ai - aj) * l2, 2 * aj * l2, (ai - aj) * h2 - aj * l2)) {
                if (s < 0 || s > 1)
                    continue;
                consider({ui.position.x + s * (uj.position.x - ui.position.x),
                          ui.position.y + s * (uj.position.y - ui.position.y)});
            }
        }
    }

    // f_i - f_j = alpha |p|^2 + b . p + c
    struct Diff {
        double alpha, bx, by, c;
    };
    auto diff = [&](const vlcuav::CellUser& a, const vlcuav::CellUser& b) {
        const double pa = a.position.x * a.position.x + a.position.y * a.position.y;
        const double pb = b.position.x * b.position.x + b.position.y * b.position.y;
        return Diff{a.coeff - b.coeff, -2 * (a.coeff * a.position.x - b.coeff * b.position.x),
                    -2 * (a.coeff * a.position.y - b.coeff * b.position.y),
                    a.coeff * pa - b.coeff * pb + (a.coeff - b.coeff) * h2};
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            for (std::size_t k = j + 1; k < n; ++k) {
                const Diff e1 = diff(users[i], users[j]);
                const Diff e2 = diff(users[i], users[k]);
                const double nx = e2.alpha * e1.bx - e1.alpha * e2.bx;
                const double ny = e2.alpha * e1.by - e1.alpha * e2.by;
                const double ne = e2.alpha * e1.c - e1.alpha * e2.c;
                if (std::abs(e1.alpha) < 1e-15 && std::abs(e2.alpha) < 1e-15) {
                    const double det = e1.bx * e2.by - e1.by * e2.bx;
                    if (std::abs(det) < 1e-300)
                        continue;
                    consider({(-e1.c * e2.by + e2.c * e1.by) / det, (-e2.c * e1.bx + e1.c * e2.bx) / det});
                    continue;
                }
                const double nn = nx * nx + ny * ny;
                if (nn < 1e-300)
                    continue;
                const Point2 p0{-ne * nx / nn, -ne * ny / nn};
                const double len = std::sqrt(nn);
                const Point2 d{-ny / len, nx / len};
                const Diff& e = std::abs(e1.alpha) >= std::abs(e2.alpha) ? e1 : e2;
                const double qa = e.alpha;
                const double qb = 2 * e.alpha * (p0.x * d.x + p0.y * d.y) + e.bx * d.x + e.by * d.y;
                const double qc = e.alpha * (p0.x * p0.x + p0.y * p0.y) + e.bx * p0.x + e.by * p0.y + e.c;
                for (double t : roots(qa, qb, qc))
                    consider({p0.x + t * d.x, p0.y + t * d.y});
            }
        }
    }
    return best;
}

/// Cell with users uniform on a side x side square, rates in [0.05, 0.15]
/// bits per use and ambient light uniform on [0, max_ambient].
inline vlcuav::CellProblem random_cell(std::uint64_t seed, std::size_t users, double side = 10.0,
                                       double max_ambient = 1.5e-6)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(0.0, side), rate(0.05, 0.15), amb(0.0, max_ambient);
    std::vector<vlcuav::UserDemand> demand;
    std::vector<double> ambient;
    for (std::size_t j = 0; j < users; ++j) {
        const double x = coord(rng), y = coord(rng);
        demand.push_back({{x, y}, rate(rng)});
        ambient.push_back(amb(rng));
    }
    return vlcuav::build_cell_problem(demand, ambient, vlcuav::ChannelParams{});
}

/// Raster of isotropic/axis-aligned Gaussian blobs sampled at pixel centres.
struct PlantedBlob {
    double mu_x, mu_y, sigma_x, sigma_y, peak;
};

inline vlcuav::IlluminationGrid planted_grid(const std::vector<PlantedBlob>& blobs, std::size_t width,
                                             std::size_t height, double cell, Point2 origin = {0, 0})
{
    vlcuav::IlluminationGrid g{origin, cell, width, height, std::vector<double>(width * height, 0.0)};
    for (std::size_t i = 0; i < g.values.size(); ++i) {
        const auto p = g.pixel_center(i);
        for (const auto& b : blobs) {
            const double dx = (p.x - b.mu_x) / b.sigma_x;
            const double dy = (p.y - b.mu_y) / b.sigma_y;
            g.values[i] += b.peak * std::exp(-0.5 * (dx * dx + dy * dy));
        }
    }
    return g;
}

} // namespace oracle
