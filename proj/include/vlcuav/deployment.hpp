#pragma once

// Per-UAV placement and power subproblem
//
//   min P   s.t.  P^(2/(m+3)) >= a_j ((x - x_j)^2 + (y - y_j)^2 + H^2)   for every user j,
//
// solved by projected dual ascent on the multipliers with the closed-form
// primal minimisers
//
//   P = (2/(m+3) sum_j lambda_j)^((m+3)/(m+1)),
//   (x, y) = sum_j lambda_j a_j (x_j, y_j) / sum_j lambda_j a_j.

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

#include "vlcuav/channel.hpp"
#include "vlcuav/error.hpp"
#include "vlcuav/geometry.hpp"
#include "vlcuav/gmm.hpp"

namespace vlcuav {

struct CellUser {
    Point2 position;
    double rate = 0.0;    // bits per channel use
    double ambient = 0.0; // ambient radiance at the user
    double coeff = 0.0;   // a_j
};

struct CellProblem {
    std::vector<CellUser> users;
    ChannelParams params;

    /// 2 / (m + 3)
    double constraint_exponent() const { return 2.0 / (lambert_order(params) + 3.0); }
};

/// l = 2 pi / (xi (m+1) S g H^(m+1)), with g at its within-FOV value.
inline double path_loss_factor(const ChannelParams& p)
{
    const double m = lambert_order(p);
    return 2.0 * std::numbers::pi / (p.illumination_target * (m + 1.0) * p.detector_area *
                                     concentrator_gain_in_fov(p) * std::pow(p.altitude, m + 1.0));
}

/// Shortfall of ambient light against the illumination demand (may be negative).
inline double illumination_shortfall(double ambient, const ChannelParams& p) { return p.illumination_demand - ambient; }

/// Rate-driven term (n_w + I) sqrt(2 pi / e (2^(2R) - 1)).
inline double rate_term(double rate, double ambient, const ChannelParams& p)
{
    return (p.noise_std + ambient) * std::sqrt(2.0 * std::numbers::pi / std::numbers::e *
                                               std::expm1(2.0 * rate * std::numbers::ln2));
}

inline double user_coefficient(double rate, double ambient, const ChannelParams& p)
{
    const double l = path_loss_factor(p);
    const double m = lambert_order(p);
    const double binding = std::max(l * illumination_shortfall(ambient, p), l * rate_term(rate, ambient, p));
    return std::pow(binding, 2.0 / (m + 3.0));
}

inline CellProblem build_cell_problem(std::span<const UserDemand> users, std::span<const double> ambient,
                                      const ChannelParams& params)
{
    validate(params);
    if (users.empty())
        throw Error(ErrorKind::empty_cell, "cell has no users");
    if (ambient.size() != users.size())
        throw Error(ErrorKind::shape_mismatch, "one ambient value per user is required");
    CellProblem problem{{}, params};
    problem.users.reserve(users.size());
    for (std::size_t j = 0; j < users.size(); ++j) {
        if (!(users[j].rate > 0.0))
            throw Error(ErrorKind::invalid_argument, "user rates must be positive");
        problem.users.push_back({users[j].position, users[j].rate, ambient[j],
                                 user_coefficient(users[j].rate, ambient[j], params)});
    }
    return problem;
}

/// Ambient light at each user is read off the (predicted) mixture.
inline CellProblem build_cell_problem(std::span<const UserDemand> users, const GmmFrame& field,
                                      const ChannelParams& params)
{
    std::vector<double> ambient;
    ambient.reserve(users.size());
    for (const auto& u : users)
        ambient.push_back(evaluate_gmm(field, u.position));
    return build_cell_problem(users, ambient, params);
}

/// max_j a_j d_j^2 at a candidate position, i.e. P^(2/(m+3)) of the cheapest feasible power.
inline double binding_constraint(const CellProblem& problem, Point2 uav)
{
    const double h2 = problem.params.altitude * problem.params.altitude;
    double worst = 0.0;
    for (const auto& u : problem.users)
        worst = std::max(worst, u.coeff * (squared_distance(uav, u.position) + h2));
    return worst;
}

/// Minimum power that satisfies every constraint with the UAV at `uav`.
inline double power_at(const CellProblem& problem, Point2 uav)
{
    return std::pow(binding_constraint(problem, uav), 1.0 / problem.constraint_exponent());
}

struct SolverConfig {
    double step = 0.01;          // initial dual step size
    int max_iters = 50'000;
    double tol_feas = 1e-9;      // constraint units (power^(2/(m+3)))
    double tol_obj = 1e-8;       // relative
};

struct DeploymentSolution {
    Point2 position;
    double power = 0.0;
    std::vector<double> duals;
    int iterations = 0;
    std::vector<double> slack; // a_j d_j^2 - P^(2/(m+3)); <= 0 when satisfied
    bool converged = false;
};

/// Thrown when the iteration budget runs out; carries the best iterate found.
class SolverNotConverged : public Error {
public:
    explicit SolverNotConverged(DeploymentSolution best)
        : Error(ErrorKind::not_converged,
                "dual ascent stopped after " + std::to_string(best.iterations) + " iterations"),
          best_(std::move(best))
    {
    }

    const DeploymentSolution& best() const noexcept { return best_; }

private:
    DeploymentSolution best_;
};

inline std::vector<double> constraint_slack(const CellProblem& problem, Point2 uav, double power)
{
    const double h2 = problem.params.altitude * problem.params.altitude;
    const double lhs = std::pow(power, problem.constraint_exponent());
    std::vector<double> slack;
    slack.reserve(problem.users.size());
    for (const auto& u : problem.users)
        slack.push_back(u.coeff * (squared_distance(uav, u.position) + h2) - lhs);
    return slack;
}

/// Largest |lambda_j * slack_j|.
inline double complementary_slackness(const DeploymentSolution& s)
{
    double worst = 0.0;
    for (std::size_t j = 0; j < s.duals.size(); ++j)
        worst = std::max(worst, std::abs(s.duals[j] * s.slack[j]));
    return worst;
}

inline void check_fov(const CellProblem& problem, Point2 uav)
{
    for (const auto& u : problem.users)
        if (channel_gain(uav, u.position, problem.params) <= 0.0)
            throw Error(ErrorKind::user_outside_fov, "user at (" + std::to_string(u.position.x) + ", " +
                                                         std::to_string(u.position.y) +
                                                         ") is outside the receiver FOV");
}

namespace detail {

struct DualPoint {
    std::vector<double> lambda;
    Point2 position;
    double power = 0.0;
    double value = 0.0;          // Lagrange dual function
    std::vector<double> gradient; // a_j d_j^2 - P^c
};

// Closed-form minimisation of the Lagrangian for fixed multipliers.
inline DualPoint evaluate_dual(const CellProblem& problem, std::vector<double> lambda, Point2 held)
{
    const double c = problem.constraint_exponent();
    const double h2 = problem.params.altitude * problem.params.altitude;
    DualPoint d;
    d.lambda = std::move(lambda);
    double sum = 0.0, wsum = 0.0, wx = 0.0, wy = 0.0;
    for (std::size_t j = 0; j < problem.users.size(); ++j) {
        const double lj = d.lambda[j];
        const auto& u = problem.users[j];
        sum += lj;
        wsum += lj * u.coeff;
        wx += lj * u.coeff * u.position.x;
        wy += lj * u.coeff * u.position.y;
    }
    // With every multiplier at zero the location is undetermined; keep the last one.
    d.position = wsum > 0.0 ? Point2{wx / wsum, wy / wsum} : held;
    d.power = std::pow(c * sum, 1.0 / (1.0 - c));
    const double lhs = std::pow(d.power, c);
    d.value = d.power;
    d.gradient.resize(problem.users.size());
    for (std::size_t j = 0; j < problem.users.size(); ++j) {
        const auto& u = problem.users[j];
        d.gradient[j] = u.coeff * (squared_distance(d.position, u.position) + h2) - lhs;
        d.value += d.lambda[j] * d.gradient[j];
    }
    return d;
}

} // namespace detail

/// Projected dual ascent with an adaptive (backtracking) step. Stops when the
/// primal iterate is feasible within tol_feas, its relative change and the
/// duality gap are both below tol_obj. The reported power is recomputed from
/// the final position, so it satisfies every constraint exactly.
inline DeploymentSolution solve_cell(const CellProblem& problem, const SolverConfig& config = {})
{
    validate(problem.params);
    const std::size_t n = problem.users.size();
    if (n == 0)
        throw Error(ErrorKind::empty_cell, "cell has no users");
    for (const auto& u : problem.users)
        if (!(u.coeff > 0.0) || !std::isfinite(u.coeff))
            throw Error(ErrorKind::invalid_argument, "user coefficients must be positive and finite");
    if (!(config.step > 0.0))
        throw Error(ErrorKind::invalid_argument, "dual step size must be positive");

    auto finish = [&](const detail::DualPoint& d, int iterations, bool converged) {
        DeploymentSolution s;
        s.position = d.position;
        s.power = power_at(problem, d.position);
        s.duals = d.lambda;
        s.iterations = iterations;
        s.slack = constraint_slack(problem, s.position, s.power);
        s.converged = converged;
        return s;
    };

    Point2 held{0.0, 0.0};
    for (const auto& u : problem.users) {
        held.x += u.position.x / static_cast<double>(n);
        held.y += u.position.y / static_cast<double>(n);
    }
    auto current = detail::evaluate_dual(problem, std::vector<double>(n, 1.0 / static_cast<double>(n)), held);
    double step = config.step;
    int iterations = 0;
    double previous_power = std::numeric_limits<double>::infinity();
    auto best = current;
    double best_violation = std::numeric_limits<double>::infinity();

    for (int iter = 1; iter <= config.max_iters; ++iter) {
        iterations = iter;
        const double violation = *std::max_element(current.gradient.begin(), current.gradient.end());
        double gap = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            gap -= current.lambda[j] * current.gradient[j];
        if (violation < best_violation) {
            best_violation = violation;
            best = current;
        }
        const double change = std::abs(current.power - previous_power) / std::max(current.power, 1e-300);
        if (violation < config.tol_feas && change < config.tol_obj &&
            std::abs(gap) <= config.tol_obj * current.power)
            break;
        if (iter == config.max_iters) {
            auto s = finish(best, iter, false);
            throw SolverNotConverged(std::move(s));
        }
        previous_power = current.power;

        // Backtrack until the concave dual shows sufficient increase.
        for (int tries = 0;; ++tries) {
            std::vector<double> next(n);
            double move2 = 0.0, linear = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                next[j] = std::max(0.0, current.lambda[j] + step * current.gradient[j]);
                const double dl = next[j] - current.lambda[j];
                move2 += dl * dl;
                linear += current.gradient[j] * dl;
            }
            auto trial = detail::evaluate_dual(problem, std::move(next), current.position);
            const double slack = 1e-15 * (std::abs(current.value) + std::abs(trial.value));
            if (trial.value + slack >= current.value + linear - move2 / (2.0 * step) || tries >= 60) {
                current = std::move(trial);
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
    }
    return finish(current, iterations, true);
}

/// Verification oracle: grid search of power_at() over the users' bounding
/// box padded by 2 m, then one coordinate-descent pass at grid_step / 10.
inline DeploymentSolution brute_force_cell(const CellProblem& problem, double grid_step)
{
    if (!(grid_step > 0.0))
        throw Error(ErrorKind::invalid_argument, "grid step must be positive");
    if (problem.users.empty())
        throw Error(ErrorKind::empty_cell, "cell has no users");
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& u : problem.users) {
        x0 = std::min(x0, u.position.x);
        x1 = std::max(x1, u.position.x);
        y0 = std::min(y0, u.position.y);
        y1 = std::max(y1, u.position.y);
    }
    x0 -= 2.0;
    y0 -= 2.0;
    x1 += 2.0;
    y1 += 2.0;
    const auto nx = static_cast<long>(std::floor((x1 - x0) / grid_step));
    const auto ny = static_cast<long>(std::floor((y1 - y0) / grid_step));
    Point2 best{x0, y0};
    double best_value = binding_constraint(problem, best);
    for (long i = 0; i <= nx; ++i) {
        for (long k = 0; k <= ny; ++k) {
            const Point2 p{x0 + static_cast<double>(i) * grid_step, y0 + static_cast<double>(k) * grid_step};
            const double v = binding_constraint(problem, p);
            if (v < best_value) {
                best_value = v;
                best = p;
            }
        }
    }
    const double fine = grid_step / 10.0;
    for (int axis = 0; axis < 2; ++axis) {
        const Point2 start = best;
        for (int i = -10; i <= 10; ++i) {
            Point2 p = start;
            (axis == 0 ? p.x : p.y) += static_cast<double>(i) * fine;
            const double v = binding_constraint(problem, p);
            if (v < best_value) {
                best_value = v;
                best = p;
            }
        }
    }
    DeploymentSolution s;
    s.position = best;
    s.power = std::pow(best_value, 1.0 / problem.constraint_exponent());
    s.slack = constraint_slack(problem, s.position, s.power);
    s.converged = true;
    return s;
}

/// Splits users into at most `uav_count` aerial cells by seeded k-means
/// (k-means++ seeding, Lloyd iterations, best of several restarts). Each entry
/// holds user indices; empty clusters are dropped.
inline std::vector<std::vector<std::size_t>> partition_users(std::span<const UserDemand> users,
                                                             std::size_t uav_count, std::uint64_t seed)
{
    if (uav_count < 1)
        throw Error(ErrorKind::invalid_argument, "at least one UAV is required");
    if (users.empty())
        throw Error(ErrorKind::empty_cell, "no users to partition");
    if (uav_count > users.size())
        throw Error(ErrorKind::too_many_uavs, std::to_string(uav_count) + " UAVs for " +
                                                  std::to_string(users.size()) + " users");
    constexpr int restarts = 8;
    const std::size_t n = users.size();
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> best_label;
    double best_inertia = std::numeric_limits<double>::infinity();

    for (int attempt = 0; attempt < restarts; ++attempt) {
        std::vector<Point2> centers;
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        centers.push_back(users[pick(rng)].position);
        std::vector<double> d2(n);
        while (centers.size() < uav_count) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                d2[i] = std::numeric_limits<double>::infinity();
                for (const auto& c : centers)
                    d2[i] = std::min(d2[i], squared_distance(users[i].position, c));
                total += d2[i];
            }
            std::uniform_real_distribution<double> unit(0.0, total);
            double u = unit(rng);
            std::size_t chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                u -= d2[i];
                if (u <= 0.0 && d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
            centers.push_back(users[chosen].position);
        }

        std::vector<std::size_t> label(n, uav_count);
        for (int iter = 0; iter < 1000; ++iter) {
            bool changed = false;
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t arg = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < centers.size(); ++c) {
                    const double d = squared_distance(users[i].position, centers[c]);
                    if (d < bd) {
                        bd = d;
                        arg = c;
                    }
                }
                if (label[i] != arg) {
                    label[i] = arg;
                    changed = true;
                }
            }
            if (!changed)
                break;
            std::vector<Point2> sums(centers.size(), Point2{0.0, 0.0});
            std::vector<std::size_t> counts(centers.size(), 0);
            for (std::size_t i = 0; i < n; ++i) {
                sums[label[i]].x += users[i].position.x;
                sums[label[i]].y += users[i].position.y;
                ++counts[label[i]];
            }
            for (std::size_t c = 0; c < centers.size(); ++c)
                if (counts[c] > 0)
                    centers[c] = {sums[c].x / static_cast<double>(counts[c]),
                                  sums[c].y / static_cast<double>(counts[c])};
        }
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += squared_distance(users[i].position, centers[label[i]]);
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_label = label;
        }
    }

    std::vector<std::vector<std::size_t>> cells(uav_count);
    for (std::size_t i = 0; i < n; ++i)
        cells[best_label[i]].push_back(i);
    std::erase_if(cells, [](const auto& c) { return c.empty(); });
    return cells;
}

inline double total_power(std::span<const DeploymentSolution> solutions)
{
    double sum = 0.0;
    for (const auto& s : solutions)
        sum += s.power;
    return sum;
}

} // namespace vlcuav
