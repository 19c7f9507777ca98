#pragma once

// Lambertian line-of-sight VLC link between a hovering UAV and a ground user.
// All powers are linear watts; rates are bits per channel use.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "vlcuav/error.hpp"
#include "vlcuav/geometry.hpp"

namespace vlcuav {

struct ChannelParams {
    double detector_area = 1e-4;                      // S, m^2
    double semiangle = std::numbers::pi / 3.0;        // transmitter half-power semiangle, rad
    double fov_semiangle = std::numbers::pi / 3.0;    // receiver FOV semiangle, rad
    double refractive_index = 1.5;
    double altitude = 10.0;                           // H, m
    double illumination_target = 1.0;                 // xi
    double noise_std = 1e-7;                          // n_w
    double illumination_demand = 3e-7;                // eta_r
};

inline void validate(const ChannelParams& p)
{
    constexpr double half_pi = std::numbers::pi / 2.0;
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); };
    if (!(p.semiangle > 0.0 && p.semiangle < half_pi))
        fail("semiangle must lie in (0, pi/2)");
    if (!(p.fov_semiangle > 0.0 && p.fov_semiangle <= half_pi))
        fail("FOV semiangle must lie in (0, pi/2]");
    if (!(p.detector_area > 0.0)) fail("detector area must be positive");
    if (!(p.altitude > 0.0)) fail("altitude must be positive");
    if (!(p.refractive_index >= 1.0)) fail("refractive index must be >= 1");
    if (!(p.noise_std > 0.0)) fail("noise std must be positive");
    if (!(p.illumination_demand >= 0.0)) fail("illumination demand must be non-negative");
    if (!(p.illumination_target > 0.0)) fail("illumination target must be positive");
}

/// A ground user and its downlink demand. `rate` is in bits per channel use,
/// i.e. the same normalisation as capacity().
struct UserDemand {
    Point2 position;
    double rate = 0.0;

    friend bool operator==(const UserDemand&, const UserDemand&) = default;
};

inline double lambert_order(const ChannelParams& p)
{
    return -std::numbers::ln2 / std::log(std::cos(p.semiangle));
}

/// Optical concentrator gain; the boundary psi == fov_semiangle is inside.
inline double concentrator_gain(double psi, const ChannelParams& p)
{
    if (psi > p.fov_semiangle)
        return 0.0;
    const double s = std::sin(p.fov_semiangle);
    return p.refractive_index * p.refractive_index / (s * s);
}

/// Within-FOV value of the concentrator gain.
inline double concentrator_gain_in_fov(const ChannelParams& p) { return concentrator_gain(0.0, p); }

/// Channel gain h_j(x_i, y_i). Since cos(phi) = cos(psi) = H/d the Lambertian
/// expression collapses to (m+1) S g H^(m+1) / (2 pi d^(m+3)).
inline double channel_gain(Point2 uav, Point2 user, const ChannelParams& p)
{
    const double h = p.altitude;
    const double d2 = squared_distance(uav, user) + h * h;
    const double d = std::sqrt(d2);
    if (h / d < std::cos(p.fov_semiangle))
        return 0.0;
    const double m = lambert_order(p);
    return (m + 1.0) * p.detector_area * concentrator_gain_in_fov(p) * std::pow(h, m + 1.0) /
           (2.0 * std::numbers::pi * std::pow(d, m + 3.0));
}

/// Achievable rate in bits per channel use.
inline double capacity(double power, double ambient, double gain, const ChannelParams& p)
{
    const double snr = p.illumination_target * power * gain / (p.noise_std + ambient);
    return 0.5 * std::log1p(std::numbers::e / (2.0 * std::numbers::pi) * snr * snr) / std::numbers::ln2;
}

/// Transmit power at which capacity() equals `user.rate`.
inline double required_power_for_rate(const UserDemand& user, double ambient, double gain,
                                      const ChannelParams& p)
{
    if (!(gain > 0.0))
        throw Error(ErrorKind::user_outside_fov, "no finite power reaches a user outside the FOV");
    const double excess = std::expm1(2.0 * user.rate * std::numbers::ln2);
    return (p.noise_std + ambient) * std::sqrt(2.0 * std::numbers::pi / std::numbers::e * excess) /
           (p.illumination_target * gain);
}

/// Smallest UAV power satisfying every user's rate; `ambient[j]` belongs to `users[j]`.
inline double min_power_for_cell(std::span<const UserDemand> users, std::span<const double> ambient,
                                 Point2 uav, const ChannelParams& p)
{
    if (users.empty())
        throw Error(ErrorKind::empty_cell, "cell has no users");
    if (ambient.size() != users.size())
        throw Error(ErrorKind::shape_mismatch, "one ambient value per user is required");
    double best = 0.0;
    for (std::size_t j = 0; j < users.size(); ++j) {
        const double gain = channel_gain(uav, users[j].position, p);
        best = std::max(best, required_power_for_rate(users[j], ambient[j], gain, p));
    }
    return best;
}

} // namespace vlcuav
