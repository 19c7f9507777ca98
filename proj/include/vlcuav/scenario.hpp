#pragma once

// Synthetic stand-in for a nighttime-radiance time series, plus user layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vlcuav/channel.hpp"
#include "vlcuav/error.hpp"
#include "vlcuav/grid.hpp"
#include "vlcuav/io.hpp"

namespace vlcuav {

struct ScenarioConfig {
    double area_width = 20.0;
    double area_height = 20.0;
    double cell_size = 0.5;
    std::size_t n_users = 40;
    std::size_t n_uavs = 4;
    double rate_min_bps = 0.5e6;
    double rate_max_bps = 1.5e6;
    double symbol_rate = 1e7; // channel uses per second
    std::size_t components = 3;
    std::size_t series_length = 358;
    ChannelParams channel;
    std::uint64_t seed = 2020;
};

inline void validate(const ScenarioConfig& c)
{
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::invalid_argument, msg); };
    if (!(c.area_width > 0.0 && c.area_height > 0.0))
        fail("area must be positive");
    if (!(c.cell_size > 0.0))
        fail("cell size must be positive");
    if (c.n_uavs < 1 || c.n_users < c.n_uavs)
        fail("need n_users >= n_uavs >= 1");
    if (!(c.rate_min_bps > 0.0 && c.rate_max_bps >= c.rate_min_bps))
        fail("need rate max >= rate min > 0");
    if (!(c.symbol_rate > 0.0))
        fail("symbol rate must be positive");
    if (c.components < 1)
        fail("need at least one mixture component");
    if (c.series_length < 10)
        fail("series length must be at least 10");
    validate(c.channel);
}

struct LightBlob {
    Point2 center;
    double drift = 0.0;        // radius of the periodic centre excursion, m
    double peak = 1e-6;        // maximum peak radiance over a cycle
    double modulation = 0.0;   // depth in [0, 1]; the peak dips to peak * (1 - depth)
    double period = 24.0;      // time slots
    double phase = 0.0;        // rad
    double sigma = 2.0;        // isotropic spread, m
};

struct SyntheticLightSpec {
    std::vector<LightBlob> blobs;
    double noise_fraction = 0.02; // noise std as a fraction of the largest peak
};

inline void validate(const SyntheticLightSpec& s)
{
    for (const auto& b : s.blobs) {
        if (!(b.peak > 0.0))
            throw Error(ErrorKind::invalid_argument, "blob peaks must be positive");
        if (!(b.modulation >= 0.0 && b.modulation <= 1.0))
            throw Error(ErrorKind::invalid_argument, "modulation depth must lie in [0, 1]");
        if (!(b.period >= 2.0))
            throw Error(ErrorKind::invalid_argument, "modulation period must be at least 2");
        if (!(b.sigma > 0.0))
            throw Error(ErrorKind::invalid_argument, "blob spread must be positive");
    }
    if (!(s.noise_fraction >= 0.0))
        throw Error(ErrorKind::invalid_argument, "noise fraction must be non-negative");
}

/// Three lighting places, brightest in the north-east of the 20 m square.
inline SyntheticLightSpec default_light_spec()
{
    return {{
                {{15.0, 15.0}, 0.6, 2.0e-6, 0.5, 24.0, 0.0, 2.5},
                {{5.0, 14.0}, 0.4, 1.2e-6, 0.6, 24.0, 1.0, 2.0},
                {{14.0, 5.0}, 0.3, 0.8e-6, 0.4, 12.0, 2.0, 1.8},
            },
            0.02};
}

inline IlluminationGrid empty_grid(const ScenarioConfig& config)
{
    IlluminationGrid g;
    g.origin = {0.0, 0.0};
    g.cell_size = config.cell_size;
    g.width = static_cast<std::size_t>(std::llround(config.area_width / config.cell_size));
    g.height = static_cast<std::size_t>(std::llround(config.area_height / config.cell_size));
    g.values.assign(g.width * g.height, 0.0);
    return g;
}

/// Frame t (1-based) of the synthetic series. Noise depends only on (seed, t),
/// so any prefix of a longer series is identical to a shorter one.
inline IlluminationGrid generate_frame(const SyntheticLightSpec& spec, const ScenarioConfig& config, std::size_t t)
{
    IlluminationGrid g = empty_grid(config);
    for (const auto& b : spec.blobs) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / b.period + b.phase;
        const double peak = b.peak * (1.0 - b.modulation * 0.5 * (1.0 - std::cos(angle)));
        const Point2 c{b.center.x + b.drift * std::cos(angle), b.center.y + b.drift * std::sin(angle)};
        for (std::size_t i = 0; i < g.values.size(); ++i)
            g.values[i] += peak * std::exp(-squared_distance(g.pixel_center(i), c) / (2.0 * b.sigma * b.sigma));
    }
    double max_peak = 0.0;
    for (const auto& b : spec.blobs)
        max_peak = std::max(max_peak, b.peak);
    const double noise_std = spec.noise_fraction * max_peak;
    if (noise_std > 0.0) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(t), 0x11u};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> noise(0.0, noise_std);
        for (double& v : g.values)
            v = std::max(0.0, v + noise(rng));
    }
    return g;
}

inline std::vector<IlluminationGrid> generate_series(const SyntheticLightSpec& spec, const ScenarioConfig& config,
                                                     std::size_t length)
{
    validate(spec);
    std::vector<IlluminationGrid> frames;
    frames.reserve(length);
    for (std::size_t t = 1; t <= length; ++t)
        frames.push_back(generate_frame(spec, config, t));
    return frames;
}

inline std::vector<IlluminationGrid> generate_series(const SyntheticLightSpec& spec, const ScenarioConfig& config)
{
    return generate_series(spec, config, config.series_length);
}

/// Users uniform over the area with uniform rate demands (converted to bits
/// per channel use through the symbol rate).
inline std::vector<UserDemand> place_users(const ScenarioConfig& config)
{
    validate(config);
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32), 0x55u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> ux(0.0, config.area_width);
    std::uniform_real_distribution<double> uy(0.0, config.area_height);
    std::uniform_real_distribution<double> ur(config.rate_min_bps, config.rate_max_bps);
    std::vector<UserDemand> users;
    users.reserve(config.n_users);
    for (std::size_t j = 0; j < config.n_users; ++j) {
        const double x = ux(rng);
        const double y = uy(rng);
        const double rate = ur(rng) / config.symbol_rate;
        users.push_back({{x, y}, rate});
    }
    return users;
}

// --- serialisation -------------------------------------------------------

inline nlohmann::json to_json(const ChannelParams& p)
{
    return {
        {"detector_area_m2", p.detector_area},
        {"semiangle_deg", p.semiangle * 180.0 / std::numbers::pi},
        {"fov_semiangle_deg", p.fov_semiangle * 180.0 / std::numbers::pi},
        {"refractive_index", p.refractive_index},
        {"altitude_m", p.altitude},
        {"illumination_target", p.illumination_target},
        {"noise_std", p.noise_std},
        {"illumination_demand", p.illumination_demand},
    };
}

inline ChannelParams channel_from_json(const nlohmann::json& j)
{
    ChannelParams d;
    ChannelParams p;
    p.detector_area = j.value("detector_area_m2", d.detector_area);
    p.semiangle = j.value("semiangle_deg", d.semiangle * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0;
    p.fov_semiangle =
        j.value("fov_semiangle_deg", d.fov_semiangle * 180.0 / std::numbers::pi) * std::numbers::pi / 180.0;
    p.refractive_index = j.value("refractive_index", d.refractive_index);
    p.altitude = j.value("altitude_m", d.altitude);
    p.illumination_target = j.value("illumination_target", d.illumination_target);
    p.noise_std = j.value("noise_std", d.noise_std);
    p.illumination_demand = j.value("illumination_demand", d.illumination_demand);
    return p;
}

inline nlohmann::json to_json(const ScenarioConfig& c)
{
    return {
        {"area_m", {c.area_width, c.area_height}},
        {"cell_size_m", c.cell_size},
        {"users", c.n_users},
        {"uavs", c.n_uavs},
        {"rate_range_bps", {c.rate_min_bps, c.rate_max_bps}},
        {"symbol_rate", c.symbol_rate},
        {"components", c.components},
        {"series_length", c.series_length},
        {"channel", to_json(c.channel)},
        {"seed", c.seed},
    };
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j)
{
    ScenarioConfig c;
    if (j.contains("area_m")) {
        c.area_width = j.at("area_m").at(0).get<double>();
        c.area_height = j.at("area_m").at(1).get<double>();
    }
    c.cell_size = j.value("cell_size_m", c.cell_size);
    c.n_users = j.value("users", c.n_users);
    c.n_uavs = j.value("uavs", c.n_uavs);
    if (j.contains("rate_range_bps")) {
        c.rate_min_bps = j.at("rate_range_bps").at(0).get<double>();
        c.rate_max_bps = j.at("rate_range_bps").at(1).get<double>();
    }
    c.symbol_rate = j.value("symbol_rate", c.symbol_rate);
    c.components = j.value("components", c.components);
    c.series_length = j.value("series_length", c.series_length);
    if (j.contains("channel"))
        c.channel = channel_from_json(j.at("channel"));
    c.seed = j.value("seed", c.seed);
    return c;
}

inline nlohmann::json to_json(const SyntheticLightSpec& s)
{
    nlohmann::json blobs = nlohmann::json::array();
    for (const auto& b : s.blobs)
        blobs.push_back({{"center_m", {b.center.x, b.center.y}},
                         {"drift_m", b.drift},
                         {"peak", b.peak},
                         {"modulation", b.modulation},
                         {"period", b.period},
                         {"phase_rad", b.phase},
                         {"sigma_m", b.sigma}});
    return {{"blobs", blobs}, {"noise_fraction", s.noise_fraction}};
}

inline SyntheticLightSpec light_from_json(const nlohmann::json& j)
{
    SyntheticLightSpec s;
    s.noise_fraction = j.value("noise_fraction", s.noise_fraction);
    for (const auto& b : j.at("blobs")) {
        LightBlob blob;
        blob.center = {b.at("center_m").at(0).get<double>(), b.at("center_m").at(1).get<double>()};
        blob.drift = b.value("drift_m", blob.drift);
        blob.peak = b.value("peak", blob.peak);
        blob.modulation = b.value("modulation", blob.modulation);
        blob.period = b.value("period", blob.period);
        blob.phase = b.value("phase_rad", blob.phase);
        blob.sigma = b.value("sigma_m", blob.sigma);
        s.blobs.push_back(blob);
    }
    return s;
}

/// Users as CSV: `x,y,rate` with rate in bits per channel use.
inline std::string format_users_csv(const std::vector<UserDemand>& users)
{
    std::ostringstream ss;
    ss << "x,y,rate\n";
    for (const auto& u : users)
        ss << detail::format_double(u.position.x) << ',' << detail::format_double(u.position.y) << ','
           << detail::format_double(u.rate) << '\n';
    return ss.str();
}

inline std::vector<UserDemand> parse_users_csv(std::string_view text)
{
    std::vector<UserDemand> users;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line_no == 1 || line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        const auto row = detail::parse_csv_row(line, line_no);
        if (row.size() != 3)
            throw Error(ErrorKind::io, "user rows need x,y,rate");
        users.push_back({{row[0], row[1]}, row[2]});
    }
    return users;
}

} // namespace vlcuav
