#pragma once

// Radiance raster over the service area.
//
// CSV layout: first line `x0,y0,cell_size,width,height`, then `height` lines of
// `width` comma-separated values. Rows are north-up: row 0 is the northern edge.
// (x0, y0) is the south-west corner of the raster.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vlcuav/error.hpp"
#include "vlcuav/geometry.hpp"
#include "vlcuav/io.hpp"

namespace vlcuav {

struct IlluminationGrid {
    Point2 origin;
    double cell_size = 1.0;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<double> values; // row-major, row 0 = north

    double& at(std::size_t row, std::size_t col) { return values[row * width + col]; }
    double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }

    Point2 pixel_center(std::size_t row, std::size_t col) const
    {
        return {origin.x + (static_cast<double>(col) + 0.5) * cell_size,
                origin.y + (static_cast<double>(height - row) - 0.5) * cell_size};
    }

    Point2 pixel_center(std::size_t index) const { return pixel_center(index / width, index % width); }

    double total() const
    {
        double s = 0.0;
        for (double v : values)
            s += v;
        return s;
    }

    friend bool operator==(const IlluminationGrid&, const IlluminationGrid&) = default;
};

inline void validate(const IlluminationGrid& g)
{
    if (!(g.cell_size > 0.0))
        throw Error(ErrorKind::invalid_argument, "grid cell size must be positive");
    if (g.width * g.height != g.values.size() || g.values.empty())
        throw Error(ErrorKind::shape_mismatch, "grid dimensions do not match the value count");
    for (double v : g.values)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw Error(ErrorKind::invalid_argument, "grid values must be finite and non-negative");
}

namespace detail {

inline std::vector<double> parse_csv_row(std::string_view line, std::size_t line_no)
{
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t end = line.find(',', pos);
        if (end == std::string_view::npos)
            end = line.size();
        auto field = line.substr(pos, end - pos);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t'))
            field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r'))
            field.remove_suffix(1);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec != std::errc() || ptr != field.data() + field.size())
            throw Error(ErrorKind::io, "bad number '" + std::string(field) + "' on line " +
                                           std::to_string(line_no));
        out.push_back(v);
        pos = end + 1;
    }
    return out;
}

inline std::string format_double(double v)
{
    std::ostringstream ss;
    ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return ss.str();
}

} // namespace detail

inline IlluminationGrid parse_grid_csv(std::string_view text)
{
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos)
            continue;
        rows.push_back(detail::parse_csv_row(line, line_no));
    }
    if (rows.empty() || rows.front().size() != 5)
        throw Error(ErrorKind::io, "grid header must be x0,y0,cell_size,width,height");
    const auto& hdr = rows.front();
    IlluminationGrid g;
    g.origin = {hdr[0], hdr[1]};
    g.cell_size = hdr[2];
    if (hdr[3] < 1 || hdr[4] < 1 || hdr[3] != std::floor(hdr[3]) || hdr[4] != std::floor(hdr[4]))
        throw Error(ErrorKind::io, "grid width and height must be positive integers");
    g.width = static_cast<std::size_t>(hdr[3]);
    g.height = static_cast<std::size_t>(hdr[4]);
    if (rows.size() != g.height + 1)
        throw Error(ErrorKind::shape_mismatch, "expected " + std::to_string(g.height) + " grid rows");
    g.values.reserve(g.width * g.height);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != g.width)
            throw Error(ErrorKind::shape_mismatch, "grid row " + std::to_string(r) + " has wrong width");
        g.values.insert(g.values.end(), rows[r].begin(), rows[r].end());
    }
    validate(g);
    return g;
}

inline std::string format_grid_csv(const IlluminationGrid& g)
{
    std::ostringstream ss;
    ss << detail::format_double(g.origin.x) << ',' << detail::format_double(g.origin.y) << ','
       << detail::format_double(g.cell_size) << ',' << g.width << ',' << g.height << '\n';
    for (std::size_t r = 0; r < g.height; ++r) {
        for (std::size_t c = 0; c < g.width; ++c) {
            if (c)
                ss << ',';
            ss << detail::format_double(g.at(r, c));
        }
        ss << '\n';
    }
    return ss.str();
}

inline IlluminationGrid read_grid_csv(const std::filesystem::path& path)
{
    return parse_grid_csv(io::read_file(path));
}

inline void write_grid_csv(const std::filesystem::path& path, const IlluminationGrid& g)
{
    io::write_file_atomic(path, format_grid_csv(g));
}

/// Loads `frame_<t>.csv` files from a directory in ascending t.
inline std::vector<IlluminationGrid> read_grid_series(const std::filesystem::path& dir)
{
    std::map<long, std::filesystem::path> frames;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (!name.starts_with("frame_") || !name.ends_with(".csv"))
            continue;
        const auto digits = std::string_view(name).substr(6, name.size() - 10);
        long t = 0;
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t);
        if (ec != std::errc() || ptr != digits.data() + digits.size())
            continue;
        frames.emplace(t, entry.path());
    }
    if (frames.empty())
        throw Error(ErrorKind::io, "no frame_<t>.csv files in " + dir.string());
    std::vector<IlluminationGrid> out;
    out.reserve(frames.size());
    for (const auto& [t, path] : frames)
        out.push_back(read_grid_csv(path));
    return out;
}

inline void write_grid_series(const std::filesystem::path& dir, const std::vector<IlluminationGrid>& frames)
{
    for (std::size_t t = 0; t < frames.size(); ++t)
        write_grid_csv(dir / ("frame_" + std::to_string(t + 1) + ".csv"), frames[t]);
}

} // namespace vlcuav
