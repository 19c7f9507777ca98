#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vlcuav {

enum class ErrorKind {
    user_outside_fov,
    empty_cell,
    no_illumination,
    shape_mismatch,
    series_too_short,
    diverged,
    not_converged,
    too_many_uavs,
    invalid_argument,
    io,
};

inline std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::user_outside_fov: return "user-outside-FOV";
    case ErrorKind::empty_cell: return "empty-cell";
    case ErrorKind::no_illumination: return "no-illumination";
    case ErrorKind::shape_mismatch: return "shape-mismatch";
    case ErrorKind::series_too_short: return "series-too-short";
    case ErrorKind::diverged: return "diverged";
    case ErrorKind::not_converged: return "not-converged";
    case ErrorKind::too_many_uavs: return "too-many-uavs";
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace vlcuav
