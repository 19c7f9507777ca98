#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "vlcuav/error.hpp"

namespace vlcuav::io {

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary file, then renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error(ErrorKind::io, "cannot write " + tmp.string());
        out << content;
        if (!out.flush())
            throw Error(ErrorKind::io, "short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace vlcuav::io
