#pragma once

// GRU checkpoint: a CBOR document whose numeric payloads are byte strings of
// little-endian IEEE-754 float64 values (column-major), so that a write/read
// round trip is bit-exact.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "vlcuav/error.hpp"
#include "vlcuav/gru.hpp"
#include "vlcuav/io.hpp"

namespace vlcuav::checkpoint {

inline constexpr std::string_view format_name = "vlcuav-gru-checkpoint";
inline constexpr int format_version = 1;

namespace detail {

inline std::vector<std::uint8_t> encode_f64(const double* data, std::size_t n)
{
    std::vector<std::uint8_t> bytes;
    bytes.reserve(n * 8);
    for (std::size_t i = 0; i < n; ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(data[i]);
        for (int b = 0; b < 8; ++b)
            bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    return bytes;
}

inline std::vector<double> decode_f64(const std::vector<std::uint8_t>& bytes, std::size_t expected)
{
    if (bytes.size() != expected * 8)
        throw Error(ErrorKind::shape_mismatch, "payload holds " + std::to_string(bytes.size() / 8) +
                                                   " values, expected " + std::to_string(expected));
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        out[i] = std::bit_cast<double>(bits);
    }
    return out;
}

inline nlohmann::json encode_matrix(const Eigen::MatrixXd& m)
{
    return {{"rows", m.rows()},
            {"cols", m.cols()},
            {"data", nlohmann::json::binary(encode_f64(m.data(), static_cast<std::size_t>(m.size())))}};
}

inline Eigen::MatrixXd decode_matrix(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols)
{
    if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols)
        throw Error(ErrorKind::shape_mismatch, "checkpoint matrix has unexpected shape");
    const auto values = decode_f64(j.at("data").get_binary(), static_cast<std::size_t>(rows * cols));
    Eigen::MatrixXd m(rows, cols);
    std::copy(values.begin(), values.end(), m.data());
    return m;
}

} // namespace detail

struct Checkpoint {
    gru::Model model;
    gru::Normalization normalization;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline nlohmann::json to_json(const Checkpoint& c)
{
    nlohmann::json matrices = nlohmann::json::object();
    c.model.weights.for_each([&](const char* name, const Eigen::MatrixXd& m) { matrices[name] = detail::encode_matrix(m); });
    return {
        {"format", format_name},
        {"version", format_version},
        {"encoding", "little-endian float64, column-major"},
        {"input_dim", c.model.input_dim},
        {"hidden_dim", c.model.hidden_dim},
        {"seed", c.model.seed},
        {"normalization",
         {{"min", detail::encode_matrix(c.normalization.min)}, {"max", detail::encode_matrix(c.normalization.max)}}},
        {"matrices", matrices},
    };
}

inline Checkpoint from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != format_name)
            throw Error(ErrorKind::io, "not a GRU checkpoint");
        if (j.at("version").get<int>() != format_version)
            throw Error(ErrorKind::io, "unsupported checkpoint version");
        Checkpoint c;
        const auto dq = j.at("input_dim").get<Eigen::Index>();
        const auto dh = j.at("hidden_dim").get<Eigen::Index>();
        c.model.input_dim = dq;
        c.model.hidden_dim = dh;
        c.model.seed = j.at("seed").get<std::uint64_t>();
        c.model.weights = gru::Weights::zeros(dq, dh);
        const auto& mats = j.at("matrices");
        c.model.weights.for_each([&](const char* name, Eigen::MatrixXd& m) {
            m = detail::decode_matrix(mats.at(name), m.rows(), m.cols());
        });
        c.normalization.min = detail::decode_matrix(j.at("normalization").at("min"), dq, 1);
        c.normalization.max = detail::decode_matrix(j.at("normalization").at("max"), dq, 1);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, std::string("malformed checkpoint: ") + e.what());
    }
}

inline std::vector<std::uint8_t> encode(const Checkpoint& c) { return nlohmann::json::to_cbor(to_json(c)); }

inline Checkpoint decode(std::string_view bytes)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::from_cbor(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, std::string("malformed checkpoint: ") + e.what());
    }
    return from_json(j);
}

inline void write(const std::filesystem::path& path, const Checkpoint& c)
{
    const auto bytes = encode(c);
    io::write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

inline Checkpoint read(const std::filesystem::path& path) { return decode(io::read_file(path)); }

} // namespace vlcuav::checkpoint
