#pragma once

// Little-endian float64 payload helpers and the shared "JSON line + payload" container
// used by the tensor and model files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "orbitvae/errors.hpp"

namespace orbitvae::detail {

inline void append_f64_le(std::string& out, const std::vector<double>& values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * 8);
    char* dst = out.data() + start;
    for (double v : values) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            dst[b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
        }
        dst += 8;
    }
}

inline std::vector<double> read_f64_le(const char* src, std::size_t count) {
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(src[8 * i + b])) << (8 * b);
        }
        values[i] = std::bit_cast<double>(bits);
    }
    return values;
}

/// Splits "<json>\n<payload>" and checks the magic string.
inline std::pair<nlohmann::ordered_json, std::string_view> split_container(const std::string& bytes,
                                                                           const char* magic) {
    const auto nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError(std::string(magic) + ": missing header line");
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string(magic) + ": bad header JSON: " + e.what());
    }
    if (!header.is_object() || !header.contains("magic") || header["magic"] != magic) {
        throw FormatError(std::string("bad magic: expected ") + magic);
    }
    return {header, std::string_view(bytes).substr(nl + 1)};
}

}  // namespace orbitvae::detail
