// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#include "offloadlab/half.hpp"

#include <fstream>
#include <iterator>

#include "offloadlab/error.hpp"

namespace offloadlab {

void widen(std::span<const Half> in, std::span<float> out) {
    if (in.size() != out.size()) {
        throw Error(ErrorCode::LengthMismatch, "widen: input and output lengths differ");
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = half_to_float(in[i]);
}

void narrow(std::span<const float> in, std::span<Half> out) {
    if (in.size() != out.size()) {
        throw Error(ErrorCode::LengthMismatch, "narrow: input and output lengths differ");
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = float_to_half(in[i]);
}

HalfBuffer narrow(std::span<const float> in) {
    HalfBuffer out(in.size());
    narrow(in, out);
    return out;
}

std::vector<float> widen(std::span<const Half> in) {
    std::vector<float> out(in.size());
    widen(in, out);
    return out;
}

void write_half_buffer(const std::filesystem::path& path, std::span<const Half> values) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    for (Half h : values) {
        const char bytes[2] = {static_cast<char>(h.bits & 0xFFu), static_cast<char>(h.bits >> 8)};
        os.write(bytes, 2);
    }
    if (!os) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

HalfBuffer read_half_buffer(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (raw.size() % 2 != 0) {
        throw Error(ErrorCode::IoError, path.string() + " has an odd byte count");
    }
    HalfBuffer out(raw.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].bits = static_cast<std::uint16_t>(raw[2 * i] | (raw[2 * i + 1] << 8));
    }
    return out;
}

}  // namespace offloadlab
