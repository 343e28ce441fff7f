// Copyright (c) 2026, The OffloadLab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// IEEE 754 binary16 storage type and conversions.
//
// Both conversions are branch-free (selects only) so that loops over them
// auto-vectorize; they are exact bit-level functions and give identical
// results whether the compiler vectorizes a loop or not.
//
// NaN convention: half_to_float keeps the full 10-bit payload in the top
// mantissa bits of the result, including the quiet bit, so a signaling half
// NaN stays signaling. float_to_half keeps the top 10 payload bits and always
// sets the quiet bit (0x0200), so every NaN it produces is quiet.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace offloadlab {

struct Half {
    std::uint16_t bits = 0;

    friend constexpr bool operator==(Half, Half) = default;
};

using HalfBuffer = std::vector<Half>;

inline constexpr Half kHalfOne{0x3C00};
inline constexpr Half kHalfPosInf{0x7C00};
inline constexpr Half kHalfNegInf{0xFC00};
inline constexpr float kHalfMax = 65504.0f;

inline float half_to_float(Half h) noexcept {
    const std::uint32_t sign = static_cast<std::uint32_t>(h.bits & 0x8000u) << 16;
    const std::uint32_t exponent = (h.bits >> 10) & 0x1Fu;
    const std::uint32_t mantissa = h.bits & 0x3FFu;

    // Subnormals: mantissa * 2^-24 is exact in binary32.
    const std::uint32_t subnormal =
        std::bit_cast<std::uint32_t>(static_cast<float>(mantissa) * 0x1p-24f);
    const std::uint32_t normal = ((exponent + 112u) << 23) | (mantissa << 13);
    const std::uint32_t special = 0x7F800000u | (mantissa << 13);

    std::uint32_t magnitude = normal;
    magnitude = exponent == 0u ? subnormal : magnitude;
    magnitude = exponent == 0x1Fu ? special : magnitude;
    return std::bit_cast<float>(sign | magnitude);
}

/// Round-to-nearest-even narrowing. Values at or beyond 65520 in magnitude
/// overflow to infinity.
inline Half float_to_half(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t abs_bits = x & 0x7FFFFFFFu;

    // Normal range: rebias the exponent and round on the 13 dropped bits.
    // A carry out of the mantissa bumps the exponent, which is the right
    // result, including the carry into the infinity encoding.
    const std::uint32_t odd = (abs_bits >> 13) & 1u;
    std::uint32_t normal = (abs_bits + 0xFFFu + odd - 0x38000000u) >> 13;
    normal = abs_bits >= 0x477FF000u ? 0x7C00u : normal;

    // Subnormal range: adding 0.5f places the result's units-in-last-place at
    // 2^-24, so the FPU's own round-to-nearest-even does the rounding.
    const float shifted = std::bit_cast<float>(abs_bits < 0x38800000u ? abs_bits : 0u) + 0.5f;
    const std::uint32_t subnormal = std::bit_cast<std::uint32_t>(shifted) - 0x3F000000u;

    const std::uint32_t nan = 0x7E00u | ((abs_bits >> 13) & 0x3FFu);

    std::uint32_t magnitude = abs_bits < 0x38800000u ? subnormal : normal;
    magnitude = abs_bits > 0x7F800000u ? nan : magnitude;
    magnitude = abs_bits == 0x7F800000u ? 0x7C00u : magnitude;
    return Half{static_cast<std::uint16_t>(sign | magnitude)};
}

inline bool is_nan(Half h) noexcept {
    return (h.bits & 0x7C00u) == 0x7C00u && (h.bits & 0x03FFu) != 0u;
}

void widen(std::span<const Half> in, std::span<float> out);
void narrow(std::span<const float> in, std::span<Half> out);
HalfBuffer narrow(std::span<const float> in);
std::vector<float> widen(std::span<const Half> in);

/// Little-endian, two bytes per element, no header.
void write_half_buffer(const std::filesystem::path& path, std::span<const Half> values);
HalfBuffer read_half_buffer(const std::filesystem::path& path);

}  // namespace offloadlab
