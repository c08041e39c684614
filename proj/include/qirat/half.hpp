// Copyright 2026-present the qirat project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// IEEE-754 binary16 conversion. Narrowing rounds to nearest, ties to even.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>

#if defined(__F16C__)
#include <immintrin.h>
#endif

namespace qirat {

/// Largest finite binary16 value.
inline constexpr float kHalfMax = 65504.0f;

constexpr std::uint16_t
float_to_half(float value) noexcept {
    const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t sign = (x >> 16) & 0x8000u;
    const std::uint32_t exp = (x >> 23) & 0xffu;
    std::uint32_t mant = x & 0x7fffffu;

    if (exp == 0xffu) {
        // inf stays inf; NaN keeps a quiet payload bit
        return static_cast<std::uint16_t>(sign | 0x7c00u | (mant != 0 ? 0x200u | (mant >> 13) : 0u));
    }
    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 31) {
        return static_cast<std::uint16_t>(sign | 0x7c00u);
    }
    if (e <= 0) {
        // result is subnormal (or zero); float subnormals are far below its range
        if (exp == 0) {
            return static_cast<std::uint16_t>(sign);
        }
        const int shift = 14 - e;
        if (shift > 24) {
            return static_cast<std::uint16_t>(sign);
        }
        mant |= 0x800000u;
        std::uint32_t h = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (h & 1u) != 0)) {
            ++h;
        }
        return static_cast<std::uint16_t>(sign | h);
    }
    std::uint32_t h = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u) != 0)) {
        ++h;  // may carry into the exponent, up to inf
    }
    return static_cast<std::uint16_t>(h);
}

constexpr float
half_to_float(std::uint16_t h) noexcept {
    const std::uint32_t sign = (static_cast<std::uint32_t>(h) & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1fu;
    const std::uint32_t mant = h & 0x3ffu;
    if (exp == 0) {
        if (mant == 0) {
            return std::bit_cast<float>(sign);
        }
        // mant * 2^-24 is exact in binary32
        const float magnitude = static_cast<float>(mant) * 5.9604644775390625e-8f;
        return sign != 0 ? -magnitude : magnitude;
    }
    if (exp == 31) {
        return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
    }
    return std::bit_cast<float>(sign | ((exp + 112u) << 23) | (mant << 13));
}

/// Widens `src` into `dst` (equal lengths). Uses F16C when the target has it; both paths are exact.
inline void
widen_halves(std::span<const std::uint16_t> src, std::span<float> dst) noexcept {
    std::size_t i = 0;
#if defined(__F16C__)
    for (; i + 8 <= src.size(); i += 8) {
        const __m128i packed = _mm_loadu_si128(reinterpret_cast<const __m128i*>(src.data() + i));
        _mm256_storeu_ps(dst.data() + i, _mm256_cvtph_ps(packed));
    }
#endif
    for (; i < src.size(); ++i) {
        dst[i] = half_to_float(src[i]);
    }
}

}  // namespace qirat
