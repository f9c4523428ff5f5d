#pragma once

#include <cstdint>
#include <cstring>

namespace updraft {

// IEEE-754 binary16 <-> binary32 conversion, round-to-nearest-even.
// Used for the f16 ZGRID payload dtype and half-precision dataset archival.

inline std::uint16_t f32_to_f16(float value) {
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);

    const std::uint32_t sign = (bits >> 16) & 0x8000u;
    std::uint32_t exp = (bits >> 23) & 0xFFu;
    std::uint32_t mant = bits & 0x7FFFFFu;

    if (exp == 0xFFu) // Inf / NaN
        return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));

    // Re-bias 127 -> 15.
    int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 0x1F) // overflow -> Inf
        return static_cast<std::uint16_t>(sign | 0x7C00u);

    if (e <= 0) {
        // Subnormal half (or zero). Shift the implicit-leading-1 mantissa.
        if (e < -10)
            return static_cast<std::uint16_t>(sign);
        mant |= 0x800000u;
        const int shift = 14 - e; // 14..24
        std::uint32_t half_mant = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1u)))
            ++half_mant;
        return static_cast<std::uint16_t>(sign | half_mant);
    }

    std::uint32_t half = sign | (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u)))
        ++half; // carries propagate into the exponent correctly
    return static_cast<std::uint16_t>(half);
}

inline float f16_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    std::uint32_t exp = (h >> 10) & 0x1Fu;
    std::uint32_t mant = h & 0x3FFu;

    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            // Normalize the subnormal.
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while (!(mant & 0x400u));
            mant &= 0x3FFu;
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | (mant << 13);
        }
    } else if (exp == 0x1Fu) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }

    float out;
    std::memcpy(&out, &bits, 4);
    return out;
}

} // namespace updraft
