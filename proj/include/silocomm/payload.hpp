// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "silocomm/digest.hpp"

namespace silocomm {

// The four model-size tiers the benchmarks exercise, plus helpers for
// desk-scale runs (param counts multiplied by a scale factor).
enum class TierName { Small, Medium, Big, Large };

struct PayloadTier {
    TierName name;
    std::uint64_t param_count;

    // 32-bit parameters.
    std::uint64_t nominal_bytes() const { return param_count * 4; }
    std::string label() const;

    static PayloadTier get(TierName name);
    static std::optional<PayloadTier> by_label(const std::string& label);
    static const std::vector<PayloadTier>& all();

    // Tier scaled for desk-size runs: param_count * scale (floor, min 1).
    PayloadTier scaled(double scale) const;
};

// A flat vector of 32-bit model parameters plus its content version.
// Immutable by convention once built; `version` is the SHA-256 of the
// serialized bytes, so identical bytes always share a version.
struct Payload {
    std::vector<float> params;
    Digest version;

    std::uint64_t byte_size() const { return params.size() * 4; }
    bool operator==(const Payload&) const = default;
};

// Serialized layout (bit-exact, little-endian):
//   magic "FLP1" | format version u16 | reserved u16 | param_count u64 | f32[count]
inline constexpr std::size_t kPayloadHeaderBytes = 16;
inline constexpr std::uint16_t kPayloadFormatVersion = 1;

std::uint64_t serialized_size(std::uint64_t param_count);

Bytes serialize(const Payload& p);
// Throws MalformedPayloadError naming the byte offset on truncated or corrupt input.
Payload deserialize(ByteView bytes);

// Builds `p` from raw params, computing the version digest.
Payload make_payload(std::vector<float> params);

// Deterministic pseudo-random payload: same (tier, seed) gives identical
// bytes and version on every platform (integer PRNG, exact f32 mapping).
Payload make_tier_payload(const PayloadTier& tier, std::uint64_t seed);

// Same generator for an explicit parameter count.
Payload make_random_payload(std::uint64_t param_count, std::uint64_t seed);

}  // namespace silocomm
