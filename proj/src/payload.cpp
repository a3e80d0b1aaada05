// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/payload.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "silocomm/error.hpp"

namespace silocomm {

namespace {

const std::vector<PayloadTier> kTiers = {
    {TierName::Small, 591'322},
    {TierName::Medium, 5'152'518},
    {TierName::Big, 66'362'880},
    {TierName::Large, 307'432'234},
};

constexpr char kMagic[4] = {'F', 'L', 'P', '1'};

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; i++) out.push_back(std::uint8_t(v >> (8 * i)));
}

inline std::uint16_t get_u16(const std::uint8_t* p) {
    return std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8);
}

inline std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; i++) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

// splitmix64; the de-facto standard seeding PRNG. Fully portable.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string PayloadTier::label() const {
    switch (name) {
        case TierName::Small: return "small";
        case TierName::Medium: return "medium";
        case TierName::Big: return "big";
        case TierName::Large: return "large";
    }
    return "?";
}

PayloadTier PayloadTier::get(TierName name) {
    for (const auto& t : kTiers)
        if (t.name == name) return t;
    throw ConfigError("unknown tier");
}

std::optional<PayloadTier> PayloadTier::by_label(const std::string& label) {
    std::string low = label;
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& t : kTiers)
        if (t.label() == low) return t;
    return std::nullopt;
}

const std::vector<PayloadTier>& PayloadTier::all() { return kTiers; }

PayloadTier PayloadTier::scaled(double scale) const {
    PayloadTier t = *this;
    t.param_count = std::max<std::uint64_t>(1, std::uint64_t(double(param_count) * scale));
    return t;
}

std::uint64_t serialized_size(std::uint64_t param_count) {
    return kPayloadHeaderBytes + param_count * 4;
}

Bytes serialize(const Payload& p) {
    Bytes out;
    out.reserve(serialized_size(p.params.size()));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kPayloadFormatVersion);
    put_u16(out, 0);  // reserved
    put_u64(out, p.params.size());
    std::size_t base = out.size();
    out.resize(base + p.params.size() * 4);
    if (!p.params.empty()) {
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data() + base, p.params.data(), p.params.size() * 4);
        } else {
            for (std::size_t i = 0; i < p.params.size(); i++) {
                std::uint32_t u = std::bit_cast<std::uint32_t>(p.params[i]);
                out[base + 4 * i + 0] = std::uint8_t(u);
                out[base + 4 * i + 1] = std::uint8_t(u >> 8);
                out[base + 4 * i + 2] = std::uint8_t(u >> 16);
                out[base + 4 * i + 3] = std::uint8_t(u >> 24);
            }
        }
    }
    return out;
}

Payload deserialize(ByteView bytes) {
    if (bytes.size() < kPayloadHeaderBytes)
        throw MalformedPayloadError(bytes.size(), "payload header truncated");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw MalformedPayloadError(0, "bad payload magic");
    std::uint16_t version = get_u16(bytes.data() + 4);
    if (version != kPayloadFormatVersion)
        throw MalformedPayloadError(4, "unsupported payload format version " + std::to_string(version));
    std::uint64_t count = get_u64(bytes.data() + 8);
    std::uint64_t body = bytes.size() - kPayloadHeaderBytes;
    if (count > body / 4 || count * 4 != body) {
        std::size_t offset = count > body / 4 ? bytes.size() : std::size_t(kPayloadHeaderBytes + count * 4);
        throw MalformedPayloadError(offset, "payload body length mismatch: header declares " +
                                                std::to_string(count) + " params, have " +
                                                std::to_string(body) + " body bytes");
    }
    Payload p;
    p.params.resize(count);
    if (count > 0) {
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(p.params.data(), bytes.data() + kPayloadHeaderBytes, count * 4);
        } else {
            for (std::uint64_t i = 0; i < count; i++) {
                const std::uint8_t* q = bytes.data() + kPayloadHeaderBytes + 4 * i;
                std::uint32_t u = std::uint32_t(q[0]) | (std::uint32_t(q[1]) << 8) |
                                  (std::uint32_t(q[2]) << 16) | (std::uint32_t(q[3]) << 24);
                p.params[i] = std::bit_cast<float>(u);
            }
        }
    }
    p.version = Sha256::of(bytes);
    return p;
}

Payload make_payload(std::vector<float> params) {
    Payload p;
    p.params = std::move(params);
    p.version = Sha256::of(serialize(p));
    return p;
}

Payload make_random_payload(std::uint64_t param_count, std::uint64_t seed) {
    std::vector<float> params(param_count);
    std::uint64_t state = seed * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL;
    for (std::uint64_t i = 0; i < param_count; i += 2) {
        std::uint64_t r = splitmix64(state);
        // Exact int32 -> f32 mapping into [-1, 1); identical on all IEEE targets.
        params[i] = float(std::int32_t(std::uint32_t(r))) * 0x1p-31f;
        if (i + 1 < param_count)
            params[i + 1] = float(std::int32_t(std::uint32_t(r >> 32))) * 0x1p-31f;
    }
    return make_payload(std::move(params));
}

Payload make_tier_payload(const PayloadTier& tier, std::uint64_t seed) {
    // Tier name folded into the seed so equal counts in different tiers differ.
    return make_random_payload(tier.param_count,
                               seed ^ (std::uint64_t(tier.name) << 56));
}

}  // namespace silocomm
