// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace silocomm {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// 256-bit content digest. Payload versions and store keys are derived from it.
struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    bool operator==(const Digest&) const = default;
    std::string hex() const;
};

// Streaming SHA-256. Single-shot use: Sha256::of(data).
class Sha256 {
public:
    Sha256();
    void update(ByteView data);
    Digest finish();

    static Digest of(ByteView data);

private:
    void process_block(const std::uint8_t* block);

    std::array<std::uint32_t, 8> state_;
    std::array<std::uint8_t, 64> buffer_;
    std::size_t buffered_ = 0;
    std::uint64_t total_len_ = 0;
};

inline ByteView as_bytes(const std::string& s) {
    return ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
}

}  // namespace silocomm
