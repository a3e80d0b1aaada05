// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "silocomm/payload.hpp"

namespace silocomm {

using ParticipantId = std::uint32_t;

enum class MsgType : std::uint8_t { GlobalModel = 0, LocalUpdate = 1, Control = 2 };

// Location of an object in the store: "<bucket>/<key>". The key embeds the
// payload version digest, so fetches are integrity-checked against it.
struct ObjectKey {
    std::string bucket;
    std::string key;

    bool operator==(const ObjectKey&) const = default;
    std::string str() const { return bucket + "/" + key; }
};

// Payload inlined into the control record.
struct InlineLocator {
    Bytes blob;
    bool operator==(const InlineLocator&) const = default;
};

// Payload parked in the object store; `key` is filled in by the transport
// after upload (split() leaves it empty).
struct StoreLocator {
    ObjectKey key;
    bool operator==(const StoreLocator&) const = default;
};

using Locator = std::variant<InlineLocator, StoreLocator>;

// Round/type/sender/receiver metadata shared by Envelope and FLMessage.
struct MessageMeta {
    std::uint64_t round = 0;
    MsgType msg_type = MsgType::Control;
    ParticipantId sender_id = 0;
    ParticipantId receiver_id = 0;

    bool operator==(const MessageMeta&) const = default;
};

// The control record the hybrid backend ships over the message channel.
// StoreKey-shaped envelopes stay under 1 KiB no matter the payload size.
struct Envelope {
    MessageMeta meta;
    Locator locator;
    std::uint64_t payload_bytes = 0;  // serialized size of the referenced payload

    bool is_inline() const { return std::holds_alternative<InlineLocator>(locator); }
    bool operator==(const Envelope&) const = default;
};

inline constexpr std::size_t kMaxStoreEnvelopeBytes = 1024;

struct FLMessage {
    MessageMeta meta;
    Payload payload;

    bool operator==(const FLMessage&) const = default;
};

// Binary encoding (little-endian):
//   round u64 | msg_type u8 | locator kind u8 | sender u32 | receiver u32 |
//   payload_bytes u64 | [StoreKey: bucket_len u16, bucket, key_len u16, key]
//   [Inline: blob (payload_bytes bytes)]
Bytes encode_envelope(const Envelope& e);
Envelope decode_envelope(ByteView bytes);

// Wire-header variant: identical, except an Inline envelope's blob is
// elided (the frame body carries it); decode yields an empty Inline blob.
Bytes encode_envelope_header(const Envelope& e);
Envelope decode_envelope_header(ByteView bytes);

struct SplitResult {
    Envelope envelope;
    std::optional<Bytes> blob;  // present iff the envelope is StoreKey-shaped
};

// Separates metadata from the serialized model. Payloads strictly larger
// than `threshold` come back as (StoreKey envelope, blob); smaller ones are
// inlined. join(split(m)) reproduces m bit-exactly.
SplitResult split(const FLMessage& m, std::uint64_t threshold);

// Reassembles the original message. The blob must be present exactly when
// the locator is StoreKey; payload_bytes is re-checked against the blob.
FLMessage join(const Envelope& e, std::optional<ByteView> blob);

}  // namespace silocomm
