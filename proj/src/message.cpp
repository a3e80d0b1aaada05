// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/message.hpp"

#include <cstring>

#include "silocomm/error.hpp"

namespace silocomm {

namespace {

constexpr std::uint8_t kLocatorInline = 0;
constexpr std::uint8_t kLocatorStore = 1;

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int i = 0; i < 4; i++) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int i = 0; i < 8; i++) out.push_back(std::uint8_t(v >> (8 * i)));
}

struct Reader {
    ByteView data;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > data.size())
            throw MalformedPayloadError(data.size(), std::string("envelope truncated reading ") + what);
    }
    std::uint8_t u8(const char* what) {
        need(1, what);
        return data[pos++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = std::uint16_t(data[pos]) | (std::uint16_t(data[pos + 1]) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= std::uint32_t(data[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; i++) v |= std::uint64_t(data[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(data.data() + pos), n);
        pos += n;
        return s;
    }
};

}  // namespace

namespace {

Bytes encode_envelope_impl(const Envelope& e, bool include_inline_blob) {
    Bytes out;
    put_u64(out, e.meta.round);
    out.push_back(std::uint8_t(e.meta.msg_type));
    out.push_back(e.is_inline() ? kLocatorInline : kLocatorStore);
    put_u32(out, e.meta.sender_id);
    put_u32(out, e.meta.receiver_id);
    put_u64(out, e.payload_bytes);
    if (const auto* store = std::get_if<StoreLocator>(&e.locator)) {
        put_u16(out, std::uint16_t(store->key.bucket.size()));
        out.insert(out.end(), store->key.bucket.begin(), store->key.bucket.end());
        put_u16(out, std::uint16_t(store->key.key.size()));
        out.insert(out.end(), store->key.key.begin(), store->key.key.end());
    } else if (include_inline_blob) {
        const auto& blob = std::get<InlineLocator>(e.locator).blob;
        out.insert(out.end(), blob.begin(), blob.end());
    }
    return out;
}

Envelope decode_envelope_impl(ByteView bytes, bool expect_inline_blob) {
    Reader r{bytes};
    Envelope e;
    e.meta.round = r.u64("round");
    std::uint8_t type = r.u8("msg_type");
    if (type > std::uint8_t(MsgType::Control))
        throw MalformedPayloadError(r.pos - 1, "bad msg_type " + std::to_string(type));
    e.meta.msg_type = MsgType(type);
    std::uint8_t kind = r.u8("locator kind");
    e.meta.sender_id = r.u32("sender_id");
    e.meta.receiver_id = r.u32("receiver_id");
    e.payload_bytes = r.u64("payload_bytes");
    if (kind == kLocatorStore) {
        StoreLocator loc;
        std::uint16_t blen = r.u16("bucket length");
        loc.key.bucket = r.str(blen, "bucket");
        std::uint16_t klen = r.u16("key length");
        loc.key.key = r.str(klen, "key");
        e.locator = std::move(loc);
    } else if (kind == kLocatorInline) {
        InlineLocator loc;
        if (expect_inline_blob) {
            if (bytes.size() - r.pos != e.payload_bytes)
                throw MalformedPayloadError(bytes.size(),
                                            "inline blob length does not match payload_bytes");
            loc.blob.assign(bytes.begin() + std::ptrdiff_t(r.pos), bytes.end());
        } else if (r.pos != bytes.size()) {
            throw MalformedPayloadError(r.pos, "trailing bytes after envelope header");
        }
        e.locator = std::move(loc);
    } else {
        throw MalformedPayloadError(r.pos - 1, "bad locator kind " + std::to_string(kind));
    }
    return e;
}

}  // namespace

Bytes encode_envelope(const Envelope& e) { return encode_envelope_impl(e, true); }
Envelope decode_envelope(ByteView bytes) { return decode_envelope_impl(bytes, true); }
Bytes encode_envelope_header(const Envelope& e) { return encode_envelope_impl(e, false); }
Envelope decode_envelope_header(ByteView bytes) { return decode_envelope_impl(bytes, false); }

SplitResult split(const FLMessage& m, std::uint64_t threshold) {
    Bytes serialized = serialize(m.payload);
    SplitResult out;
    out.envelope.meta = m.meta;
    out.envelope.payload_bytes = serialized.size();
    if (serialized.size() > threshold) {
        out.envelope.locator = StoreLocator{};  // key filled by the transport
        out.blob = std::move(serialized);
    } else {
        out.envelope.locator = InlineLocator{std::move(serialized)};
    }
    return out;
}

FLMessage join(const Envelope& e, std::optional<ByteView> blob) {
    FLMessage m;
    m.meta = e.meta;
    if (e.is_inline()) {
        if (blob.has_value())
            throw IncompleteMessageError("spurious payload blob for an inline envelope");
        const auto& inlined = std::get<InlineLocator>(e.locator).blob;
        if (inlined.size() != e.payload_bytes)
            throw IntegrityError("inline blob size " + std::to_string(inlined.size()) +
                                 " does not match declared payload_bytes " +
                                 std::to_string(e.payload_bytes));
        m.payload = deserialize(inlined);
    } else {
        if (!blob.has_value())
            throw IncompleteMessageError("StoreKey envelope requires the payload blob");
        if (blob->size() != e.payload_bytes)
            throw IntegrityError("fetched blob size " + std::to_string(blob->size()) +
                                 " does not match declared payload_bytes " +
                                 std::to_string(e.payload_bytes));
        m.payload = deserialize(*blob);
    }
    return m;
}

}  // namespace silocomm
