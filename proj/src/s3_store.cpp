// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/s3_store.hpp"

#include <cstdlib>
#include <ctime>

#include <httplib.h>

#include "silocomm/error.hpp"

namespace silocomm {

namespace sigv4 {

Digest hmac_sha256(ByteView key, ByteView data) {
    std::array<std::uint8_t, 64> block{};
    if (key.size() > 64) {
        Digest kd = Sha256::of(key);
        std::copy(kd.bytes.begin(), kd.bytes.end(), block.begin());
    } else {
        std::copy(key.begin(), key.end(), block.begin());
    }
    std::array<std::uint8_t, 64> ipad, opad;
    for (int i = 0; i < 64; i++) {
        ipad[std::size_t(i)] = block[std::size_t(i)] ^ 0x36;
        opad[std::size_t(i)] = block[std::size_t(i)] ^ 0x5c;
    }
    Sha256 inner;
    inner.update(ByteView(ipad.data(), ipad.size()));
    inner.update(data);
    Digest id = inner.finish();
    Sha256 outer;
    outer.update(ByteView(opad.data(), opad.size()));
    outer.update(ByteView(id.bytes.data(), id.bytes.size()));
    return outer.finish();
}

namespace {
Digest hmac_str(const Digest& key, const std::string& s) {
    return hmac_sha256(ByteView(key.bytes.data(), key.bytes.size()), as_bytes(s));
}
}  // namespace

std::string signature(const std::string& secret_key, const std::string& date,
                      const std::string& region, const std::string& service,
                      const std::string& string_to_sign) {
    std::string k0 = "AWS4" + secret_key;
    Digest k_date = hmac_sha256(as_bytes(k0), as_bytes(date));
    Digest k_region = hmac_str(k_date, region);
    Digest k_service = hmac_str(k_region, service);
    Digest k_signing = hmac_str(k_service, "aws4_request");
    return hmac_str(k_signing, string_to_sign).hex();
}

std::string canonical_request_hash(const std::string& method, const std::string& path,
                                   const std::string& query, const std::string& host,
                                   const std::string& amz_date,
                                   const std::string& payload_hash_hex) {
    std::string canonical = method + "\n" + path + "\n" + query + "\n" +
                            "host:" + host + "\n" +
                            "x-amz-content-sha256:" + payload_hash_hex + "\n" +
                            "x-amz-date:" + amz_date + "\n" + "\n" +
                            "host;x-amz-content-sha256;x-amz-date\n" + payload_hash_hex;
    return Sha256::of(as_bytes(canonical)).hex();
}

}  // namespace sigv4

std::optional<S3Config> S3Config::from_env() {
    const char* endpoint = std::getenv("SILOCOMM_S3_ENDPOINT");
    if (!endpoint || !*endpoint) return std::nullopt;
    S3Config cfg;
    cfg.endpoint = endpoint;
    if (const char* b = std::getenv("SILOCOMM_S3_BUCKET"); b && *b) cfg.bucket = b;
    if (const char* k = std::getenv("SILOCOMM_S3_KEY"); k && *k) cfg.access_key = k;
    if (const char* s = std::getenv("SILOCOMM_S3_SECRET"); s && *s) cfg.secret_key = s;
    if (const char* r = std::getenv("SILOCOMM_S3_REGION"); r && *r) cfg.region = r;
    return cfg;
}

struct S3Store::Impl {
    S3Config cfg;
    httplib::Client client;
    std::string host;

    explicit Impl(S3Config c) : cfg(std::move(c)), client(cfg.endpoint) {
        client.set_connection_timeout(cfg.timeout_s);
        client.set_read_timeout(cfg.timeout_s);
        client.set_write_timeout(cfg.timeout_s);
        auto pos = cfg.endpoint.find("://");
        host = pos == std::string::npos ? cfg.endpoint : cfg.endpoint.substr(pos + 3);
    }

    httplib::Headers signed_headers(const std::string& method, const std::string& path,
                                    const std::string& payload_hash) {
        httplib::Headers headers = {{"x-amz-content-sha256", payload_hash}};
        if (cfg.access_key.empty()) return headers;

        char date[9], amz_date[17];
        std::time_t now = std::time(nullptr);
        std::tm tm{};
        gmtime_r(&now, &tm);
        std::strftime(date, sizeof(date), "%Y%m%d", &tm);
        std::strftime(amz_date, sizeof(amz_date), "%Y%m%dT%H%M%SZ", &tm);

        std::string scope = std::string(date) + "/" + cfg.region + "/s3/aws4_request";
        std::string cr_hash =
            sigv4::canonical_request_hash(method, path, "", host, amz_date, payload_hash);
        std::string string_to_sign =
            "AWS4-HMAC-SHA256\n" + std::string(amz_date) + "\n" + scope + "\n" + cr_hash;
        std::string sig = sigv4::signature(cfg.secret_key, date, cfg.region, "s3", string_to_sign);

        headers.emplace("x-amz-date", amz_date);
        headers.emplace("Authorization",
                        "AWS4-HMAC-SHA256 Credential=" + cfg.access_key + "/" + scope +
                            ", SignedHeaders=host;x-amz-content-sha256;x-amz-date, Signature=" + sig);
        return headers;
    }
};

S3Store::S3Store(S3Config cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {}
S3Store::~S3Store() = default;

PutResult S3Store::put_once(const ObjectKey& key, Blob blob) {
    std::string path = "/" + key.bucket + "/" + key.key;

    auto head_headers = impl_->signed_headers("HEAD", path, Sha256::of({}).hex());
    auto head = impl_->client.Head(path, head_headers);
    if (head && head->status == 200) return PutResult::AlreadyPresent;
    if (!head && head.error() == httplib::Error::Connection)
        throw StoreUnreachableError("cannot reach " + impl_->cfg.endpoint);

    std::string payload_hash = Sha256::of(*blob).hex();
    auto headers = impl_->signed_headers("PUT", path, payload_hash);
    auto res = impl_->client.Put(path, headers,
                                 reinterpret_cast<const char*>(blob->data()), blob->size(),
                                 "application/octet-stream");
    if (!res) throw StoreUnreachableError("PUT " + path + " failed: " + httplib::to_string(res.error()));
    if (res->status / 100 != 2)
        throw StoreUnreachableError("PUT " + path + " returned HTTP " + std::to_string(res->status));
    stats_.count_put(blob->size());
    return PutResult::Uploaded;
}

Blob S3Store::get_once(const ObjectKey& key) {
    std::string path = "/" + key.bucket + "/" + key.key;
    auto headers = impl_->signed_headers("GET", path, Sha256::of({}).hex());
    auto res = impl_->client.Get(path, headers);
    if (!res) throw StoreUnreachableError("GET " + path + " failed: " + httplib::to_string(res.error()));
    if (res->status == 404) throw MissingObjectError("object not found: " + key.str());
    if (res->status / 100 != 2)
        throw StoreUnreachableError("GET " + path + " returned HTTP " + std::to_string(res->status));
    Bytes data(res->body.begin(), res->body.end());
    stats_.count_get(data.size());
    return make_blob(std::move(data));
}

}  // namespace silocomm
