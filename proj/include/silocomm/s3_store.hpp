// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>

#include "silocomm/store.hpp"

namespace silocomm {

// S3-compatible object store over HTTP with path-style addressing
// (PUT/GET/HEAD /<bucket>/<key>). Requests are signed with AWS Signature v4
// when credentials are configured; anonymous otherwise (local emulators).
struct S3Config {
    std::string endpoint;  // http://host:port
    std::string bucket = kDefaultBucket;
    std::string access_key;       // empty = anonymous
    std::string secret_key;
    std::string region = "us-east-1";
    int timeout_s = 30;

    // Reads SILOCOMM_S3_ENDPOINT, SILOCOMM_S3_BUCKET, SILOCOMM_S3_KEY,
    // SILOCOMM_S3_SECRET (and SILOCOMM_S3_REGION if set).
    static std::optional<S3Config> from_env();
};

class S3Store : public ObjectStore {
public:
    explicit S3Store(S3Config cfg);
    ~S3Store() override;

    std::string backend_id() const override { return "s3"; }
    PutResult put_once(const ObjectKey& key, Blob blob) override;
    Blob get_once(const ObjectKey& key) override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

namespace sigv4 {
// Exposed for verification against standard HMAC test vectors.
Digest hmac_sha256(ByteView key, ByteView data);
std::string signature(const std::string& secret_key, const std::string& date_yyyymmdd,
                      const std::string& region, const std::string& service,
                      const std::string& string_to_sign);
std::string canonical_request_hash(const std::string& method, const std::string& path,
                                   const std::string& query, const std::string& host,
                                   const std::string& amz_date,
                                   const std::string& payload_hash_hex);
}  // namespace sigv4

}  // namespace silocomm
