// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "silocomm/error.hpp"
#include "silocomm/s3_store.hpp"

using namespace silocomm;

namespace {

// Minimal S3-compatible endpoint: path-style PUT/GET/HEAD over a map. Can
// drop the first N GETs to exercise retries.
struct FakeS3 {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::mutex mu;
    std::map<std::string, std::string> objects;
    std::atomic<int> drop_gets{0};
    std::atomic<int> get_hits{0};
    std::string last_auth;

    FakeS3() {
        server.Put(R"(/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu);
            objects[req.matches[1]] = req.body;
            res.status = 200;
        });
        // httplib dispatches HEAD requests through Get handlers.
        server.Get(R"(/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu);
            if (req.method == "HEAD") {
                res.status = objects.count(req.matches[1]) ? 200 : 404;
                return;
            }
            get_hits++;
            if (drop_gets.fetch_sub(1) > 0) {
                res.status = 500;
                return;
            }
            last_auth = req.get_header_value("Authorization");
            auto it = objects.find(req.matches[1]);
            if (it == objects.end()) {
                res.status = 404;
                return;
            }
            res.set_content(it->second, "application/octet-stream");
        });
        drop_gets = 0;
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([&] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~FakeS3() {
        server.stop();
        thread.join();
    }

    S3Config config() const {
        S3Config cfg;
        cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
        cfg.bucket = "testbucket";
        cfg.timeout_s = 5;
        return cfg;
    }
};

RetryPolicy fast_retry(int attempts) {
    RetryPolicy p;
    p.max_attempts = attempts;
    p.initial_backoff = std::chrono::milliseconds(1);
    return p;
}

}  // namespace

TEST_CASE("s3 store round-trip with dedup via HEAD") {
    FakeS3 fake;
    S3Store store(fake.config());
    Payload p = make_random_payload(5'000, 1);
    ObjectKey key = key_for(p, "r1", "testbucket");
    Bytes data = serialize(p);

    CHECK(store.put_if_absent(key, ByteView(data)) == PutResult::Uploaded);
    CHECK(store.put_if_absent(key, ByteView(data)) == PutResult::AlreadyPresent);
    CHECK(store.stats().snapshot().put_count == 1);

    Blob back = store.get(key);
    CHECK(*back == data);
}

TEST_CASE("s3 store retries dropped responses and flags missing objects") {
    FakeS3 fake;
    S3Store store(fake.config());
    Payload p = make_random_payload(1'000, 2);
    ObjectKey key = key_for(p, "r1", "testbucket");
    store.put_if_absent(key, ByteView(serialize(p)));

    fake.drop_gets = 1;
    std::uint64_t retries = 0;
    Blob back = store.get(key, fast_retry(3), &retries);
    CHECK(*back == serialize(p));
    CHECK(retries == 1);

    ObjectKey missing{"testbucket", "r1/" + std::string(64, '0')};
    CHECK_THROWS_AS(store.get(missing, fast_retry(2)), MissingObjectError);
}

TEST_CASE("s3 store signs requests when credentials are configured") {
    FakeS3 fake;
    S3Config cfg = fake.config();
    cfg.access_key = "AKIDEXAMPLE";
    cfg.secret_key = "secret";
    S3Store store(cfg);
    Payload p = make_random_payload(100, 3);
    ObjectKey key = key_for(p, "r1", "testbucket");
    store.put_if_absent(key, ByteView(serialize(p)));
    store.get(key);
    CHECK(fake.last_auth.rfind("AWS4-HMAC-SHA256 Credential=AKIDEXAMPLE/", 0) == 0);
    CHECK(fake.last_auth.find("SignedHeaders=host;x-amz-content-sha256;x-amz-date") !=
          std::string::npos);
    CHECK(fake.last_auth.find("Signature=") != std::string::npos);
}

TEST_CASE("s3 store surfaces unreachable endpoints") {
    S3Config cfg;
    cfg.endpoint = "http://127.0.0.1:1";
    cfg.timeout_s = 1;
    S3Store store(cfg);
    ObjectKey key{"b", "k"};
    CHECK_THROWS_AS(store.get(key, fast_retry(1)), Error);
}

TEST_CASE("s3 config from environment") {
    CHECK(!S3Config::from_env().has_value());
    setenv("SILOCOMM_S3_ENDPOINT", "http://example:9000", 1);
    setenv("SILOCOMM_S3_BUCKET", "models", 1);
    setenv("SILOCOMM_S3_KEY", "ak", 1);
    setenv("SILOCOMM_S3_SECRET", "sk", 1);
    auto cfg = S3Config::from_env();
    REQUIRE(cfg.has_value());
    CHECK(cfg->endpoint == "http://example:9000");
    CHECK(cfg->bucket == "models");
    CHECK(cfg->access_key == "ak");
    CHECK(cfg->secret_key == "sk");
    unsetenv("SILOCOMM_S3_ENDPOINT");
    unsetenv("SILOCOMM_S3_BUCKET");
    unsetenv("SILOCOMM_S3_KEY");
    unsetenv("SILOCOMM_S3_SECRET");
}
