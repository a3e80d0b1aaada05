// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "silocomm/error.hpp"
#include "silocomm/store.hpp"

using namespace silocomm;

namespace {

Blob blob_of(const std::string& s) {
    return make_blob(Bytes(s.begin(), s.end()));
}

RetryPolicy fast_retry(int attempts) {
    RetryPolicy p;
    p.max_attempts = attempts;
    p.initial_backoff = std::chrono::milliseconds(1);
    return p;
}

}  // namespace

TEST_CASE("key derivation is deterministic and namespace-sensitive") {
    Payload p = make_random_payload(200, 1);
    Payload q = make_random_payload(200, 2);

    CHECK(key_for(p, "r1") == key_for(p, "r1"));
    CHECK(key_for(p, "r1") != key_for(p, "r2"));
    CHECK(key_for(p, "r1") != key_for(q, "r1"));

    ObjectKey k = key_for(p, "round 1/x");  // sanitized to URL-safe characters
    for (char c : k.key) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                  c == '.' || c == '_' || c == '-' || c == '/';
        CHECK(ok);
    }
    auto embedded = digest_hex_from_key(k);
    REQUIRE(embedded.has_value());
    CHECK(*embedded == p.version.hex());
}

TEST_CASE("put_if_absent uploads once") {
    MemoryStore store;
    Payload p = make_random_payload(500, 3);
    ObjectKey key = key_for(p, "r1");
    Blob blob = make_blob(serialize(p));

    CHECK(store.put_if_absent(key, blob) == PutResult::Uploaded);
    CHECK(store.stats().snapshot().put_count == 1);
    CHECK(store.put_if_absent(key, blob) == PutResult::AlreadyPresent);
    CHECK(store.stats().snapshot().put_count == 1);
    CHECK(store.stats().snapshot().bytes_uploaded == blob->size());
}

TEST_CASE("get returns the exact uploaded bytes, digest-verified") {
    MemoryStore store;
    Payload p = make_random_payload(1000, 4);
    ObjectKey key = key_for(p, "r2");
    Bytes data = serialize(p);
    store.put_if_absent(key, ByteView(data));
    Blob back = store.get(key);
    CHECK(*back == data);
}

TEST_CASE("empty blob is rejected") {
    MemoryStore store;
    CHECK_THROWS_AS(store.put_if_absent(ObjectKey{"b", "k"}, blob_of("")), ConfigError);
}

TEST_CASE("get of a never-put key exhausts retries then reports missing") {
    MemoryStore store;
    ObjectKey key{"b", "nothing/here"};
    auto t0 = std::chrono::steady_clock::now();
    CHECK_THROWS_AS(store.get(key, fast_retry(3)), MissingObjectError);
    (void)t0;
    CHECK(store.stats().snapshot().retry_count == 2);  // two waits between three attempts
}

TEST_CASE("corrupt object detected against the key digest") {
    MemoryStore store;
    Payload p = make_random_payload(100, 5);
    ObjectKey key = key_for(p, "r1");
    Bytes wrong = serialize(make_random_payload(100, 6));
    store.put_if_absent(key, ByteView(wrong));
    CHECK_THROWS_AS(store.get(key, fast_retry(2)), CorruptObjectError);
}

TEST_CASE("capacity-bounded store rejects oversized totals") {
    MemoryStore store(1000);
    CHECK(store.put_if_absent(ObjectKey{"b", "k1"}, blob_of(std::string(600, 'x'))) ==
          PutResult::Uploaded);
    CHECK_THROWS_AS(store.put_if_absent(ObjectKey{"b", "k2"}, blob_of(std::string(600, 'y'))),
                    CapacityExceededError);
    // The failed object is not retrievable.
    CHECK_THROWS_AS(store.get(ObjectKey{"b", "k2"}, fast_retry(1)), MissingObjectError);
}

TEST_CASE("fault injection: first attempt aborts, second succeeds, no re-upload") {
    auto backing = std::make_shared<MemoryStore>();
    Payload p = make_random_payload(2000, 7);
    ObjectKey key = key_for(p, "r1");
    backing->put_if_absent(key, make_blob(serialize(p)));
    std::uint64_t puts_before = backing->stats().snapshot().put_count;

    FaultInjectingStore faulty(backing, [](const std::string& op, const ObjectKey&, int attempt) {
        if (op == "get" && attempt == 1)
            throw StoreUnreachableError("injected mid-stream abort");
    });

    std::uint64_t retries = 0;
    Blob got = faulty.get(key, fast_retry(3), &retries);
    CHECK(*got == serialize(p));
    CHECK(retries == 1);
    CHECK(faulty.stats().snapshot().retry_count == 1);
    CHECK(backing->stats().snapshot().put_count == puts_before);  // no sender re-transmit
}

TEST_CASE("key cache: LRU with dedup of cached digests") {
    KeyCache cache(2);
    Payload a = make_random_payload(10, 1), b = make_random_payload(10, 2),
            c = make_random_payload(10, 3);
    cache.insert(a.version, key_for(a, "r1"));
    cache.insert(b.version, key_for(b, "r1"));
    CHECK(cache.lookup(a.version).has_value());  // refreshes a
    cache.insert(c.version, key_for(c, "r1"));   // evicts b
    CHECK(cache.lookup(a.version).has_value());
    CHECK(!cache.lookup(b.version).has_value());
    CHECK(cache.lookup(c.version).has_value());
    CHECK(cache.size() == 2);
}

TEST_CASE("filesystem store round-trip with verbatim layout") {
    auto root = std::filesystem::temp_directory_path() / "silocomm-fs-test";
    std::filesystem::remove_all(root);
    FsStore store(root.string());
    Payload p = make_random_payload(300, 8);
    ObjectKey key = key_for(p, "r7");
    Bytes data = serialize(p);
    CHECK(store.put_if_absent(key, ByteView(data)) == PutResult::Uploaded);
    CHECK(store.put_if_absent(key, ByteView(data)) == PutResult::AlreadyPresent);

    // Bytes land verbatim at <root>/<bucket>/<key>.
    auto path = root / key.bucket / key.key;
    REQUIRE(std::filesystem::exists(path));
    CHECK(std::filesystem::file_size(path) == data.size());

    Blob back = store.get(key);
    CHECK(*back == data);
    std::filesystem::remove_all(root);
}

TEST_CASE("receiver independence: parallel gets do not serialize") {
    auto backing = std::make_shared<MemoryStore>();
    Payload p = make_random_payload(125'000, 9);  // 500 KB
    ObjectKey key = key_for(p, "r1");
    backing->put_if_absent(key, make_blob(serialize(p)));

    // One shaped handle per receiver, as the transports wire it: each
    // receiver pulls over its own link, so wall clock stays near one get.
    LinkProfile lp{"independent", 50, 50, 50};
    auto timed_gets = [&](int n) {
        std::vector<std::unique_ptr<ShapedStore>> handles;
        for (int i = 0; i < n; i++)
            handles.push_back(std::make_unique<ShapedStore>(backing, lp));
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::thread> ts;
        for (auto& h : handles)
            ts.emplace_back([&h, &key] { h->get(key); });
        for (auto& t : ts) t.join();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    double one = timed_gets(1);
    double eight = timed_gets(8);
    CHECK(eight < 1.5 * one);
}

TEST_CASE("shaped store delays operations like a link") {
    auto backing = std::make_shared<MemoryStore>();
    LinkProfile lp{"test", 20 /*ms*/, 50, 50};  // 50 MB/s, 20 ms one-way
    ShapedStore shaped(backing, lp);

    Payload p = make_random_payload(250'000, 10);  // 1 MB serialized
    ObjectKey key = key_for(p, "r1");

    auto t0 = std::chrono::steady_clock::now();
    shaped.put_if_absent(key, make_blob(serialize(p)));
    double put_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // Probe (0.08 s) + upload (0.08 s + ~1 MB / 50 MB/s).
    CHECK(put_s > 0.16);
    CHECK(put_s < 0.30);

    t0 = std::chrono::steady_clock::now();
    Blob back = shaped.get(key);
    double get_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(*back == serialize(p));
    CHECK(get_s > 0.09);
    CHECK(get_s < 0.20);
}
