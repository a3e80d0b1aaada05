// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "silocomm/message.hpp"
#include "silocomm/netem.hpp"
#include "silocomm/payload.hpp"

namespace silocomm {

inline constexpr const char* kDefaultBucket = "silocomm";

enum class PutResult { Uploaded, AlreadyPresent };

// Fetched objects are shared so broadcast receivers of the same blob do not
// multiply resident copies in desk-scale runs.
using Blob = std::shared_ptr<const Bytes>;

inline Blob make_blob(Bytes b) { return std::make_shared<const Bytes>(std::move(b)); }

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{20};
    double multiplier = 2.0;
};

struct StoreStatsSnapshot {
    std::uint64_t put_count = 0;
    std::uint64_t get_count = 0;
    std::uint64_t bytes_uploaded = 0;
    std::uint64_t bytes_downloaded = 0;
    std::uint64_t retry_count = 0;
};

class StoreStats {
public:
    void count_put(std::uint64_t bytes) {
        put_count_.fetch_add(1, std::memory_order_relaxed);
        bytes_uploaded_.fetch_add(bytes, std::memory_order_relaxed);
    }
    void count_get(std::uint64_t bytes) {
        get_count_.fetch_add(1, std::memory_order_relaxed);
        bytes_downloaded_.fetch_add(bytes, std::memory_order_relaxed);
    }
    void count_retry() { retry_count_.fetch_add(1, std::memory_order_relaxed); }

    StoreStatsSnapshot snapshot() const {
        return {put_count_.load(), get_count_.load(), bytes_uploaded_.load(),
                bytes_downloaded_.load(), retry_count_.load()};
    }

private:
    std::atomic<std::uint64_t> put_count_{0}, get_count_{0};
    std::atomic<std::uint64_t> bytes_uploaded_{0}, bytes_downloaded_{0};
    std::atomic<std::uint64_t> retry_count_{0};
};

// Object-store interface. Implementations provide single-attempt
// `put_once`/`get_once`; the non-virtual `put_if_absent`/`get` add the
// public contract: idempotent upload, retry with exponential backoff, and
// digest verification against the digest embedded in the key. All methods
// are safe for concurrent use.
//
// Stats: physical stores count puts/gets/bytes; the retrying `get` counts
// retries on the instance it was called on, so per-participant decorators
// record their own retry counts while the shared backing store keeps the
// global upload/download tallies.
class ObjectStore {
public:
    virtual ~ObjectStore() = default;

    virtual std::string backend_id() const = 0;

    // Single attempt; returns AlreadyPresent without re-uploading when the
    // key exists. Throws StoreUnreachableError / CapacityExceededError.
    virtual PutResult put_once(const ObjectKey& key, Blob blob) = 0;

    // Single attempt; throws MissingObjectError / StoreUnreachableError.
    virtual Blob get_once(const ObjectKey& key) = 0;

    PutResult put_if_absent(const ObjectKey& key, Blob blob);
    PutResult put_if_absent(const ObjectKey& key, ByteView blob);

    // Retries transient failures up to policy.max_attempts with exponential
    // backoff and verifies the fetched bytes against the digest embedded in
    // the key (when present). Throws MissingObjectError after exhausting
    // attempts, CorruptObjectError on persistent digest mismatch.
    // `retries_out`, when given, receives the retry count of this call.
    Blob get(const ObjectKey& key, const RetryPolicy& policy = {},
             std::uint64_t* retries_out = nullptr);

    StoreStats& stats() { return stats_; }
    const StoreStats& stats() const { return stats_; }

protected:
    StoreStats stats_;
};

// Deterministic content-addressed key: "<namespace>/<version digest hex>".
// Identical payload bytes and namespace always map to the same key.
ObjectKey key_for(const Payload& p, const std::string& name_space,
                  const std::string& bucket = kDefaultBucket);
ObjectKey key_for_digest(const Digest& version, const std::string& name_space,
                         const std::string& bucket = kDefaultBucket);

// Digest hex embedded in a key (the last path segment), if it looks like one.
std::optional<std::string> digest_hex_from_key(const ObjectKey& key);

// Sender-side LRU cache of already-uploaded payload versions. A cached
// digest is never re-uploaded while cached.
class KeyCache {
public:
    explicit KeyCache(std::size_t capacity = 64);

    std::optional<ObjectKey> lookup(const Digest& version);
    void insert(const Digest& version, ObjectKey key);
    std::size_t size() const;
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    mutable std::mutex mu_;
    std::list<std::pair<std::string, ObjectKey>> lru_;  // front = most recent
    std::unordered_map<std::string, std::list<std::pair<std::string, ObjectKey>>::iterator> index_;
};

// In-memory store; the default for tests and desk-scale benchmarks.
// Stored blobs are shared with callers (no copy on get).
class MemoryStore : public ObjectStore {
public:
    // max_total_bytes = 0 means unbounded.
    explicit MemoryStore(std::uint64_t max_total_bytes = 0);

    std::string backend_id() const override { return "memory"; }
    PutResult put_once(const ObjectKey& key, Blob blob) override;
    Blob get_once(const ObjectKey& key) override;

    bool erase(const ObjectKey& key);
    std::size_t object_count() const;

private:
    std::uint64_t max_total_bytes_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, Blob> objects_;
    std::uint64_t total_bytes_ = 0;
};

// Filesystem store: objects live at <root>/<bucket>/<key>, bytes verbatim.
class FsStore : public ObjectStore {
public:
    explicit FsStore(std::string root);

    std::string backend_id() const override { return "fs"; }
    PutResult put_once(const ObjectKey& key, Blob blob) override;
    Blob get_once(const ObjectKey& key) override;

    const std::string& root() const { return root_; }

private:
    std::string object_path(const ObjectKey& key) const;
    std::string root_;
    std::mutex put_mu_;
};

// Decorator that delays operations as if the store were reached over the
// given link: each operation pays two round trips (connect, request) and the
// body is paced at the profile's bandwidth. Each participant gets its own
// instance so receivers fetch independently; operations by one participant
// share its link.
class ShapedStore : public ObjectStore {
public:
    ShapedStore(std::shared_ptr<ObjectStore> inner, const LinkProfile& store_profile);

    std::string backend_id() const override;
    PutResult put_once(const ObjectKey& key, Blob blob) override;
    Blob get_once(const ObjectKey& key) override;

    const LinkProfile& profile() const { return profile_; }

private:
    void pace(std::size_t bytes);
    std::shared_ptr<ObjectStore> inner_;
    LinkProfile profile_;
    RatePacer pacer_;
};

// Test/benchmark decorator: `injector(op, key, attempt)` may throw to
// simulate mid-stream failures. Attempts are counted per (op, key).
class FaultInjectingStore : public ObjectStore {
public:
    using Injector = std::function<void(const std::string& op, const ObjectKey& key, int attempt)>;

    FaultInjectingStore(std::shared_ptr<ObjectStore> inner, Injector injector);

    std::string backend_id() const override { return inner_->backend_id() + "+faults"; }
    PutResult put_once(const ObjectKey& key, Blob blob) override;
    Blob get_once(const ObjectKey& key) override;

private:
    int next_attempt(const std::string& op, const ObjectKey& key);
    std::shared_ptr<ObjectStore> inner_;
    Injector injector_;
    std::mutex mu_;
    std::unordered_map<std::string, int> attempts_;
};

}  // namespace silocomm
