// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/store.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <thread>

#include "silocomm/error.hpp"

namespace silocomm {

namespace fs = std::filesystem;

PutResult ObjectStore::put_if_absent(const ObjectKey& key, Blob blob) {
    if (!blob || blob->empty()) throw ConfigError("put_if_absent: blob must be non-empty");
    return put_once(key, blob);
}

PutResult ObjectStore::put_if_absent(const ObjectKey& key, ByteView blob) {
    return put_if_absent(key, make_blob(Bytes(blob.begin(), blob.end())));
}

Blob ObjectStore::get(const ObjectKey& key, const RetryPolicy& policy,
                      std::uint64_t* retries_out) {
    if (policy.max_attempts < 1) throw ConfigError("get: max_attempts must be >= 1");
    std::optional<std::string> expected = digest_hex_from_key(key);
    auto backoff = policy.initial_backoff;
    if (retries_out) *retries_out = 0;
    for (int attempt = 1;; attempt++) {
        try {
            Blob blob = get_once(key);
            if (expected && Sha256::of(*blob).hex() != *expected)
                throw CorruptObjectError("object " + key.str() +
                                         " does not match the digest embedded in its key");
            return blob;
        } catch (const CapacityExceededError&) {
            throw;
        } catch (const Error&) {
            if (attempt >= policy.max_attempts) throw;
            stats_.count_retry();
            if (retries_out) (*retries_out)++;
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                std::int64_t(double(backoff.count()) * policy.multiplier));
        }
    }
}

namespace {

std::string sanitize_namespace(const std::string& ns) {
    std::string out;
    out.reserve(ns.size());
    for (char c : ns) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                  (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
        out.push_back(ok ? c : '-');
    }
    return out.empty() ? "default" : out;
}

}  // namespace

ObjectKey key_for_digest(const Digest& version, const std::string& name_space,
                         const std::string& bucket) {
    return ObjectKey{bucket, sanitize_namespace(name_space) + "/" + version.hex()};
}

ObjectKey key_for(const Payload& p, const std::string& name_space, const std::string& bucket) {
    return key_for_digest(p.version, name_space, bucket);
}

std::optional<std::string> digest_hex_from_key(const ObjectKey& key) {
    auto pos = key.key.rfind('/');
    std::string tail = pos == std::string::npos ? key.key : key.key.substr(pos + 1);
    if (tail.size() != 64) return std::nullopt;
    for (char c : tail)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return std::nullopt;
    return tail;
}

// ---------------------------------------------------------------------------
// KeyCache
// ---------------------------------------------------------------------------

KeyCache::KeyCache(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

std::optional<ObjectKey> KeyCache::lookup(const Digest& version) {
    std::lock_guard lock(mu_);
    auto it = index_.find(version.hex());
    if (it == index_.end()) return std::nullopt;
    lru_.splice(lru_.begin(), lru_, it->second);
    return it->second->second;
}

void KeyCache::insert(const Digest& version, ObjectKey key) {
    std::lock_guard lock(mu_);
    std::string hex = version.hex();
    auto it = index_.find(hex);
    if (it != index_.end()) {
        it->second->second = std::move(key);
        lru_.splice(lru_.begin(), lru_, it->second);
        return;
    }
    lru_.emplace_front(hex, std::move(key));
    index_[hex] = lru_.begin();
    if (lru_.size() > capacity_) {
        index_.erase(lru_.back().first);
        lru_.pop_back();
    }
}

std::size_t KeyCache::size() const {
    std::lock_guard lock(mu_);
    return lru_.size();
}

// ---------------------------------------------------------------------------
// MemoryStore
// ---------------------------------------------------------------------------

MemoryStore::MemoryStore(std::uint64_t max_total_bytes) : max_total_bytes_(max_total_bytes) {}

PutResult MemoryStore::put_once(const ObjectKey& key, Blob blob) {
    std::size_t size = blob->size();
    {
        std::lock_guard lock(mu_);
        auto [it, inserted] = objects_.try_emplace(key.str(), std::move(blob));
        if (!inserted) return PutResult::AlreadyPresent;
        if (max_total_bytes_ > 0 && total_bytes_ + size > max_total_bytes_) {
            objects_.erase(it);
            throw CapacityExceededError("memory store capacity " + std::to_string(max_total_bytes_) +
                                        " bytes exceeded by object of " + std::to_string(size) +
                                        " bytes");
        }
        total_bytes_ += size;
    }
    stats_.count_put(size);
    return PutResult::Uploaded;
}

Blob MemoryStore::get_once(const ObjectKey& key) {
    Blob blob;
    {
        std::lock_guard lock(mu_);
        auto it = objects_.find(key.str());
        if (it == objects_.end()) throw MissingObjectError("object not found: " + key.str());
        blob = it->second;
    }
    stats_.count_get(blob->size());
    return blob;
}

bool MemoryStore::erase(const ObjectKey& key) {
    std::lock_guard lock(mu_);
    auto it = objects_.find(key.str());
    if (it == objects_.end()) return false;
    total_bytes_ -= it->second->size();
    objects_.erase(it);
    return true;
}

std::size_t MemoryStore::object_count() const {
    std::lock_guard lock(mu_);
    return objects_.size();
}

// ---------------------------------------------------------------------------
// FsStore
// ---------------------------------------------------------------------------

FsStore::FsStore(std::string root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw StoreUnreachableError("cannot create store root " + root_ + ": " + ec.message());
}

std::string FsStore::object_path(const ObjectKey& key) const {
    return root_ + "/" + key.bucket + "/" + key.key;
}

PutResult FsStore::put_once(const ObjectKey& key, Blob blob) {
    fs::path path = object_path(key);
    std::lock_guard lock(put_mu_);
    std::error_code ec;
    if (fs::exists(path, ec)) return PutResult::AlreadyPresent;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw StoreUnreachableError("cannot create " + path.parent_path().string() + ": " + ec.message());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StoreUnreachableError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(blob->data()), std::streamsize(blob->size()));
        if (!out) throw StoreUnreachableError("short write to " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) throw StoreUnreachableError("cannot rename " + tmp.string() + ": " + ec.message());
    stats_.count_put(blob->size());
    return PutResult::Uploaded;
}

Blob FsStore::get_once(const ObjectKey& key) {
    fs::path path = object_path(key);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingObjectError("object not found: " + key.str());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw StoreUnreachableError("read failed: " + path.string());
    stats_.count_get(data.size());
    return make_blob(std::move(data));
}

// ---------------------------------------------------------------------------
// ShapedStore
// ---------------------------------------------------------------------------

ShapedStore::ShapedStore(std::shared_ptr<ObjectStore> inner, const LinkProfile& store_profile)
    : inner_(std::move(inner)),
      profile_(store_profile),
      pacer_(store_profile.aggregate_bytes_per_s()) {}

std::string ShapedStore::backend_id() const {
    return inner_->backend_id() + "@" + profile_.name;
}

void ShapedStore::pace(std::size_t bytes) {
    if (profile_.unlimited()) return;
    // Fresh-connection request/response: the body occupies the link only
    // after the request reaches the store (3 one-way legs), and the last
    // byte lands one latency after its grant. Total: 4 legs + body/rate.
    auto latency = std::chrono::nanoseconds(std::int64_t(profile_.latency_s() * 1e9));
    TimePoint start = Clock::now() + 3 * latency;
    TimePoint done = pacer_.reserve_from(start, bytes) + latency;
    precise_sleep_until(done);
}

PutResult ShapedStore::put_once(const ObjectKey& key, Blob blob) {
    pace(0);  // existence probe
    std::size_t size = blob->size();
    PutResult r = inner_->put_once(key, std::move(blob));
    if (r == PutResult::Uploaded) pace(size);
    return r;
}

Blob ShapedStore::get_once(const ObjectKey& key) {
    Blob blob = inner_->get_once(key);
    pace(blob->size());
    return blob;
}

// ---------------------------------------------------------------------------
// FaultInjectingStore
// ---------------------------------------------------------------------------

FaultInjectingStore::FaultInjectingStore(std::shared_ptr<ObjectStore> inner, Injector injector)
    : inner_(std::move(inner)), injector_(std::move(injector)) {}

int FaultInjectingStore::next_attempt(const std::string& op, const ObjectKey& key) {
    std::lock_guard lock(mu_);
    return ++attempts_[op + ":" + key.str()];
}

PutResult FaultInjectingStore::put_once(const ObjectKey& key, Blob blob) {
    if (injector_) injector_("put", key, next_attempt("put", key));
    return inner_->put_once(key, std::move(blob));
}

Blob FaultInjectingStore::get_once(const ObjectKey& key) {
    if (injector_) injector_("get", key, next_attempt("get", key));
    return inner_->get_once(key);
}

}  // namespace silocomm
