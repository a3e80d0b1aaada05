// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "silocomm/message.hpp"
#include "silocomm/netem.hpp"
#include "silocomm/store.hpp"

namespace silocomm {

inline constexpr std::uint64_t kDefaultFallbackThreshold = 10'000'000;  // 10 MB

// Configuration of a backend archetype. Presets reproduce the
// performance-relevant traits of the real stacks (connection count,
// serialization cost, per-send copy behavior, hybrid store offload) without
// linking them.
struct BackendSpec {
    enum class Serialization { Generic, RawBuffer };
    enum class Buffering { CopyPerSend, SharedBuffer };

    std::string name = "custom";
    int connections_per_peer = 1;
    Serialization serialization = Serialization::RawBuffer;
    Buffering buffering = Buffering::SharedBuffer;
    bool hybrid = false;
    std::uint64_t fallback_threshold = kDefaultFallbackThreshold;
    // Artificial throughput of generic (pickle/proto-style) serialization.
    // Also used by the hybrid backend's below-threshold fallback, which
    // behaves as a plain direct-RPC send.
    double generic_ser_bytes_per_s = 300e6;

    // grpc_like | mpi_generic_like | mpi_membuff_like | torch_rpc_like | hybrid
    static BackendSpec preset(const std::string& name);
    static const std::vector<std::string>& preset_names();

    // Desk-scale variant: serialization rate and fallback threshold follow
    // the same factor as payload bytes and bandwidths so routing decisions
    // and time ratios match the full-scale run.
    BackendSpec scaled(double s) const;
};

enum class Route { Inline, Store };

// Store iff payload_bytes > threshold (strict; equality stays inline).
Route route(std::uint64_t payload_bytes, std::uint64_t threshold);

// Exact accounting of payload-copy bytes concurrently resident inside a
// transport endpoint; the testable stand-in for peak sender memory.
class ByteLedger {
public:
    void add(std::uint64_t n) {
        std::uint64_t cur = current_.fetch_add(n, std::memory_order_relaxed) + n;
        bump_peak(cur);
    }
    void release(std::uint64_t n) { current_.fetch_sub(n, std::memory_order_relaxed); }

    std::uint64_t current() const { return current_.load(std::memory_order_relaxed); }
    std::uint64_t peak() const { return peak_.load(std::memory_order_relaxed); }

    // Windowed peak for measuring one operation (e.g. a broadcast).
    void begin_window() { window_peak_.store(current(), std::memory_order_relaxed); }
    std::uint64_t window_peak() const { return window_peak_.load(std::memory_order_relaxed); }

private:
    void bump_peak(std::uint64_t cur) {
        auto bump = [cur](std::atomic<std::uint64_t>& p) {
            std::uint64_t prev = p.load(std::memory_order_relaxed);
            while (prev < cur && !p.compare_exchange_weak(prev, cur)) {
            }
        };
        bump(peak_);
        bump(window_peak_);
    }
    std::atomic<std::uint64_t> current_{0}, peak_{0}, window_peak_{0};
};

// RAII registration of one tracked allocation.
class TrackedBytes {
public:
    TrackedBytes() = default;
    TrackedBytes(ByteLedger& ledger, std::uint64_t n) : ledger_(&ledger), n_(n) { ledger_->add(n_); }
    TrackedBytes(TrackedBytes&& o) noexcept : ledger_(o.ledger_), n_(o.n_) { o.ledger_ = nullptr; }
    TrackedBytes& operator=(TrackedBytes&& o) noexcept {
        reset();
        ledger_ = o.ledger_;
        n_ = o.n_;
        o.ledger_ = nullptr;
        return *this;
    }
    ~TrackedBytes() { reset(); }
    void reset() {
        if (ledger_) ledger_->release(n_);
        ledger_ = nullptr;
    }

private:
    ByteLedger* ledger_ = nullptr;
    std::uint64_t n_ = 0;
};

struct Receipt {
    ParticipantId peer = 0;
    std::uint64_t bytes_on_wire = 0;  // control-channel bytes incl. framing
    double t_serialize = 0;
    double t_comm = 0;
    bool store_put = false;          // true only for hybrid above threshold
    std::uint64_t retry_count = 0;   // receiver-side fetch retries, when the driver can see them
    bool ok = true;
    std::string error;
};

enum class DispatchMode { Sequential, Concurrent };

struct BroadcastStats {
    std::vector<Receipt> receipts;
    std::vector<std::pair<ParticipantId, std::string>> failed;
    double wall_clock = 0;
    std::uint64_t ledger_peak = 0;
};

struct SendOptions {
    double timeout_s = 0;  // 0 = no timeout
};

class Endpoint;

namespace detail {
struct Conn;
struct LinkShared;
}  // namespace detail

// One logical link to a peer: `connections_per_peer` TCP connections over
// loopback, each side shaping its own outbound bytes. Send is safe from
// multiple threads (whole messages are serialized per link, preserving
// per-sender FIFO order).
class PeerLink {
public:
    ~PeerLink();
    ParticipantId peer_id() const;

    Receipt send(const BackendSpec& spec, const FLMessage& m, const SendOptions& opts = {});

private:
    friend class Endpoint;
    explicit PeerLink(std::shared_ptr<detail::LinkShared> shared);
    std::shared_ptr<detail::LinkShared> shared_;
};

// Wire framing (bit-exact): "SCM1" | u32 header length | header bytes |
// u64 body length | body. The header is the envelope encoding with inline
// blobs elided (the body carries them); with K connections the body is cut
// into K contiguous slices reassembled by offset.
inline constexpr char kFrameMagic[4] = {'S', 'C', 'M', '1'};
inline constexpr std::size_t kFramePrefixBytes = 8;  // magic + u32 header len
inline constexpr std::size_t kBodyLenBytes = 8;

// A participant endpoint: binds 127.0.0.1:<ephemeral>, serves incoming
// links, reconstructs messages (including store fetches for StoreKey
// envelopes) and exposes them via recv(). Lifecycle: construct (bind+serve)
// -> connect()/await_link() -> send/recv -> drain() -> close().
class Endpoint {
public:
    struct Options {
        ParticipantId id = 0;
        std::shared_ptr<ObjectStore> store;  // required for hybrid sends/fetches
        RetryPolicy fetch_retry;
        std::shared_ptr<KeyCache> key_cache;  // defaults to a fresh 64-entry cache
        std::string bucket = kDefaultBucket;
    };

    explicit Endpoint(Options opts);
    ~Endpoint();

    Endpoint(const Endpoint&) = delete;
    Endpoint& operator=(const Endpoint&) = delete;

    const std::string& address() const { return address_; }
    ParticipantId id() const { return opts_.id; }
    ByteLedger& ledger() { return ledger_; }
    ObjectStore* store() { return opts_.store.get(); }
    const std::shared_ptr<KeyCache>& key_cache() const { return opts_.key_cache; }
    const std::string& bucket() const { return opts_.bucket; }
    const RetryPolicy& fetch_retry() const { return opts_.fetch_retry; }

    // Outbound shaping for links accepted from `peer` (set before the peer
    // connects; accepted links default to unshaped).
    void set_outbound_shaper(ParticipantId peer, std::shared_ptr<LinkShaper> shaper);

    // Dials a peer endpoint with n_conns connections; outbound bytes are
    // shaped through `out_shaper` (nullptr = unshaped). Throws
    // PeerUnreachableError.
    std::shared_ptr<PeerLink> connect(const std::string& address, ParticipantId expected_peer,
                                      int n_conns, std::shared_ptr<LinkShaper> out_shaper);

    // Waits for an inbound link from `peer` (established by its connect()).
    std::shared_ptr<PeerLink> await_link(ParticipantId peer, double timeout_s = 30.0);

    struct Delivery {
        FLMessage msg;
        ParticipantId from = 0;
        double wire_time = 0;    // first frame byte -> blob complete (incl. store fetch)
        double decode_time = 0;  // deserialization / join
        std::uint64_t fetch_retries = 0;
        std::uint64_t bytes_on_wire = 0;
    };

    // Blocks until the next fully reconstructed message; one consumer at a
    // time. Fetch/decode failures for a message surface here as exceptions.
    Delivery recv_delivery();
    FLMessage recv();

    // nullopt on timeout.
    std::optional<Delivery> recv_delivery_for(double timeout_s);

    Receipt send(const BackendSpec& spec, ParticipantId peer, const FLMessage& m,
                 const SendOptions& opts = {});

    // Sends m to every peer. Concurrent mode dispatches all sends before
    // awaiting any completion; one peer failing does not abort the others.
    BroadcastStats broadcast(const BackendSpec& spec,
                             const std::vector<std::shared_ptr<PeerLink>>& peers,
                             const FLMessage& m, DispatchMode mode, const SendOptions& opts = {});

    // Waits until all delivered messages have been consumed.
    void drain();
    void close();

private:
    friend struct detail::LinkShared;
    friend class PeerLink;

    void accept_loop();
    void register_link(std::shared_ptr<detail::LinkShared> link);
    void deliver(std::variant<Delivery, std::exception_ptr> item);
    std::shared_ptr<PeerLink> find_link(ParticipantId peer);

    Options opts_;
    std::string address_;
    int listen_fd_ = -1;
    int wake_pipe_[2] = {-1, -1};
    ByteLedger ledger_;
    std::mutex ser_gil_;  // generic serialization is GIL-bound, as in the modeled stacks

    std::mutex links_mu_;
    std::condition_variable links_cv_;
    std::map<ParticipantId, std::shared_ptr<PeerLink>> links_;
    std::vector<std::shared_ptr<detail::LinkShared>> pending_;

    std::mutex shapers_mu_;
    std::map<ParticipantId, std::shared_ptr<LinkShaper>> outbound_shapers_;

    std::mutex deliveries_mu_;
    std::condition_variable deliveries_cv_;
    std::deque<std::variant<Delivery, std::exception_ptr>> deliveries_;
    std::size_t undelivered_ = 0;

    std::thread accept_thread_;
    std::atomic<bool> closing_{false};
};

}  // namespace silocomm
