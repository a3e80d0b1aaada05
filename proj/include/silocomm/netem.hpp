// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace silocomm {

using Clock = std::chrono::steady_clock;
using TimePoint = Clock::time_point;

// One network path: one-way latency plus per-connection and aggregate
// bandwidth caps. Bandwidths are decimal MB/s (1 MB = 1e6 bytes) as in the
// region measurements; `scale` multiplies both bandwidth fields for
// desk-size runs (payload bytes are scaled by the same factor elsewhere, so
// transfer times are preserved).
struct LinkProfile {
    std::string name;
    double latency_ms = 0;
    double single_mbps = std::numeric_limits<double>::infinity();
    double aggregate_mbps = std::numeric_limits<double>::infinity();
    double scale = 1.0;

    double latency_s() const { return latency_ms / 1000.0; }
    double single_bytes_per_s() const { return single_mbps * 1e6 * scale; }
    double aggregate_bytes_per_s() const { return aggregate_mbps * 1e6 * scale; }
    bool unlimited() const {
        return latency_ms <= 0 && std::isinf(single_mbps) && std::isinf(aggregate_mbps);
    }

    LinkProfile with_scale(double s) const {
        LinkProfile p = *this;
        p.scale = s;
        return p;
    }

    // Profile for the path to object storage from a region with this
    // profile: same latency, bandwidth at the multi-connection figure
    // (receivers pull with independent connections).
    LinkProfile store_profile() const {
        LinkProfile p = *this;
        p.name = name + "-store";
        p.single_mbps = aggregate_mbps;
        return p;
    }

    // Throws if aggregate < single or values are non-positive.
    void validate() const;
};

// Built-in profiles (the seven measured region pairs plus `identity` and
// `lan`) with optional user overrides.
class ProfileCatalog {
public:
    ProfileCatalog();

    // Throws UnknownProfileError listing valid names.
    LinkProfile lookup(const std::string& name) const;
    bool contains(const std::string& name) const;
    void upsert(LinkProfile p);
    std::vector<LinkProfile> list() const;
    std::vector<std::string> names() const;

    // Names of the seven region rows, nearest first.
    static const std::vector<std::string>& region_names();

private:
    std::map<std::string, LinkProfile> profiles_;
    std::vector<std::string> order_;
};

// Closed-form transfer time: latency + size / min(n_conns * single, aggregate).
// This is the independent oracle shaped transfers are checked against.
double model_transfer_time(std::uint64_t size_bytes, const LinkProfile& profile, int n_conns);

// Paces byte grants against a rate cap using virtual finish times: the
// cumulative granted bytes never exceed rate * elapsed, with zero burst
// allowance, so a transfer of S bytes completes in exactly S/rate.
// Thread-safe; shared instances implement shared (aggregate) caps.
class RatePacer {
public:
    explicit RatePacer(double bytes_per_s);

    bool unlimited() const { return unlimited_; }

    // Reserves n bytes starting no earlier than `floor`; returns the time at
    // which the grant completes.
    TimePoint reserve_from(TimePoint floor, std::size_t n);
    TimePoint reserve(std::size_t n) { return reserve_from(Clock::now(), n); }

private:
    bool unlimited_;
    double ns_per_byte_ = 0;
    std::mutex mu_;
    TimePoint vt_{};
};

// All channels opened from one LinkShaper share its aggregate pacer; each
// channel additionally has its own single-connection pacer. Delivery of a
// granted chunk is due `latency` after the grant completes.
class LinkShaper : public std::enable_shared_from_this<LinkShaper> {
public:
    explicit LinkShaper(LinkProfile profile);

    const LinkProfile& profile() const { return profile_; }
    bool unlimited() const { return profile_.unlimited(); }

    class Channel {
    public:
        Channel(std::shared_ptr<LinkShaper> owner, double single_bytes_per_s);
        // Grant completion time for n bytes on this channel.
        TimePoint grant(std::size_t n);
        // When a chunk granted at `granted` may be delivered to the consumer.
        TimePoint delivery_time(TimePoint granted) const;

    private:
        std::shared_ptr<LinkShaper> owner_;
        RatePacer single_;
    };

    // The shaper must be owned by a shared_ptr.
    std::shared_ptr<Channel> open_channel();

    // Grant quantum: small enough to keep shaping error low at the smallest
    // payloads, capped at 64 KiB, at least 100 grants/second at this rate.
    std::size_t chunk_quantum() const;

    std::chrono::nanoseconds latency() const { return latency_; }

private:
    friend class Channel;
    LinkProfile profile_;
    std::chrono::nanoseconds latency_;
    RatePacer aggregate_;
};

// sleep_until with a short terminal spin; plain sleep overshoots by up to
// ~1 ms, which would dominate millisecond-scale shaped transfers.
void precise_sleep_until(TimePoint tp);

}  // namespace silocomm
