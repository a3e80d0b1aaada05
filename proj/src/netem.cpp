// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/netem.hpp"

#include <algorithm>
#include <thread>

#include "silocomm/error.hpp"

namespace silocomm {

void LinkProfile::validate() const {
    if (latency_ms < 0) throw ConfigError("profile '" + name + "': negative latency");
    if (single_mbps <= 0 || aggregate_mbps <= 0)
        throw ConfigError("profile '" + name + "': bandwidth must be positive");
    if (aggregate_mbps < single_mbps)
        throw ConfigError("profile '" + name + "': aggregate bandwidth (" +
                          std::to_string(aggregate_mbps) + ") below single-connection (" +
                          std::to_string(single_mbps) + ")");
    if (scale <= 0) throw ConfigError("profile '" + name + "': scale must be positive");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<LinkProfile> builtin_profiles() {
    return {
        {"identity", 0, kInf, kInf},
        {"lan", 0.017, 1000, 5000},
        {"nc-nc", 0.44, 592, 2946},
        {"nc-oregon", 11, 133, 573},
        {"nc-virginia", 32.3, 39.4, 557},
        {"nc-hongkong", 83.3, 16.3, 513},
        {"nc-stockholm", 90.9, 11.4, 495},
        {"nc-saopaulo", 90.9, 8.27, 491},
        {"nc-bahrain", 111, 6.90, 444},
    };
}

}  // namespace

ProfileCatalog::ProfileCatalog() {
    for (auto& p : builtin_profiles()) {
        order_.push_back(p.name);
        profiles_.emplace(p.name, std::move(p));
    }
}

const std::vector<std::string>& ProfileCatalog::region_names() {
    static const std::vector<std::string> names = {
        "nc-nc",        "nc-oregon",    "nc-virginia", "nc-hongkong",
        "nc-stockholm", "nc-saopaulo",  "nc-bahrain"};
    return names;
}

LinkProfile ProfileCatalog::lookup(const std::string& name) const {
    auto it = profiles_.find(name);
    if (it == profiles_.end()) {
        std::string valid;
        for (const auto& n : order_) {
            if (!valid.empty()) valid += ", ";
            valid += n;
        }
        throw UnknownProfileError("unknown profile '" + name + "'; valid profiles: " + valid);
    }
    return it->second;
}

bool ProfileCatalog::contains(const std::string& name) const {
    return profiles_.count(name) > 0;
}

void ProfileCatalog::upsert(LinkProfile p) {
    p.validate();
    if (!profiles_.count(p.name)) order_.push_back(p.name);
    profiles_[p.name] = std::move(p);
}

std::vector<LinkProfile> ProfileCatalog::list() const {
    std::vector<LinkProfile> out;
    out.reserve(order_.size());
    for (const auto& n : order_) out.push_back(profiles_.at(n));
    return out;
}

std::vector<std::string> ProfileCatalog::names() const { return order_; }

double model_transfer_time(std::uint64_t size_bytes, const LinkProfile& profile, int n_conns) {
    if (n_conns < 1) throw ConfigError("model_transfer_time: n_conns must be >= 1");
    double rate = std::min(double(n_conns) * profile.single_bytes_per_s(),
                           profile.aggregate_bytes_per_s());
    double transfer = std::isinf(rate) ? 0.0 : double(size_bytes) / rate;
    return profile.latency_s() + transfer;
}

RatePacer::RatePacer(double bytes_per_s) : unlimited_(std::isinf(bytes_per_s)) {
    if (!unlimited_) {
        if (bytes_per_s <= 0) throw ConfigError("RatePacer: rate must be positive");
        ns_per_byte_ = 1e9 / bytes_per_s;
    }
}

TimePoint RatePacer::reserve_from(TimePoint floor, std::size_t n) {
    if (unlimited_) return floor;
    std::lock_guard lock(mu_);
    if (vt_ < floor) vt_ = floor;
    vt_ += std::chrono::nanoseconds(std::int64_t(double(n) * ns_per_byte_));
    return vt_;
}

LinkShaper::LinkShaper(LinkProfile profile)
    : profile_(std::move(profile)),
      latency_(std::chrono::nanoseconds(std::int64_t(profile_.latency_s() * 1e9))),
      aggregate_(profile_.aggregate_bytes_per_s()) {
    if (!profile_.unlimited()) profile_.validate();
}

LinkShaper::Channel::Channel(std::shared_ptr<LinkShaper> owner, double single_bytes_per_s)
    : owner_(std::move(owner)), single_(single_bytes_per_s) {}

TimePoint LinkShaper::Channel::grant(std::size_t n) {
    TimePoint now = Clock::now();
    TimePoint a = single_.reserve_from(now, n);
    TimePoint b = owner_->aggregate_.reserve_from(now, n);
    return std::max(a, b);
}

TimePoint LinkShaper::Channel::delivery_time(TimePoint granted) const {
    return granted + owner_->latency_;
}

std::shared_ptr<LinkShaper::Channel> LinkShaper::open_channel() {
    return std::make_shared<Channel>(shared_from_this(), profile_.single_bytes_per_s());
}

std::size_t LinkShaper::chunk_quantum() const {
    double rate = profile_.single_bytes_per_s();
    if (std::isinf(rate)) return 64 * 1024;
    double per_grant = rate / 100.0;  // >= 100 grants/s
    return std::size_t(std::clamp(per_grant, 4096.0, 65536.0));
}

void precise_sleep_until(TimePoint tp) {
    // sleep_until alone overshoots by up to ~1 ms on this class of kernel;
    // finish the last stretch with a yield spin.
    constexpr auto kSpinWindow = std::chrono::microseconds(1000);
    TimePoint coarse = tp - kSpinWindow;
    if (Clock::now() < coarse) std::this_thread::sleep_until(coarse);
    while (Clock::now() < tp) std::this_thread::yield();
}

}  // namespace silocomm
