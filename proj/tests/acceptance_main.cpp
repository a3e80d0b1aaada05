// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one self-contained check per criterion, each printing a
// single PASS/FAIL line. Run all with no arguments or one with
// `acceptance --criterion N`. Exit status is the number of failures.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "silocomm/error.hpp"
#include "silocomm/harness.hpp"
#include "silocomm/report.hpp"
#include "silocomm/store.hpp"
#include "silocomm/transport.hpp"

using namespace silocomm;

namespace {

struct CheckFailure {
    std::string detail;
};

void require(bool ok, const std::string& detail) {
    if (!ok) throw CheckFailure{detail};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// A sender endpoint wired to n receivers over one shared link shaper, with
// per-receiver stores on top of a common backing store.
struct Fanout {
    std::shared_ptr<MemoryStore> backing = std::make_shared<MemoryStore>();
    std::unique_ptr<Endpoint> sender;
    std::vector<std::unique_ptr<Endpoint>> receivers;
    std::vector<std::shared_ptr<PeerLink>> links;

    Fanout(int n, int n_conns, std::shared_ptr<LinkShaper> shaper,
           std::function<std::shared_ptr<ObjectStore>(int)> receiver_store = nullptr,
           std::shared_ptr<ObjectStore> sender_store = nullptr) {
        Endpoint::Options so;
        so.id = 1;
        so.store = sender_store ? sender_store : backing;
        sender = std::make_unique<Endpoint>(so);
        for (int i = 0; i < n; i++) {
            Endpoint::Options ro;
            ro.id = ParticipantId(100 + i);
            ro.store = receiver_store ? receiver_store(i) : backing;
            receivers.push_back(std::make_unique<Endpoint>(ro));
            links.push_back(
                sender->connect(receivers.back()->address(), ro.id, n_conns, shaper));
        }
    }
};

// ---------------------------------------------------------------------------
// 1. Round-trip identity across all presets
// ---------------------------------------------------------------------------

void criterion_1() {
    constexpr int kCases = 200;
    std::mt19937_64 rng(20260808);

    std::vector<std::string> presets = BackendSpec::preset_names();
    std::vector<std::unique_ptr<Fanout>> pairs;
    for (const auto& name : presets) {
        int conns = BackendSpec::preset(name).connections_per_peer;
        pairs.push_back(std::make_unique<Fanout>(1, conns, nullptr));
    }

    for (int c = 0; c < kCases; c++) {
        std::size_t pi = std::size_t(c) % presets.size();
        BackendSpec spec = BackendSpec::preset(presets[pi]);
        spec.fallback_threshold = rng() % 30'000'000;  // exercises both hybrid routes
        PayloadTier tier =
            PayloadTier::get(rng() % 2 == 0 ? TierName::Small : TierName::Medium);
        FLMessage m{{std::uint64_t(c), MsgType(rng() % 3), 1, ParticipantId(100)},
                    make_tier_payload(tier, rng())};
        Fanout& f = *pairs[pi];
        Receipt r = f.links[0]->send(spec, m);
        require(r.ok, "send failed in case " + std::to_string(c));
        FLMessage got = f.receivers[0]->recv();
        require(got == m, "case " + std::to_string(c) + " (" + presets[pi] + ", " +
                              tier.label() + "): received message differs");
    }
}

// ---------------------------------------------------------------------------
// 2. Single-upload / multi-download at the Big tier
// ---------------------------------------------------------------------------

void criterion_2() {
    Payload big = make_tier_payload(PayloadTier::get(TierName::Big), 1);
    for (int n : {2, 4, 7}) {
        Fanout f(n, 1, nullptr);
        BackendSpec spec = BackendSpec::preset("hybrid");  // Big is far above 10 MB

        std::mutex mu;
        std::vector<Digest> digests;
        std::vector<std::thread> consumers;
        for (auto& r : f.receivers) {
            consumers.emplace_back([&, ep = r.get()] {
                FLMessage got = ep->recv();
                std::lock_guard lock(mu);
                digests.push_back(got.payload.version);
            });
        }
        FLMessage m{{1, MsgType::GlobalModel, 1, 0}, big};
        BroadcastStats stats = f.sender->broadcast(spec, f.links, m, DispatchMode::Concurrent);
        for (auto& c : consumers) c.join();

        require(stats.failed.empty(), "broadcast reported failures at N=" + std::to_string(n));
        auto snap = f.backing->stats().snapshot();
        require(snap.put_count == 1, "N=" + std::to_string(n) + ": put_count " +
                                         std::to_string(snap.put_count) + " != 1");
        require(snap.get_count == std::uint64_t(n),
                "N=" + std::to_string(n) + ": get_count " + std::to_string(snap.get_count) +
                    " != " + std::to_string(n));
        for (const auto& d : digests)
            require(d == big.version, "a receiver saw a different payload version");
    }
}

// ---------------------------------------------------------------------------
// 3. Broadcast memory scaling
// ---------------------------------------------------------------------------

void criterion_3() {
    ProfileCatalog catalog;
    const double scale = 0.02;
    PayloadTier tier = PayloadTier::get(TierName::Medium).scaled(scale);
    const std::uint64_t P = serialized_size(tier.param_count);
    LinkProfile link = catalog.lookup("nc-saopaulo").with_scale(scale);
    LinkProfile recv_store = link.store_profile();
    LinkProfile send_store = catalog.lookup("nc-nc").with_scale(scale).store_profile();

    for (int n : {1, 2, 4, 7, 16}) {
        auto shaper = std::make_shared<LinkShaper>(link);
        auto backing = std::make_shared<MemoryStore>();
        auto sender_store = std::make_shared<ShapedStore>(backing, send_store);
        Fanout fan(
            n, 1, shaper,
            [&](int) -> std::shared_ptr<ObjectStore> {
                return std::make_shared<ShapedStore>(backing, recv_store);
            },
            sender_store);
        std::vector<std::thread> consumers;
        for (auto& r : fan.receivers)
            consumers.emplace_back([ep = r.get()] {
                ep->recv_delivery();
                ep->recv_delivery();
            });

        FLMessage m{{1, MsgType::GlobalModel, 1, 0}, make_tier_payload(tier, 3)};

        BackendSpec grpc = BackendSpec::preset("grpc_like").scaled(scale);
        BroadcastStats g = fan.sender->broadcast(grpc, fan.links, m, DispatchMode::Concurrent);
        require(g.failed.empty(), "grpc_like broadcast failed at N=" + std::to_string(n));
        require(double(g.ledger_peak) >= 0.9 * double(n) * double(P),
                "grpc_like ledger peak " + std::to_string(g.ledger_peak) + " < 0.9*" +
                    std::to_string(n) + "*" + std::to_string(P));

        BackendSpec hybrid = BackendSpec::preset("hybrid").scaled(scale);
        BroadcastStats h = fan.sender->broadcast(hybrid, fan.links, m, DispatchMode::Concurrent);
        require(h.failed.empty(), "hybrid broadcast failed at N=" + std::to_string(n));
        std::uint64_t bound = P + std::uint64_t(n) * 1024 + (1 << 20);
        require(h.ledger_peak <= bound, "hybrid ledger peak " + std::to_string(h.ledger_peak) +
                                            " > " + std::to_string(bound) + " at N=" +
                                            std::to_string(n));
        for (auto& c : consumers) c.join();
    }
}

// ---------------------------------------------------------------------------
// 4. Shaping fidelity vs the closed-form oracle
// ---------------------------------------------------------------------------

double shaped_channel_transfer(std::shared_ptr<LinkShaper> shaper, std::uint64_t bytes,
                               int n_channels) {
    // Grants are virtual-time reservations, so one thread can drive all
    // channels round-robin with grant times identical to concurrent
    // writers; this keeps OS scheduling noise out of the millisecond-scale
    // measurements.
    std::vector<std::shared_ptr<LinkShaper::Channel>> chans;
    std::vector<std::uint64_t> left(static_cast<std::size_t>(n_channels));
    std::uint64_t base = bytes / std::uint64_t(n_channels);
    std::uint64_t rem = bytes % std::uint64_t(n_channels);
    for (int c = 0; c < n_channels; c++) {
        chans.push_back(shaper->open_channel());
        left[std::size_t(c)] = base + (std::uint64_t(c) < rem ? 1 : 0);
    }
    std::size_t quantum = shaper->chunk_quantum();

    TimePoint t0 = Clock::now();
    TimePoint last = t0;
    bool pending = true;
    while (pending) {
        pending = false;
        for (int c = 0; c < n_channels; c++) {
            auto& remaining = left[std::size_t(c)];
            if (remaining == 0) continue;
            std::size_t n = std::size_t(std::min<std::uint64_t>(quantum, remaining));
            TimePoint due = chans[std::size_t(c)]->delivery_time(chans[std::size_t(c)]->grant(n));
            last = std::max(last, due);
            remaining -= n;
            if (remaining > 0) pending = true;
        }
    }
    precise_sleep_until(last);
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void criterion_4() {
    ProfileCatalog catalog;
    const double scale = 0.02;
    const std::uint64_t sizes_mb[] = {1, 10, 100};
    for (const auto& name : ProfileCatalog::region_names()) {
        LinkProfile p = catalog.lookup(name).with_scale(scale);
        for (std::uint64_t mb : sizes_mb) {
            std::uint64_t bytes = std::uint64_t(double(mb) * 1e6 * scale);
            for (int conns : {1, 8}) {
                double oracle = model_transfer_time(bytes, p, conns);
                // Median of 3 damps scheduler outliers on short transfers.
                std::vector<double> runs;
                int reps = oracle < 1.0 ? 3 : 1;
                for (int r = 0; r < reps; r++) {
                    auto shaper = std::make_shared<LinkShaper>(p);
                    runs.push_back(shaped_channel_transfer(shaper, bytes, conns));
                }
                std::sort(runs.begin(), runs.end());
                double measured = runs[runs.size() / 2];
                double err = std::abs(measured - oracle) / oracle;
                require(err <= 0.15, name + " " + std::to_string(mb) + "MB x" +
                                         std::to_string(conns) + ": measured " + fmt(measured) +
                                         " vs oracle " + fmt(oracle) + " (err " +
                                         fmt(err * 100) + "%)");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 5. Concurrency speedup
// ---------------------------------------------------------------------------

void criterion_5() {
    ProfileCatalog catalog;
    SweepOptions opts;
    opts.backend = BackendSpec::preset("grpc_like");
    opts.tier = PayloadTier::get(TierName::Medium);
    opts.profile = catalog.lookup("nc-bahrain");
    opts.n_messages = 10;
    opts.scale = 0.02;
    SpeedupReport shaped = run_concurrency_sweep(opts);
    require(shaped.speedup >= 5.0 && shaped.speedup <= 12.0,
            "nc-bahrain speedup " + fmt(shaped.speedup) + " outside [5, 12] (oracle " +
                fmt(shaped.oracle_speedup) + ")");

    SweepOptions ident = opts;
    ident.profile = catalog.lookup("identity");
    SpeedupReport flat = run_concurrency_sweep(ident);
    require(flat.speedup <= 1.5,
            "identity speedup " + fmt(flat.speedup) + " exceeds 1.5");
    std::printf("  [criterion 5] nc-bahrain speedup %.2fx (oracle %.2fx), identity %.2fx\n",
                shaped.speedup, shaped.oracle_speedup, flat.speedup);
}

// ---------------------------------------------------------------------------
// 6. Hybrid-vs-direct inversion (end-to-end)
// ---------------------------------------------------------------------------

void criterion_6() {
    ProfileCatalog catalog;
    auto run = [&](const std::string& backend, TierName tier, double threshold_mb) {
        RoundConfig cfg;
        cfg.n_clients = 7;
        cfg.n_rounds = 2;
        cfg.tier = PayloadTier::get(tier);
        cfg.backend = BackendSpec::preset(backend);
        // The benchmarked hybrid always offloads to the store; the inline
        // fallback is covered by criterion 7.
        cfg.backend.fallback_threshold = std::uint64_t(threshold_mb * 1e6);
        cfg.scale = 0.02;
        cfg.seed = 606;
        cfg.train = {0, 0};
        return run_e2e(cfg, catalog);
    };

    E2EReport grpc_big = run("grpc_like", TierName::Big, 10.0);
    E2EReport hybrid_big = run("hybrid", TierName::Big, 0.0);
    require(grpc_big.failed_clients.empty() && hybrid_big.failed_clients.empty(),
            "big-tier e2e reported failed clients");

    double measured_ratio = grpc_big.total_wall_clock_s / hybrid_big.total_wall_clock_s;
    double oracle_ratio = grpc_big.oracle_round_s / hybrid_big.oracle_round_s;
    require(hybrid_big.total_wall_clock_s <= 0.5 * grpc_big.total_wall_clock_s,
            "big tier: hybrid " + fmt(hybrid_big.total_wall_clock_s) + "s not <= 0.5 * grpc " +
                fmt(grpc_big.total_wall_clock_s) + "s");
    require(std::abs(measured_ratio / oracle_ratio - 1.0) <= 0.25,
            "big tier: measured ratio " + fmt(measured_ratio) + " vs oracle " +
                fmt(oracle_ratio) + " differs by more than 25%");

    E2EReport grpc_small = run("grpc_like", TierName::Small, 10.0);
    E2EReport hybrid_small = run("hybrid", TierName::Small, 0.0);
    require(grpc_small.total_wall_clock_s <= hybrid_small.total_wall_clock_s,
            "small tier: grpc " + fmt(grpc_small.total_wall_clock_s) + "s not <= hybrid " +
                fmt(hybrid_small.total_wall_clock_s) + "s");

    std::printf(
        "  [criterion 6] big: grpc %.2fs hybrid %.2fs (ratio %.1fx, oracle %.1fx); "
        "small: grpc %.3fs hybrid %.3fs\n",
        grpc_big.total_wall_clock_s, hybrid_big.total_wall_clock_s, measured_ratio, oracle_ratio,
        grpc_small.total_wall_clock_s, hybrid_small.total_wall_clock_s);
}

// ---------------------------------------------------------------------------
// 7. Fallback threshold routing
// ---------------------------------------------------------------------------

void criterion_7() {
    struct Case {
        std::uint64_t params;
        bool expect_store;
        const char* label;
    };
    // Payload bytes 2.37 MB (Small tier), 9.9 MB, 10.1 MB, 253 MB (Big tier).
    const Case cases[] = {
        {PayloadTier::get(TierName::Small).param_count, false, "2.37MB"},
        {2'474'996, false, "9.9MB"},
        {2'524'996, true, "10.1MB"},
        {PayloadTier::get(TierName::Big).param_count, true, "253MB"},
    };
    BackendSpec spec = BackendSpec::preset("hybrid");  // default 10 MB threshold
    for (const auto& c : cases) {
        Fanout f(1, 1, nullptr);
        std::thread consumer([&] { f.receivers[0]->recv_delivery(); });
        FLMessage m{{1, MsgType::GlobalModel, 1, 100}, make_random_payload(c.params, 7)};
        Receipt r = f.links[0]->send(spec, m);
        consumer.join();
        require(r.store_put == c.expect_store,
                std::string(c.label) + ": store_put=" + (r.store_put ? "true" : "false") +
                    ", expected " + (c.expect_store ? "true" : "false"));
    }
}

// ---------------------------------------------------------------------------
// 8. Fault tolerance: re-fetch without sender re-transmit
// ---------------------------------------------------------------------------

void criterion_8() {
    const int n = 7;
    auto backing = std::make_shared<MemoryStore>();
    auto injector = [](const std::string& op, const ObjectKey&, int attempt) {
        if (op == "get" && attempt == 1)
            throw StoreUnreachableError("injected mid-fetch failure");
    };
    auto receiver_store = [&](int i) -> std::shared_ptr<ObjectStore> {
        if (i == 2 || i == 5) return std::make_shared<FaultInjectingStore>(backing, injector);
        return backing;
    };
    Fanout f(n, 1, nullptr, receiver_store, backing);

    std::mutex mu;
    std::vector<std::pair<int, Endpoint::Delivery>> deliveries;
    std::vector<std::thread> consumers;
    for (int i = 0; i < n; i++) {
        consumers.emplace_back([&, i, ep = f.receivers[std::size_t(i)].get()] {
            Endpoint::Delivery d = ep->recv_delivery();
            std::lock_guard lock(mu);
            deliveries.emplace_back(i, std::move(d));
        });
    }

    BackendSpec spec = BackendSpec::preset("hybrid");
    spec.fallback_threshold = 1000;
    PayloadTier tier = PayloadTier::get(TierName::Medium).scaled(0.1);  // ~2 MB
    FLMessage m{{1, MsgType::GlobalModel, 1, 0}, make_tier_payload(tier, 8)};
    BroadcastStats stats = f.sender->broadcast(spec, f.links, m, DispatchMode::Concurrent);
    for (auto& c : consumers) c.join();

    require(stats.failed.empty(), "broadcast reported failures");
    require(backing->stats().snapshot().put_count == 1,
            "put_count " + std::to_string(backing->stats().snapshot().put_count) +
                " != 1 (sender re-transmitted)");
    require(deliveries.size() == n, "not all receivers delivered");

    // Surface receiver-side retry counts on the per-peer receipts.
    for (auto& [idx, d] : deliveries) {
        require(d.msg.payload.version == m.payload.version,
                "receiver " + std::to_string(idx) + " saw different payload bytes");
        stats.receipts[std::size_t(idx)].retry_count = d.fetch_retries;
        bool injected = idx == 2 || idx == 5;
        if (injected)
            require(d.fetch_retries >= 1, "injected receiver " + std::to_string(idx) +
                                              " shows no retries");
        else
            require(d.fetch_retries == 0, "healthy receiver " + std::to_string(idx) +
                                              " reports retries");
    }
}

// ---------------------------------------------------------------------------
// 9. Timing-ledger closure and backend-agnostic aggregation
// ---------------------------------------------------------------------------

void criterion_9() {
    ProfileCatalog catalog;
    std::string reference;
    std::string simulated;
    for (const auto& name : BackendSpec::preset_names()) {
        RoundConfig cfg;
        cfg.n_clients = 3;
        cfg.n_rounds = 2;
        cfg.tier = PayloadTier::get(TierName::Small);
        cfg.backend = BackendSpec::preset(name);
        cfg.client_profiles = {"nc-nc", "nc-oregon", "nc-virginia"};
        cfg.train = {0.05, 0.2};
        cfg.scale = 0.02;
        cfg.seed = 909;
        E2EReport r = run_e2e(cfg, catalog);
        require(r.failed_clients.empty(), name + ": e2e reported failed clients");

        if (simulated.empty()) simulated = simulate_final_version_hex(cfg);
        if (reference.empty()) reference = r.final_version_hex;
        require(r.final_version_hex == reference,
                name + ": final payload bits differ across backends");
        require(r.final_version_hex == simulated,
                name + ": final payload differs from the transport-free simulation");

        auto check_ledger = [&](const TimingLedger& l, const std::string& who) {
            require(l.get(TimingState::Migration) == 0.0, who + ": migration state not zero");
            double err = std::abs(l.state_sum() - l.total_wall_clock) / l.total_wall_clock;
            require(err <= 0.05, name + " " + who + ": state sum " + fmt(l.state_sum()) +
                                     " vs wall " + fmt(l.total_wall_clock) + " (err " +
                                     fmt(err * 100) + "%)");
        };
        check_ledger(r.server, "server");
        for (std::size_t i = 0; i < r.clients.size(); i++)
            check_ledger(r.clients[i], "client " + std::to_string(i + 1));
    }
}

// ---------------------------------------------------------------------------
// 10. FedAvg against an independent element-wise mean
// ---------------------------------------------------------------------------

void criterion_10() {
    std::mt19937_64 rng(1010);
    for (int c = 0; c < 50; c++) {
        std::size_t n_params = 1 + rng() % 20'000;
        std::size_t n_updates = 1 + rng() % 9;
        std::vector<Payload> updates;
        for (std::size_t k = 0; k < n_updates; k++)
            updates.push_back(make_random_payload(n_params, rng()));

        Payload mean = fedavg(updates);

        // Independent oracle: per-element loop, f64 accumulate, one rounding.
        for (std::size_t i = 0; i < n_params; i++) {
            double acc = 0;
            for (const auto& u : updates) acc += double(u.params[i]);
            float expected = float(acc / double(n_updates));
            if (mean.params[i] != expected)
                require(false, "case " + std::to_string(c) + ": element " + std::to_string(i) +
                                   " differs");
        }
    }
}

struct Criterion {
    int id;
    const char* summary;
    void (*fn)();
};

const Criterion kCriteria[] = {
    {1, "round-trip identity across all backend presets (200 random cases)", criterion_1},
    {2, "single-upload/multi-download for hybrid Big-tier broadcast", criterion_2},
    {3, "broadcast memory scaling: linear copy-per-send vs flat hybrid", criterion_3},
    {4, "shaping fidelity vs closed-form oracle (all regions, 1/8 connections)", criterion_4},
    {5, "concurrent-dispatch speedup on nc-bahrain and identity", criterion_5},
    {6, "hybrid-vs-direct end-to-end inversion at Big and Small tiers", criterion_6},
    {7, "hybrid fallback threshold routing at 10 MB", criterion_7},
    {8, "receiver re-fetch under injected faults without sender re-transmit", criterion_8},
    {9, "timing-ledger closure and backend-agnostic aggregation", criterion_9},
    {10, "fedavg equals the independent element-wise mean exactly", criterion_10},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; i++) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }

    int failures = 0;
    for (const auto& c : kCriteria) {
        if (only != 0 && c.id != only) continue;
        try {
            c.fn();
            std::printf("PASS criterion %d: %s\n", c.id, c.summary);
        } catch (const CheckFailure& f) {
            failures++;
            std::printf("FAIL criterion %d: %s — %s\n", c.id, c.summary, f.detail.c_str());
        } catch (const std::exception& e) {
            failures++;
            std::printf("FAIL criterion %d: %s — unexpected error: %s\n", c.id, c.summary,
                        e.what());
        }
        std::fflush(stdout);
    }
    return failures;
}
