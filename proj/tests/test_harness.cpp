// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "silocomm/error.hpp"
#include "silocomm/harness.hpp"

using namespace silocomm;

namespace {

// Independent mean: per-element loop over updates, f64 accumulate, one f32
// rounding. Deliberately structured differently from the implementation.
std::vector<float> naive_mean(const std::vector<Payload>& updates) {
    std::vector<float> out(updates.at(0).params.size());
    for (std::size_t i = 0; i < out.size(); i++) {
        double acc = 0;
        for (const auto& u : updates) acc += double(u.params[i]);
        out[i] = float(acc / double(updates.size()));
    }
    return out;
}

}  // namespace

TEST_CASE("fedavg worked examples") {
    Payload a = make_payload({1.0f, 3.0f});
    Payload b = make_payload({3.0f, 5.0f});
    Payload mean = fedavg({a, b});
    CHECK(mean.params == std::vector<float>{2.0f, 4.0f});

    Payload single = fedavg({a});
    CHECK(single.params == a.params);

    Payload c = make_payload({1.0f});
    CHECK_THROWS_AS(fedavg({a, c}), Error);
    CHECK_THROWS_AS(fedavg({}), ConfigError);
}

TEST_CASE("fedavg matches the independent element-wise mean exactly") {
    for (int trial = 0; trial < 10; trial++) {
        std::vector<Payload> updates;
        for (int k = 0; k < 7; k++)
            updates.push_back(make_random_payload(5'000, std::uint64_t(trial * 100 + k)));
        Payload mean = fedavg(updates);
        std::vector<float> expected = naive_mean(updates);
        REQUIRE(mean.params.size() == expected.size());
        for (std::size_t i = 0; i < expected.size(); i++) {
            REQUIRE(mean.params[i] == expected[i]);  // bit-exact
        }
    }
}

TEST_CASE("synthetic_train is deterministic and perturbs the payload") {
    Payload p = make_random_payload(10'000, 1);
    TrainDelayModel none;
    TrainResult a = synthetic_train(p, none, 77);
    TrainResult b = synthetic_train(p, none, 77);
    CHECK(a.payload.version == b.payload.version);
    CHECK(a.payload.version != p.version);
    TrainResult c = synthetic_train(p, none, 78);
    CHECK(c.payload.version != a.payload.version);
    CHECK(a.duration_s < 0.05);
}

TEST_CASE("synthetic_train delay stays within the jitter bounds") {
    Payload p = make_random_payload(10, 2);
    TrainDelayModel model{0.2, 0.25};
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        TrainResult r = synthetic_train(p, model, seed);
        CHECK(r.duration_s >= 0.15 - 0.01);
        CHECK(r.duration_s <= 0.25 + 0.05);
    }
}

TEST_CASE("p2p identity: raw-buffer latency is sub-millisecond at small size") {
    P2POptions opts;
    opts.backend = BackendSpec::preset("mpi_membuff_like");
    opts.tier = PayloadTier::get(TierName::Small).scaled(0.02);  // 47 KB
    ProfileCatalog catalog;
    opts.profile = catalog.lookup("identity");
    opts.reps = 5;
    P2PReport r = run_p2p(opts);
    CHECK(r.median_s < 0.002);
    CHECK(r.latencies_s.size() == 5);
}

TEST_CASE("p2p shaped latency matches the oracle within 15 percent") {
    P2POptions opts;
    opts.backend = BackendSpec::preset("grpc_like");
    opts.tier = PayloadTier::get(TierName::Small);  // 2.37 MB
    opts.profile = LinkProfile{"p2p-test", 50, 5.0, 50.0};
    opts.reps = 3;
    P2PReport r = run_p2p(opts);
    double expected =
        r.oracle_s + double(r.payload_bytes) / opts.backend.generic_ser_bytes_per_s;
    CHECK(r.oracle_s == doctest::Approx(0.05 + double(r.payload_bytes) / 5e6));
    CHECK(r.median_s == doctest::Approx(expected).epsilon(0.15));
}

TEST_CASE("torch-style multi-connection beats single-connection by the link ratio") {
    // Custom profile keeps this quick: aggregate/single = 8 with 8 conns.
    LinkProfile p{"ratio-test", 20, 1.0, 8.0};
    P2POptions torch;
    torch.backend = BackendSpec::preset("torch_rpc_like");
    torch.tier = PayloadTier::get(TierName::Small).scaled(0.25);  // ~0.59 MB
    torch.profile = p;
    torch.reps = 3;
    P2PReport rt = run_p2p(torch);

    P2POptions grpc = torch;
    grpc.backend = BackendSpec::preset("grpc_like");
    P2PReport rg = run_p2p(grpc);

    // Oracle ratio: (L + S/bw + S/ser) / (L + S/(8 bw)).
    double S = double(rg.payload_bytes);
    double expected = (0.020 + S / 1e6 + S / 300e6) / (0.020 + S / 8e6);
    CHECK(rg.median_s / rt.median_s == doctest::Approx(expected).epsilon(0.20));
}

TEST_CASE("sweep: shaped link rewards concurrency, identity does not") {
    SweepOptions opts;
    opts.backend = BackendSpec::preset("grpc_like");
    opts.tier = PayloadTier::get(TierName::Small);
    LinkProfile p{"sweep-test", 30, 2.0, 40.0};
    opts.profile = p;
    opts.n_messages = 4;
    SpeedupReport shaped = run_concurrency_sweep(opts);
    CHECK(shaped.oracle_speedup == doctest::Approx(4.0));
    CHECK(shaped.speedup > 2.5);
    CHECK(shaped.speedup < 5.5);
    // Copy-per-send: the concurrent ledger peak covers all four copies.
    CHECK(shaped.ledger_peak_concurrent >= std::uint64_t(0.9 * 4 * double(shaped.payload_bytes)));

    ProfileCatalog catalog;
    SweepOptions ident = opts;
    ident.profile = catalog.lookup("identity");
    SpeedupReport flat = run_concurrency_sweep(ident);
    CHECK(flat.speedup <= 1.5);
}

TEST_CASE("e2e identity run: ledgers close and rounds aggregate deterministically") {
    ProfileCatalog catalog;
    RoundConfig cfg;
    cfg.n_clients = 3;
    cfg.n_rounds = 2;
    cfg.tier = PayloadTier::get(TierName::Small).scaled(0.02);
    cfg.backend = BackendSpec::preset("mpi_membuff_like");
    cfg.client_profiles = {"identity"};
    cfg.train = {0.05, 0.2};
    cfg.seed = 9;
    E2EReport r = run_e2e(cfg, catalog);

    CHECK(r.failed_clients.empty());
    CHECK(r.round_wall_s.size() == 2);
    CHECK(r.final_version_hex == simulate_final_version_hex(cfg));

    CHECK(r.server.get(TimingState::Migration) == 0);
    CHECK(r.server.state_sum() == doctest::Approx(r.server.total_wall_clock).epsilon(0.05));
    for (const auto& c : r.clients) {
        CHECK(c.get(TimingState::Migration) == 0);
        CHECK(c.state_sum() == doctest::Approx(c.total_wall_clock).epsilon(0.05));
        CHECK(c.get(TimingState::Training) > 0.05);
    }
}

TEST_CASE("e2e final payload is identical across backends for fixed seeds") {
    ProfileCatalog catalog;
    std::string reference;
    for (const auto& name : BackendSpec::preset_names()) {
        CAPTURE(name);
        RoundConfig cfg;
        cfg.n_clients = 2;
        cfg.n_rounds = 2;
        cfg.tier = PayloadTier::get(TierName::Small).scaled(0.01);
        cfg.backend = BackendSpec::preset(name);
        cfg.backend.fallback_threshold = 10'000;  // force the store route for hybrid
        cfg.client_profiles = {"identity"};
        cfg.seed = 4242;
        E2EReport r = run_e2e(cfg, catalog);
        if (reference.empty()) reference = r.final_version_hex;
        CHECK(r.final_version_hex == reference);
    }
}

TEST_CASE("e2e waiting: fast-link clients wait on the slow ones") {
    ProfileCatalog catalog;
    RoundConfig cfg;
    cfg.n_clients = 2;
    cfg.n_rounds = 2;
    cfg.tier = PayloadTier::get(TierName::Small);
    cfg.backend = BackendSpec::preset("grpc_like");
    cfg.client_profiles = {"nc-nc", "nc-bahrain"};
    cfg.scale = 0.05;
    E2EReport r = run_e2e(cfg, catalog);
    REQUIRE(r.clients.size() == 2);
    // Client 0 (fast link) receives early but its next round only starts
    // after the slow client's update lands, so it accumulates waiting time.
    CHECK(r.clients[0].get(TimingState::Waiting) >
          r.clients[1].get(TimingState::Waiting));
}

TEST_CASE("oracle crossover brackets the default threshold on the tier grid") {
    ProfileCatalog catalog;
    CrossoverReport r = oracle_crossover(catalog);
    REQUIRE(r.points.size() == 4);
    CHECK(r.points[0].direct_round_s < r.points[0].store_round_s);  // small: direct wins
    CHECK(r.points[2].store_round_s < r.points[2].direct_round_s);  // big: store wins
    CHECK(r.points[3].store_round_s < r.points[3].direct_round_s);
    CHECK(r.brackets_default_threshold);
    CHECK(r.last_direct_win_bytes < kDefaultFallbackThreshold);
    CHECK(kDefaultFallbackThreshold < r.first_store_win_bytes);
}

TEST_CASE("straggler timeout with quorum lets the round proceed") {
    ProfileCatalog catalog;
    RoundConfig cfg;
    cfg.n_clients = 3;
    cfg.n_rounds = 1;
    cfg.tier = PayloadTier::get(TierName::Small).scaled(0.01);
    cfg.backend = BackendSpec::preset("mpi_membuff_like");
    cfg.client_profiles = {"identity", "identity", "straggler"};
    LinkProfile slow{"straggler", 200, 0.01, 0.01};  // ~12 s per leg
    catalog.upsert(slow);
    cfg.straggler_timeout_s = 1.0;
    cfg.quorum = 2;
    E2EReport r = run_e2e(cfg, catalog);
    CHECK(r.round_wall_s.size() == 1);
    REQUIRE(r.failed_clients.size() == 1);
    CHECK(r.failed_clients[0] == 3);
}
