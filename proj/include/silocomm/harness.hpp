// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "silocomm/netem.hpp"
#include "silocomm/payload.hpp"
#include "silocomm/store.hpp"
#include "silocomm/transport.hpp"

namespace silocomm {

// ---------------------------------------------------------------------------
// Per-participant wall-clock decomposition
// ---------------------------------------------------------------------------

enum class TimingState { Communication, Serialization, Migration, Waiting, Training, Aggregation };

inline constexpr std::array<TimingState, 6> kAllTimingStates = {
    TimingState::Communication, TimingState::Serialization, TimingState::Migration,
    TimingState::Waiting,       TimingState::Training,      TimingState::Aggregation};

const char* timing_state_name(TimingState s);

// Accumulated seconds per state plus the participant's wall clock. Written
// by its participant only. Migration stays zero in this artifact (no GPU
// paths); the state exists so ledgers stay schema-complete.
struct TimingLedger {
    std::array<double, 6> seconds{};
    double total_wall_clock = 0;

    void add(TimingState s, double secs) { seconds[std::size_t(s)] += secs; }
    double get(TimingState s) const { return seconds[std::size_t(s)]; }
    double state_sum() const {
        double t = 0;
        for (double v : seconds) t += v;
        return t;
    }
};

// ---------------------------------------------------------------------------
// FL plumbing
// ---------------------------------------------------------------------------

struct TrainDelayModel {
    double base_s = 0;
    double jitter_fraction = 0;
};

struct TrainResult {
    Payload payload;
    double duration_s = 0;
};

// Stand-in for one local epoch: sleeps base*(1 + jitter*u), u in [-1,1]
// derived from `seed`, and applies a deterministic zero-mean perturbation.
// Same (payload, seed) always yields identical output bytes.
TrainResult synthetic_train(const Payload& p, const TrainDelayModel& model, std::uint64_t seed);

// Element-wise uniform mean. Accumulates in f64 over updates in vector
// order, divides by the count, rounds once to f32; bit-stable for a fixed
// update order. Throws on length mismatch or an empty list.
Payload fedavg(const std::vector<Payload>& updates);

// Seed for client `client_id`'s training in round `round`.
std::uint64_t train_seed(std::uint64_t run_seed, ParticipantId client_id, std::uint64_t round);

// ---------------------------------------------------------------------------
// Point-to-point benchmark (one-way latency)
// ---------------------------------------------------------------------------

struct StoreChoice {
    std::string kind = "memory";  // memory | fs | s3
    std::string fs_root = "silocomm-store";
};

// Builds the backing store for a run; fs uses <fs_root>, s3 reads the
// SILOCOMM_S3_* environment.
std::shared_ptr<ObjectStore> make_backing_store(const StoreChoice& choice);

struct P2POptions {
    BackendSpec backend;
    PayloadTier tier = PayloadTier::get(TierName::Small);
    LinkProfile profile;
    int reps = 5;
    double scale = 1.0;
    std::uint64_t seed = 1;
    StoreChoice store;
};

struct P2PReport {
    std::string backend, tier, profile;
    std::uint64_t payload_bytes = 0;
    int reps = 0;
    double scale = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> latencies_s;  // send start -> receiver reconstruction
    double median_s = 0, p10_s = 0, p90_s = 0;
    double mean_serialize_s = 0, mean_comm_s = 0;
    double oracle_s = 0;  // model_transfer_time for the payload on this profile
};

P2PReport run_p2p(const P2POptions& opts);

// ---------------------------------------------------------------------------
// Concurrent-dispatch sweep (speedup of concurrent over sequential)
// ---------------------------------------------------------------------------

struct SweepOptions {
    BackendSpec backend;
    PayloadTier tier = PayloadTier::get(TierName::Medium);
    LinkProfile profile;
    int n_messages = 10;
    double scale = 1.0;
    std::uint64_t seed = 1;
    StoreChoice store;
};

struct SpeedupReport {
    std::string backend, tier, profile;
    int n_messages = 0;
    double scale = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t payload_bytes = 0;
    double sequential_s = 0;
    double concurrent_s = 0;
    double speedup = 0;
    std::uint64_t ledger_peak_sequential = 0;
    std::uint64_t ledger_peak_concurrent = 0;
    double oracle_speedup = 0;  // min(n, aggregate/single) in the saturated regime
};

SpeedupReport run_concurrency_sweep(const SweepOptions& opts);

// ---------------------------------------------------------------------------
// End-to-end FL rounds
// ---------------------------------------------------------------------------

struct RoundConfig {
    int n_clients = 7;
    int n_rounds = 1;
    PayloadTier tier = PayloadTier::get(TierName::Small);
    BackendSpec backend;
    // One profile name per client; shorter lists repeat cyclically. Default:
    // the seven region profiles.
    std::vector<std::string> client_profiles;
    // "auto": nc-nc when any client is on a region profile, else identity.
    std::string server_store_profile = "auto";
    TrainDelayModel train;
    double scale = 1.0;
    std::uint64_t seed = 1;
    double straggler_timeout_s = 0;  // 0 = wait forever
    int quorum = 0;                  // 0 = all clients required
    StoreChoice store;
};

struct E2EReport {
    std::string backend, tier;
    int n_clients = 0, n_rounds = 0;
    double scale = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::string> client_profiles;
    std::string server_store_profile;
    std::uint64_t payload_bytes = 0;       // serialized size at scale
    std::uint64_t fallback_threshold = 0;  // at scale

    double total_wall_clock_s = 0;
    std::vector<double> round_wall_s;
    double oracle_round_s = 0;  // closed-form prediction for one round

    TimingLedger server;
    std::vector<TimingLedger> clients;
    TimingLedger client_avg;

    std::string final_version_hex;  // digest of the final aggregated payload
    StoreStatsSnapshot store_stats;
    std::uint64_t server_ledger_peak = 0;
    std::vector<ParticipantId> failed_clients;
};

E2EReport run_e2e(const RoundConfig& cfg, const ProfileCatalog& catalog);

// Transport-free simulation of the same rounds: returns the digest the
// aggregated payload must end with for this config (backend-agnostic).
std::string simulate_final_version_hex(const RoundConfig& cfg);

// Closed-form round-time prediction from the profile numbers and the
// backend's routing, mirroring the transfer model (GIL-staggered generic
// serialization; store operations as two round trips plus a paced body).
double oracle_e2e_round_time(const BackendSpec& backend_scaled, std::uint64_t serialized_bytes,
                             const std::vector<LinkProfile>& client_profiles_scaled,
                             const LinkProfile& server_store_profile_scaled);

// Oracle round times per tier for a config, used to locate the tier
// crossover between the direct and store routes.
struct CrossoverPoint {
    std::string tier;
    std::uint64_t serialized_bytes = 0;
    double direct_round_s = 0;
    double store_round_s = 0;
};

struct CrossoverReport {
    std::vector<CrossoverPoint> points;
    // Largest tier where the direct route wins and smallest where the store
    // route wins; bytes are serialized sizes (0 when no such tier).
    std::uint64_t last_direct_win_bytes = 0;
    std::uint64_t first_store_win_bytes = 0;
    bool brackets_default_threshold = false;
};

CrossoverReport oracle_crossover(const ProfileCatalog& catalog);

}  // namespace silocomm
