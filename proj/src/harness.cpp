// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "silocomm/error.hpp"
#include "silocomm/s3_store.hpp"

namespace silocomm {

namespace {

double seconds_between(TimePoint a, TimePoint b) {
    return std::chrono::duration<double>(b - a).count();
}

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ULL;
    x ^= x >> 33;
    return x;
}

// [-1, 1) from a seed, platform-exact.
float unit_from_seed(std::uint64_t seed) {
    return float(std::int32_t(std::uint32_t(mix64(seed)))) * 0x1p-31f;
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    double idx = q * double(v.size() - 1);
    std::size_t lo = std::size_t(idx);
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = idx - double(lo);
    return v[lo] * (1 - frac) + v[hi] * frac;
}

}  // namespace

const char* timing_state_name(TimingState s) {
    switch (s) {
        case TimingState::Communication: return "communication";
        case TimingState::Serialization: return "serialization";
        case TimingState::Migration: return "migration";
        case TimingState::Waiting: return "waiting";
        case TimingState::Training: return "training";
        case TimingState::Aggregation: return "aggregation";
    }
    return "?";
}

std::uint64_t train_seed(std::uint64_t run_seed, ParticipantId client_id, std::uint64_t round) {
    return mix64(run_seed ^ (std::uint64_t(client_id) << 24) ^ (round + 1));
}

TrainResult synthetic_train(const Payload& p, const TrainDelayModel& model, std::uint64_t seed) {
    TimePoint t0 = Clock::now();
    if (model.base_s > 0) {
        double u = unit_from_seed(seed ^ 0x5ca1ab1eULL);
        double dur = model.base_s * (1.0 + model.jitter_fraction * u);
        std::this_thread::sleep_for(std::chrono::duration<double>(std::max(0.0, dur)));
    }
    std::vector<float> params = p.params;
    std::uint64_t state = seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
    for (std::size_t i = 0; i < params.size(); i++) {
        // splitmix64 step inline; zero-mean step in [-0.01, 0.01)
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
        params[i] += float(std::int32_t(std::uint32_t(z))) * 0x1p-31f * 0.01f;
    }
    TrainResult out;
    out.payload = make_payload(std::move(params));
    out.duration_s = seconds_between(t0, Clock::now());
    return out;
}

Payload fedavg(const std::vector<Payload>& updates) {
    if (updates.empty()) throw ConfigError("fedavg: empty update list");
    std::size_t n = updates[0].params.size();
    for (const auto& u : updates)
        if (u.params.size() != n)
            throw Error("length-mismatch", "fedavg: update length " + std::to_string(u.params.size()) +
                                               " != " + std::to_string(n));
    std::vector<double> acc(n, 0.0);
    for (const auto& u : updates)
        for (std::size_t i = 0; i < n; i++) acc[i] += double(u.params[i]);
    std::vector<float> mean(n);
    double k = double(updates.size());
    for (std::size_t i = 0; i < n; i++) mean[i] = float(acc[i] / k);
    return make_payload(std::move(mean));
}

// ---------------------------------------------------------------------------
// Shared wiring helpers
// ---------------------------------------------------------------------------

std::shared_ptr<ObjectStore> make_backing_store(const StoreChoice& choice) {
    if (choice.kind == "memory") return std::make_shared<MemoryStore>();
    if (choice.kind == "fs") return std::make_shared<FsStore>(choice.fs_root);
    if (choice.kind == "s3") {
        auto cfg = S3Config::from_env();
        if (!cfg)
            throw ConfigError("store 's3' needs SILOCOMM_S3_ENDPOINT in the environment");
        return std::make_shared<S3Store>(*cfg);
    }
    throw ConfigError("unknown store kind '" + choice.kind + "' (memory | fs | s3)");
}

namespace {

struct StoreWiring {
    std::shared_ptr<ObjectStore> backing;
    std::shared_ptr<ObjectStore> sender_store;
    std::shared_ptr<ObjectStore> receiver_store;
};

LinkProfile store_profile_for(const LinkProfile& region) {
    return region.store_profile();
}

// The sender region for region-pair profiles (nc-*) is the hub region, so
// its store link uses the nc-nc figures; otherwise the profile itself.
LinkProfile sender_region_profile(const LinkProfile& link_profile) {
    if (link_profile.name.rfind("nc-", 0) == 0) {
        ProfileCatalog catalog;
        return catalog.lookup("nc-nc").with_scale(link_profile.scale);
    }
    return link_profile;
}

StoreWiring make_store_wiring(const LinkProfile& link_profile, const StoreChoice& choice) {
    StoreWiring w;
    w.backing = make_backing_store(choice);
    LinkProfile sender_lp = store_profile_for(sender_region_profile(link_profile));
    LinkProfile receiver_lp = store_profile_for(link_profile);
    w.sender_store = sender_lp.unlimited()
                         ? std::static_pointer_cast<ObjectStore>(w.backing)
                         : std::make_shared<ShapedStore>(w.backing, sender_lp);
    w.receiver_store = receiver_lp.unlimited()
                           ? std::static_pointer_cast<ObjectStore>(w.backing)
                           : std::make_shared<ShapedStore>(w.backing, receiver_lp);
    return w;
}

std::shared_ptr<LinkShaper> make_shaper(const LinkProfile& p) {
    if (p.unlimited()) return nullptr;
    return std::make_shared<LinkShaper>(p);
}

}  // namespace

// ---------------------------------------------------------------------------
// run_p2p
// ---------------------------------------------------------------------------

P2PReport run_p2p(const P2POptions& opts) {
    if (opts.reps < 1) throw ConfigError("run_p2p: reps must be >= 1");
    BackendSpec spec = opts.backend.scaled(opts.scale);
    PayloadTier tier = opts.tier.scaled(opts.scale);
    LinkProfile profile = opts.profile.with_scale(opts.profile.scale * opts.scale);

    StoreWiring stores = make_store_wiring(profile, opts.store);

    Endpoint::Options ro;
    ro.id = 2;
    ro.store = stores.receiver_store;
    Endpoint receiver(ro);

    Endpoint::Options so;
    so.id = 1;
    so.store = stores.sender_store;
    Endpoint sender(so);

    auto link = sender.connect(receiver.address(), 2, spec.connections_per_peer,
                               make_shaper(profile));

    P2PReport report;
    report.backend = opts.backend.name;
    report.tier = opts.tier.label();
    report.profile = opts.profile.name;
    report.reps = opts.reps;
    report.scale = opts.scale;
    report.seed = opts.seed;
    report.payload_bytes = serialized_size(tier.param_count);
    report.oracle_s =
        model_transfer_time(report.payload_bytes, profile, spec.connections_per_peer);

    std::mutex mu;
    std::condition_variable cv;
    std::deque<TimePoint> done_times;
    std::atomic<bool> rx_stop{false};
    std::thread rx([&] {
        while (!rx_stop.load()) {
            try {
                auto d = receiver.recv_delivery_for(0.2);
                if (!d) continue;
            } catch (const Error&) {
                continue;  // poisoned delivery; the sender side records the failure
            }
            std::lock_guard lock(mu);
            done_times.push_back(Clock::now());
            cv.notify_one();
        }
    });

    // Failures propagate per repetition; the report needs at least one
    // successful measurement.
    double ser_total = 0, comm_total = 0;
    int successes = 0;
    std::exception_ptr last_error;
    for (int rep = 0; rep < opts.reps + 1; rep++) {  // first rep is warm-up
        Payload payload = make_tier_payload(tier, opts.seed + std::uint64_t(rep));
        FLMessage m{{std::uint64_t(rep), MsgType::GlobalModel, 1, 2}, std::move(payload)};
        TimePoint t0 = Clock::now();
        Receipt r;
        try {
            r = link->send(spec, m);
        } catch (const Error&) {
            last_error = std::current_exception();
            continue;
        }
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !done_times.empty(); });
        TimePoint t1 = done_times.front();
        done_times.pop_front();
        lock.unlock();
        if (rep == 0) continue;
        report.latencies_s.push_back(seconds_between(t0, t1));
        ser_total += r.t_serialize;
        comm_total += r.t_comm;
        successes++;
    }
    rx_stop.store(true);
    rx.join();
    if (successes == 0) {
        if (last_error) std::rethrow_exception(last_error);
        throw PeerUnreachableError("p2p run produced no successful repetition");
    }

    report.median_s = percentile(report.latencies_s, 0.5);
    report.p10_s = percentile(report.latencies_s, 0.1);
    report.p90_s = percentile(report.latencies_s, 0.9);
    report.mean_serialize_s = ser_total / successes;
    report.mean_comm_s = comm_total / successes;
    return report;
}

// ---------------------------------------------------------------------------
// run_concurrency_sweep
// ---------------------------------------------------------------------------

SpeedupReport run_concurrency_sweep(const SweepOptions& opts) {
    if (opts.n_messages < 2) throw ConfigError("run_concurrency_sweep: need >= 2 messages");
    BackendSpec spec = opts.backend.scaled(opts.scale);
    PayloadTier tier = opts.tier.scaled(opts.scale);
    LinkProfile profile = opts.profile.with_scale(opts.profile.scale * opts.scale);

    StoreWiring stores = make_store_wiring(profile, opts.store);

    Endpoint::Options so;
    so.id = 1;
    so.store = stores.sender_store;
    Endpoint sender(so);

    // All peer links share one shaper instance: one sender NIC into one
    // region pair, jointly capped at the aggregate figure.
    auto shaper = make_shaper(profile);

    std::vector<std::unique_ptr<Endpoint>> receivers;
    std::vector<std::shared_ptr<PeerLink>> links;
    std::vector<std::thread> consumers;
    for (int i = 0; i < opts.n_messages; i++) {
        Endpoint::Options ro;
        ro.id = ParticipantId(100 + i);
        ro.store = stores.receiver_store;
        receivers.push_back(std::make_unique<Endpoint>(ro));
        links.push_back(sender.connect(receivers.back()->address(), ro.id,
                                       spec.connections_per_peer, shaper));
    }
    for (auto& r : receivers) {
        consumers.emplace_back([ep = r.get()] {
            // One warm-up send plus two broadcasts.
            for (int k = 0; k < 3; k++) ep->recv_delivery();
        });
    }

    SpeedupReport report;
    report.backend = opts.backend.name;
    report.tier = opts.tier.label();
    report.profile = opts.profile.name;
    report.n_messages = opts.n_messages;
    report.scale = opts.scale;
    report.seed = opts.seed;
    report.payload_bytes = serialized_size(tier.param_count);
    if (profile.unlimited()) {
        report.oracle_speedup = 1.0;
    } else {
        double one_msg = std::min(double(spec.connections_per_peer) * profile.single_bytes_per_s(),
                                  profile.aggregate_bytes_per_s());
        double all_msgs = std::min(double(opts.n_messages) * double(spec.connections_per_peer) *
                                       profile.single_bytes_per_s(),
                                   profile.aggregate_bytes_per_s());
        report.oracle_speedup = all_msgs / one_msg;
    }

    Payload payload = make_tier_payload(tier, opts.seed);
    FLMessage m{{1, MsgType::GlobalModel, 1, 0}, std::move(payload)};

    // Warm every link (connection + allocator paths) with a tiny payload.
    FLMessage warm{{0, MsgType::Control, 1, 0}, make_random_payload(16, opts.seed + 999)};
    for (auto& l : links) l->send(spec, warm);

    BroadcastStats seq = sender.broadcast(spec, links, m, DispatchMode::Sequential);
    BroadcastStats conc = sender.broadcast(spec, links, m, DispatchMode::Concurrent);
    for (auto& c : consumers) c.join();

    if (!seq.failed.empty() || !conc.failed.empty())
        throw PeerUnreachableError("sweep broadcast had failed peers");

    report.sequential_s = seq.wall_clock;
    report.concurrent_s = conc.wall_clock;
    report.speedup = seq.wall_clock / conc.wall_clock;
    report.ledger_peak_sequential = seq.ledger_peak;
    report.ledger_peak_concurrent = conc.ledger_peak;
    return report;
}

// ---------------------------------------------------------------------------
// run_e2e
// ---------------------------------------------------------------------------

namespace {

struct ClientOutcome {
    TimingLedger ledger;
    std::string error;
    bool ok = true;
};

std::vector<LinkProfile> resolve_client_profiles(const RoundConfig& cfg,
                                                 const ProfileCatalog& catalog) {
    std::vector<std::string> names = cfg.client_profiles;
    if (names.empty()) names = ProfileCatalog::region_names();
    std::vector<LinkProfile> out;
    for (int i = 0; i < cfg.n_clients; i++) {
        LinkProfile p = catalog.lookup(names[std::size_t(i) % names.size()]);
        out.push_back(p.with_scale(p.scale * cfg.scale));
    }
    return out;
}

LinkProfile resolve_server_store_profile(const RoundConfig& cfg, const ProfileCatalog& catalog,
                                         const std::vector<LinkProfile>& clients) {
    std::string name = cfg.server_store_profile;
    if (name == "auto") {
        bool any_region = false;
        for (const auto& p : clients)
            if (p.name.rfind("nc-", 0) == 0) any_region = true;
        name = any_region ? "nc-nc" : "identity";
    }
    LinkProfile p = catalog.lookup(name);
    return p.with_scale(p.scale * cfg.scale).store_profile();
}

}  // namespace

E2EReport run_e2e(const RoundConfig& cfg, const ProfileCatalog& catalog) {
    if (cfg.n_clients < 1) throw ConfigError("run_e2e: n_clients must be >= 1");
    if (cfg.n_rounds < 1) throw ConfigError("run_e2e: n_rounds must be >= 1");

    BackendSpec spec = cfg.backend.scaled(cfg.scale);
    PayloadTier tier = cfg.tier.scaled(cfg.scale);
    std::vector<LinkProfile> client_profiles = resolve_client_profiles(cfg, catalog);
    LinkProfile server_store_lp = resolve_server_store_profile(cfg, catalog, client_profiles);

    std::shared_ptr<ObjectStore> backing = make_backing_store(cfg.store);
    auto server_store = server_store_lp.unlimited()
                            ? std::static_pointer_cast<ObjectStore>(backing)
                            : std::make_shared<ShapedStore>(backing, server_store_lp);

    E2EReport report;
    report.backend = cfg.backend.name;
    report.tier = cfg.tier.label();
    report.n_clients = cfg.n_clients;
    report.n_rounds = cfg.n_rounds;
    report.scale = cfg.scale;
    report.seed = cfg.seed;
    for (const auto& p : client_profiles) report.client_profiles.push_back(p.name);
    report.server_store_profile = server_store_lp.name;
    report.payload_bytes = serialized_size(tier.param_count);
    report.fallback_threshold = spec.fallback_threshold;
    report.oracle_round_s =
        oracle_e2e_round_time(spec, report.payload_bytes, client_profiles, server_store_lp);
    report.clients.resize(std::size_t(cfg.n_clients));

    Endpoint::Options so;
    so.id = 0;
    so.store = server_store;
    Endpoint server(so);
    for (int i = 0; i < cfg.n_clients; i++)
        server.set_outbound_shaper(ParticipantId(i + 1), make_shaper(client_profiles[std::size_t(i)]));

    std::vector<ClientOutcome> outcomes(std::size_t(cfg.n_clients));
    std::vector<std::thread> workers;
    std::string server_addr = server.address();

    for (int ci = 0; ci < cfg.n_clients; ci++) {
        workers.emplace_back([&, ci] {
            ClientOutcome& out = outcomes[std::size_t(ci)];
            try {
                ParticipantId id = ParticipantId(ci + 1);
                const LinkProfile& lp = client_profiles[std::size_t(ci)];
                LinkProfile client_store_lp = lp.store_profile();
                Endpoint::Options co;
                co.id = id;
                co.store = client_store_lp.unlimited()
                               ? std::static_pointer_cast<ObjectStore>(backing)
                               : std::make_shared<ShapedStore>(backing, client_store_lp);
                Endpoint client(co);
                auto link = client.connect(server_addr, 0, spec.connections_per_peer, make_shaper(lp));

                TimePoint t_start = Clock::now();
                for (int r = 1; r <= cfg.n_rounds; r++) {
                    TimePoint t0 = Clock::now();
                    Endpoint::Delivery d = client.recv_delivery();
                    double blocked = seconds_between(t0, Clock::now());
                    out.ledger.add(TimingState::Communication, std::min(d.wire_time, blocked));
                    out.ledger.add(TimingState::Serialization, d.decode_time);
                    out.ledger.add(TimingState::Waiting,
                                   std::max(0.0, blocked - d.wire_time - d.decode_time));
                    if (d.msg.meta.msg_type != MsgType::GlobalModel)
                        throw Error("protocol", "client expected a GlobalModel message");

                    TrainResult tr = synthetic_train(d.msg.payload, cfg.train,
                                                     train_seed(cfg.seed, id, std::uint64_t(r)));
                    out.ledger.add(TimingState::Training, tr.duration_s);

                    FLMessage update{{std::uint64_t(r), MsgType::LocalUpdate, id, 0},
                                     std::move(tr.payload)};
                    Receipt receipt = link->send(spec, update);
                    out.ledger.add(TimingState::Serialization, receipt.t_serialize);
                    out.ledger.add(TimingState::Communication, receipt.t_comm);
                }
                out.ledger.total_wall_clock = seconds_between(t_start, Clock::now());
                client.drain();
                client.close();
            } catch (const Error& e) {
                out.ok = false;
                out.error = std::string(e.kind()) + ": " + e.what();
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
        });
    }

    auto join_workers = [&] {
        for (auto& w : workers)
            if (w.joinable()) w.join();
    };

    Payload global = make_tier_payload(tier, cfg.seed);
    std::vector<ParticipantId> failed;
    TimePoint t_run0{};
    try {
        std::vector<std::shared_ptr<PeerLink>> links;
        for (int i = 0; i < cfg.n_clients; i++)
            links.push_back(server.await_link(ParticipantId(i + 1)));

        server.ledger().begin_window();
        t_run0 = Clock::now();

        for (int r = 1; r <= cfg.n_rounds; r++) {
        TimePoint t_round0 = Clock::now();

        FLMessage m{{std::uint64_t(r), MsgType::GlobalModel, 0, 0}, global};
        BroadcastStats bs = server.broadcast(spec, links, m, DispatchMode::Concurrent);
        double ser_sum = 0;
        for (const auto& rc : bs.receipts) ser_sum += rc.t_serialize;
        report.server.add(TimingState::Serialization, ser_sum);
        report.server.add(TimingState::Communication, std::max(0.0, bs.wall_clock - ser_sum));
        for (const auto& f : bs.failed)
            if (std::find(failed.begin(), failed.end(), f.first) == failed.end())
                failed.push_back(f.first);

        std::map<ParticipantId, Payload> updates;
        int expected = cfg.n_clients - int(failed.size());
        bool timed_out = false;
        while (int(updates.size()) < expected && !timed_out) {
            TimePoint t0 = Clock::now();
            std::optional<Endpoint::Delivery> d;
            try {
                if (cfg.straggler_timeout_s > 0) {
                    d = server.recv_delivery_for(cfg.straggler_timeout_s);
                    if (!d) {
                        timed_out = true;
                        break;
                    }
                } else {
                    d = server.recv_delivery();
                }
            } catch (const Error& e) {
                if (e.kind() == "endpoint-closed") throw;
                // A closed link or a poisoned delivery must not abort the
                // round; absent updates surface via quorum/timeout below.
                continue;
            }
            double blocked = seconds_between(t0, Clock::now());
            report.server.add(TimingState::Communication, std::min(d->wire_time, blocked));
            report.server.add(TimingState::Serialization, d->decode_time);
            report.server.add(TimingState::Waiting,
                              std::max(0.0, blocked - d->wire_time - d->decode_time));
            if (d->msg.meta.msg_type == MsgType::LocalUpdate)
                updates.emplace(d->msg.meta.sender_id, std::move(d->msg.payload));
        }

        for (int i = 0; i < cfg.n_clients; i++) {
            ParticipantId id = ParticipantId(i + 1);
            if (!updates.count(id) &&
                std::find(failed.begin(), failed.end(), id) == failed.end())
                failed.push_back(id);
        }
        int quorum = cfg.quorum > 0 ? cfg.quorum : cfg.n_clients;
        if (int(updates.size()) < quorum)
            throw Error("quorum", "round " + std::to_string(r) + " got " +
                                      std::to_string(updates.size()) + " updates, quorum " +
                                      std::to_string(quorum));

        // Fixed aggregation order (ascending client id) keeps the result
        // bit-identical across backends and runs.
        std::vector<Payload> ordered;
        ordered.reserve(updates.size());
        for (auto& kv : updates) ordered.push_back(std::move(kv.second));
        TimePoint t_agg0 = Clock::now();
        global = fedavg(ordered);
        report.server.add(TimingState::Aggregation, seconds_between(t_agg0, Clock::now()));

        report.round_wall_s.push_back(seconds_between(t_round0, Clock::now()));
        }
    } catch (...) {
        server.close();
        join_workers();
        throw;
    }

    report.server.total_wall_clock = seconds_between(t_run0, Clock::now());
    report.total_wall_clock_s = report.server.total_wall_clock;
    report.server_ledger_peak = server.ledger().window_peak();

    join_workers();
    for (int i = 0; i < cfg.n_clients; i++) {
        const auto& out = outcomes[std::size_t(i)];
        if (!out.ok) {
            ParticipantId id = ParticipantId(i + 1);
            if (std::find(failed.begin(), failed.end(), id) == failed.end()) failed.push_back(id);
        }
        report.clients[std::size_t(i)] = out.ledger;
    }
    report.failed_clients = failed;

    int ok_clients = 0;
    for (int i = 0; i < cfg.n_clients; i++) {
        if (!outcomes[std::size_t(i)].ok) continue;
        ok_clients++;
        for (TimingState s : kAllTimingStates)
            report.client_avg.add(s, report.clients[std::size_t(i)].get(s));
        report.client_avg.total_wall_clock += report.clients[std::size_t(i)].total_wall_clock;
    }
    if (ok_clients > 0) {
        for (TimingState s : kAllTimingStates)
            report.client_avg.seconds[std::size_t(s)] /= ok_clients;
        report.client_avg.total_wall_clock /= ok_clients;
    }

    report.final_version_hex = global.version.hex();
    report.store_stats = backing->stats().snapshot();
    server.close();
    return report;
}

std::string simulate_final_version_hex(const RoundConfig& cfg) {
    PayloadTier tier = cfg.tier.scaled(cfg.scale);
    Payload global = make_tier_payload(tier, cfg.seed);
    TrainDelayModel no_delay;  // perturbation only
    for (int r = 1; r <= cfg.n_rounds; r++) {
        std::vector<Payload> updates;
        for (int c = 1; c <= cfg.n_clients; c++) {
            updates.push_back(
                synthetic_train(global, no_delay, train_seed(cfg.seed, ParticipantId(c), std::uint64_t(r)))
                    .payload);
        }
        global = fedavg(updates);
    }
    return global.version.hex();
}

// ---------------------------------------------------------------------------
// Closed-form round-time oracle
// ---------------------------------------------------------------------------

namespace {

// Store operation cost in the shaped model: two round trips (connect,
// request) plus the body paced on the shared store link. `busy_until`
// carries the link's body queue across operations.
double store_op_done(double start_s, std::uint64_t bytes, const LinkProfile& store_lp,
                     double& busy_until) {
    if (store_lp.unlimited()) return start_s;
    double lat = store_lp.latency_s();
    double body_start = std::max(busy_until, start_s + 3 * lat);
    busy_until = body_start + double(bytes) / store_lp.aggregate_bytes_per_s();
    return busy_until + lat;
}

// An upload is an existence probe followed by the body transfer.
double store_put_done(double start_s, std::uint64_t bytes, const LinkProfile& store_lp,
                      double& busy_until) {
    double probe_done = store_op_done(start_s, 0, store_lp, busy_until);
    return store_op_done(probe_done, bytes, store_lp, busy_until);
}

}  // namespace

double oracle_e2e_round_time(const BackendSpec& spec, std::uint64_t serialized_bytes,
                             const std::vector<LinkProfile>& clients,
                             const LinkProfile& server_store_lp) {
    double S = double(serialized_bytes);
    bool store_route = spec.hybrid && serialized_bytes > spec.fallback_threshold;

    auto link_transfer = [&](const LinkProfile& p) {
        double rate = std::min(double(spec.connections_per_peer) * p.single_bytes_per_s(),
                               p.aggregate_bytes_per_s());
        return p.unlimited() ? 0.0 : p.latency_s() + S / rate;
    };

    if (!store_route) {
        double ser = 0;
        bool generic = spec.hybrid || spec.serialization == BackendSpec::Serialization::Generic;
        if (generic) ser = S / spec.generic_ser_bytes_per_s;

        // Down: generic serializations are GIL-staggered per copy; raw-buffer
        // backends serialize once. Transfers overlap.
        double down = 0;
        bool per_copy = generic && (spec.hybrid || spec.buffering == BackendSpec::Buffering::CopyPerSend);
        for (std::size_t i = 0; i < clients.size(); i++) {
            double ser_done = per_copy ? double(i + 1) * ser : ser;
            down = std::max(down, ser_done + link_transfer(clients[i]));
        }
        // Up: clients serialize in parallel (one GIL each).
        double up = 0;
        for (const auto& p : clients) up = std::max(up, ser + link_transfer(p));
        return down + up;
    }

    // Store route: upload once, envelopes over the control channels, then
    // parallel fetches over each client's store link.
    double srv_busy = 0;
    double put_done = store_put_done(0, serialized_bytes, server_store_lp, srv_busy);
    double down = 0;
    for (const auto& p : clients) {
        double env_arrival = put_done + p.latency_s();
        double cli_busy = 0;
        LinkProfile cli_store = p.store_profile();
        down = std::max(down, store_op_done(env_arrival, serialized_bytes, cli_store, cli_busy));
    }

    // Up: each client uploads over its own store link and sends its
    // envelope; the server's fetches share its store link in arrival order.
    std::vector<double> arrivals;
    for (const auto& p : clients) {
        double cli_busy = 0;
        LinkProfile cli_store = p.store_profile();
        double put = store_put_done(0, serialized_bytes, cli_store, cli_busy);
        arrivals.push_back(put + p.latency_s());
    }
    std::sort(arrivals.begin(), arrivals.end());
    double busy = 0;
    double up = 0;
    for (double a : arrivals) up = std::max(up, store_op_done(a, serialized_bytes, server_store_lp, busy));
    return down + up;
}

CrossoverReport oracle_crossover(const ProfileCatalog& catalog) {
    CrossoverReport report;
    std::vector<LinkProfile> clients;
    for (const auto& name : ProfileCatalog::region_names())
        clients.push_back(catalog.lookup(name));
    LinkProfile server_store = catalog.lookup("nc-nc").store_profile();

    BackendSpec direct = BackendSpec::preset("grpc_like");
    BackendSpec via_store = BackendSpec::preset("hybrid");
    via_store.fallback_threshold = 0;  // always the store route

    for (const auto& tier : PayloadTier::all()) {
        CrossoverPoint pt;
        pt.tier = tier.label();
        pt.serialized_bytes = serialized_size(tier.param_count);
        pt.direct_round_s =
            oracle_e2e_round_time(direct, pt.serialized_bytes, clients, server_store);
        pt.store_round_s =
            oracle_e2e_round_time(via_store, pt.serialized_bytes, clients, server_store);
        if (pt.direct_round_s <= pt.store_round_s)
            report.last_direct_win_bytes = pt.serialized_bytes;
        else if (report.first_store_win_bytes == 0)
            report.first_store_win_bytes = pt.serialized_bytes;
        report.points.push_back(pt);
    }
    report.brackets_default_threshold =
        report.last_direct_win_bytes > 0 && report.first_store_win_bytes > 0 &&
        report.last_direct_win_bytes < kDefaultFallbackThreshold &&
        kDefaultFallbackThreshold < report.first_store_win_bytes;
    return report;
}

}  // namespace silocomm
