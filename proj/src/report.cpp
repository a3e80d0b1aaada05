// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "silocomm/error.hpp"

namespace silocomm {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

json profile_json(const LinkProfile& p) {
    json j;
    j["name"] = p.name;
    j["latency_ms"] = p.latency_ms;
    j["single_mbps"] = std::isinf(p.single_mbps) ? json("inf") : json(p.single_mbps);
    j["aggregate_mbps"] = std::isinf(p.aggregate_mbps) ? json("inf") : json(p.aggregate_mbps);
    j["scale"] = p.scale;
    return j;
}

json header_json() {
    json j;
    j["tool_version"] = kToolVersion;
    j["digest"] = kDigestAlgorithm;
    return j;
}

json ledger_json(const TimingLedger& l) {
    json j;
    for (TimingState s : kAllTimingStates) j[timing_state_name(s)] = l.get(s);
    j["state_sum"] = l.state_sum();
    j["total_wall_clock"] = l.total_wall_clock;
    return j;
}

json profiles_used_json(const std::vector<LinkProfile>& profiles) {
    json arr = json::array();
    for (const auto& p : profiles) arr.push_back(profile_json(p));
    return arr;
}

}  // namespace

std::string to_csv(const std::vector<MetricRow>& rows,
                   const std::vector<std::string>& comments) {
    std::ostringstream os;
    for (const auto& c : comments) os << "# " << c << '\n';
    os << "backend,tier,profile,metric,value,unit,rep\n";
    for (const auto& r : rows) {
        os << r.backend << ',' << r.tier << ',' << r.profile << ',' << r.metric << ','
           << fmt_double(r.value) << ',' << r.unit << ',';
        if (r.rep >= 0) os << r.rep;
        os << '\n';
    }
    return os.str();
}

std::vector<MetricRow> rows_from(const P2PReport& r) {
    std::vector<MetricRow> rows;
    auto add = [&](const std::string& metric, double v, const std::string& unit, int rep = -1) {
        rows.push_back({r.backend, r.tier, r.profile, metric, v, unit, rep});
    };
    for (std::size_t i = 0; i < r.latencies_s.size(); i++)
        add("latency", r.latencies_s[i], "s", int(i));
    add("latency_median", r.median_s, "s");
    add("latency_p10", r.p10_s, "s");
    add("latency_p90", r.p90_s, "s");
    add("serialize_mean", r.mean_serialize_s, "s");
    add("comm_mean", r.mean_comm_s, "s");
    add("payload_bytes", double(r.payload_bytes), "bytes");
    add("oracle_transfer", r.oracle_s, "s");
    return rows;
}

std::vector<MetricRow> rows_from(const SpeedupReport& r) {
    std::vector<MetricRow> rows;
    auto add = [&](const std::string& metric, double v, const std::string& unit) {
        rows.push_back({r.backend, r.tier, r.profile, metric, v, unit, -1});
    };
    add("sequential", r.sequential_s, "s");
    add("concurrent", r.concurrent_s, "s");
    add("speedup", r.speedup, "x");
    add("oracle_speedup", r.oracle_speedup, "x");
    add("ledger_peak_sequential", double(r.ledger_peak_sequential), "bytes");
    add("ledger_peak_concurrent", double(r.ledger_peak_concurrent), "bytes");
    add("messages", double(r.n_messages), "count");
    add("payload_bytes", double(r.payload_bytes), "bytes");
    return rows;
}

std::vector<MetricRow> rows_from(const E2EReport& r) {
    std::vector<MetricRow> rows;
    std::string mix = r.client_profiles.empty() ? "mixed" : r.client_profiles.front();
    if (r.client_profiles.size() > 1) mix = "geo-mix";
    auto add = [&](const std::string& metric, double v, const std::string& unit, int rep = -1) {
        rows.push_back({r.backend, r.tier, mix, metric, v, unit, rep});
    };
    add("total_wall_clock", r.total_wall_clock_s, "s");
    add("oracle_round", r.oracle_round_s, "s");
    for (std::size_t i = 0; i < r.round_wall_s.size(); i++)
        add("round_wall_clock", r.round_wall_s[i], "s", int(i));
    for (TimingState s : kAllTimingStates) {
        add(std::string("server_") + timing_state_name(s), r.server.get(s), "s");
        add(std::string("client_avg_") + timing_state_name(s), r.client_avg.get(s), "s");
    }
    add("server_wall_clock", r.server.total_wall_clock, "s");
    add("client_avg_wall_clock", r.client_avg.total_wall_clock, "s");
    add("server_ledger_peak", double(r.server_ledger_peak), "bytes");
    add("store_put_count", double(r.store_stats.put_count), "count");
    add("store_get_count", double(r.store_stats.get_count), "count");
    add("payload_bytes", double(r.payload_bytes), "bytes");
    add("failed_clients", double(r.failed_clients.size()), "count");
    return rows;
}

std::string to_json(const P2PReport& r, const std::vector<LinkProfile>& profiles_used) {
    json j = header_json();
    j["command"] = "p2p";
    j["config"] = {{"backend", r.backend}, {"tier", r.tier},   {"profile", r.profile},
                   {"reps", r.reps},       {"scale", r.scale}, {"seed", r.seed}};
    j["profiles_used"] = profiles_used_json(profiles_used);
    j["payload_bytes"] = r.payload_bytes;
    j["latencies_s"] = r.latencies_s;
    j["latency_median_s"] = r.median_s;
    j["latency_p10_s"] = r.p10_s;
    j["latency_p90_s"] = r.p90_s;
    j["serialize_mean_s"] = r.mean_serialize_s;
    j["comm_mean_s"] = r.mean_comm_s;
    j["oracle_transfer_s"] = r.oracle_s;
    return j.dump(2);
}

std::string to_json(const SpeedupReport& r, const std::vector<LinkProfile>& profiles_used) {
    json j = header_json();
    j["command"] = "sweep";
    j["config"] = {{"backend", r.backend},       {"tier", r.tier},   {"profile", r.profile},
                   {"messages", r.n_messages},   {"scale", r.scale}, {"seed", r.seed}};
    j["profiles_used"] = profiles_used_json(profiles_used);
    j["payload_bytes"] = r.payload_bytes;
    j["sequential_s"] = r.sequential_s;
    j["concurrent_s"] = r.concurrent_s;
    j["speedup"] = r.speedup;
    j["oracle_speedup"] = r.oracle_speedup;
    j["ledger_peak_sequential_bytes"] = r.ledger_peak_sequential;
    j["ledger_peak_concurrent_bytes"] = r.ledger_peak_concurrent;
    return j.dump(2);
}

std::string to_json(const E2EReport& r, const std::vector<LinkProfile>& profiles_used) {
    json j = header_json();
    j["command"] = "e2e";
    j["config"] = {{"backend", r.backend},
                   {"tier", r.tier},
                   {"clients", r.n_clients},
                   {"rounds", r.n_rounds},
                   {"scale", r.scale},
                   {"seed", r.seed},
                   {"client_profiles", r.client_profiles},
                   {"server_store_profile", r.server_store_profile},
                   {"fallback_threshold_bytes", r.fallback_threshold}};
    j["profiles_used"] = profiles_used_json(profiles_used);
    j["payload_bytes"] = r.payload_bytes;
    j["total_wall_clock_s"] = r.total_wall_clock_s;
    j["round_wall_s"] = r.round_wall_s;
    j["oracle_round_s"] = r.oracle_round_s;
    j["server"] = ledger_json(r.server);
    json clients = json::array();
    for (const auto& c : r.clients) clients.push_back(ledger_json(c));
    j["clients"] = clients;
    j["client_avg"] = ledger_json(r.client_avg);
    j["final_version"] = r.final_version_hex;
    j["server_ledger_peak_bytes"] = r.server_ledger_peak;
    j["store"] = {{"put_count", r.store_stats.put_count},
                  {"get_count", r.store_stats.get_count},
                  {"bytes_uploaded", r.store_stats.bytes_uploaded},
                  {"bytes_downloaded", r.store_stats.bytes_downloaded},
                  {"retry_count", r.store_stats.retry_count}};
    j["failed_clients"] = r.failed_clients;
    return j.dump(2);
}

std::string profiles_table(const std::vector<LinkProfile>& profiles) {
    std::ostringstream os;
    os << "name, latency_ms, single_mbps, aggregate_mbps\n";
    for (const auto& p : profiles) {
        os << p.name << ", " << p.latency_ms << ", ";
        if (std::isinf(p.single_mbps))
            os << "inf";
        else
            os << p.single_mbps;
        os << ", ";
        if (std::isinf(p.aggregate_mbps))
            os << "inf";
        else
            os << p.aggregate_mbps;
        os << "\n";
    }
    return os.str();
}

std::string profiles_json(const std::vector<LinkProfile>& profiles) {
    json j = header_json();
    j["command"] = "profiles";
    j["profiles"] = profiles_used_json(profiles);
    return j.dump(2);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write output file: " + path);
    out << content;
    if (!out) throw ConfigError("short write to output file: " + path);
}

}  // namespace silocomm
