// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
//
// bench — communication-backend benchmarks for cross-silo FL.
//
//   bench profiles                       print the built-in link profiles
//   bench p2p   --backend hybrid ...     point-to-point latency
//   bench sweep --backend grpc_like ...  concurrent vs sequential dispatch
//   bench e2e   --backend all ...        full FL rounds with state timings

#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "silocomm/config.hpp"
#include "silocomm/error.hpp"
#include "silocomm/harness.hpp"
#include "silocomm/report.hpp"
#include "silocomm/s3_store.hpp"

using namespace silocomm;

namespace {

void emit_error_record(const std::string& kind, const std::string& message) {
    nlohmann::json j;
    j["error"] = {{"kind", kind}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

struct Outputs {
    std::vector<MetricRow> rows;
    std::vector<std::string> json_docs;
    std::vector<std::string> profile_notes;
};


std::string profile_note(const LinkProfile& p) {
    std::ostringstream os;
    os << "name=" << p.name << " latency_ms=" << p.latency_ms << " single_mbps=" << p.single_mbps
       << " aggregate_mbps=" << p.aggregate_mbps;
    return os.str();
}

void note_profile(Outputs& out, const LinkProfile& p) {
    std::string n = profile_note(p);
    for (const auto& e : out.profile_notes)
        if (e == n) return;
    out.profile_notes.push_back(n);
}

std::vector<std::string> csv_comments(const RunConfig& cfg, const Outputs& out) {
    std::ostringstream cfgline;
    cfgline << "config command=" << cfg.command << " backend=" << cfg.backend
            << " tier=" << cfg.tier << " profile=" << cfg.profile << " reps=" << cfg.reps
            << " messages=" << cfg.n_messages << " clients=" << cfg.n_clients
            << " rounds=" << cfg.n_rounds << " scale=" << cfg.scale
            << " store=" << cfg.store << " threshold_mb=" << cfg.threshold_mb;
    std::vector<std::string> comments = {
        std::string("tool_version=") + kToolVersion,
        std::string("digest=") + kDigestAlgorithm,
        "seed=" + std::to_string(cfg.seed),
        cfgline.str(),
    };
    for (const auto& n : out.profile_notes) comments.push_back("profile " + n);
    return comments;
}

void finish(const RunConfig& cfg, Outputs& out) {
    std::string content;
    if (cfg.format == "csv") {
        content = to_csv(out.rows, csv_comments(cfg, out));
    } else {
        if (out.json_docs.size() == 1) {
            content = out.json_docs.front();
        } else {
            content = "[\n";
            for (std::size_t i = 0; i < out.json_docs.size(); i++) {
                content += out.json_docs[i];
                if (i + 1 < out.json_docs.size()) content += ",";
                content += "\n";
            }
            content += "]\n";
        }
    }
    if (cfg.out_path.empty())
        std::cout << content;
    else
        write_file(cfg.out_path, content);
}

int run_command(const RunConfig& cfg, const ProfileCatalog& catalog) {
    if (cfg.command == "profiles") {
        if (cfg.format == "json") {
            std::string doc = profiles_json(catalog.list());
            if (cfg.out_path.empty())
                std::cout << doc << "\n";
            else
                write_file(cfg.out_path, doc);
        } else {
            std::string table = profiles_table(catalog.list());
            if (cfg.out_path.empty())
                std::cout << table;
            else
                write_file(cfg.out_path, table);
        }
        return 0;
    }

    if (cfg.store == "s3" && !S3Config::from_env())
        throw ConfigError(
            "store 's3' needs SILOCOMM_S3_ENDPOINT (and optionally SILOCOMM_S3_BUCKET, "
            "SILOCOMM_S3_KEY, SILOCOMM_S3_SECRET) in the environment");

    Outputs out;
    auto backends = resolve_backends(cfg.backend, cfg.threshold_mb);
    auto tiers = resolve_tiers(cfg.tier);

    if (cfg.command == "p2p") {
        std::string profile_list = cfg.profile.empty() ? "nc-hongkong" : cfg.profile;
        auto profiles = resolve_profiles(profile_list, catalog);
        for (const auto& backend : backends) {
            for (const auto& tier : tiers) {
                for (const auto& profile : profiles) {
                    P2POptions opts;
                    opts.backend = backend;
                    opts.tier = tier;
                    opts.profile = profile;
                    opts.reps = cfg.reps;
                    opts.scale = cfg.scale;
                    opts.seed = cfg.seed;
                    opts.store = {cfg.store, cfg.fs_root};
                    P2PReport r = run_p2p(opts);
                    note_profile(out, profile);
                    auto rows = rows_from(r);
                    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
                    out.json_docs.push_back(to_json(r, {profile}));
                    std::cerr << "p2p " << r.backend << " " << r.tier << " " << r.profile
                              << ": median " << r.median_s << " s\n";
                }
            }
        }
    } else if (cfg.command == "sweep") {
        std::string profile_list = cfg.profile.empty() ? "nc-bahrain" : cfg.profile;
        auto profiles = resolve_profiles(profile_list, catalog);
        for (const auto& backend : backends) {
            for (const auto& tier : tiers) {
                for (const auto& profile : profiles) {
                    SweepOptions opts;
                    opts.backend = backend;
                    opts.tier = tier;
                    opts.profile = profile;
                    opts.n_messages =
                        tier.name == TierName::Large ? std::min(cfg.n_messages, 5) : cfg.n_messages;
                    opts.scale = cfg.scale;
                    opts.seed = cfg.seed;
                    opts.store = {cfg.store, cfg.fs_root};
                    SpeedupReport r = run_concurrency_sweep(opts);
                    note_profile(out, profile);
                    auto rows = rows_from(r);
                    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
                    out.json_docs.push_back(to_json(r, {profile}));
                    std::cerr << "sweep " << r.backend << " " << r.tier << " " << r.profile
                              << ": speedup " << r.speedup << "x\n";
                }
            }
        }
    } else {  // e2e
        for (const auto& backend : backends) {
            for (const auto& tier : tiers) {
                RoundConfig rc;
                rc.n_clients = cfg.n_clients;
                rc.n_rounds = cfg.n_rounds;
                rc.tier = tier;
                rc.backend = backend;
                if (!cfg.profile.empty() && cfg.profile != "all" && cfg.profile != "regions")
                    rc.client_profiles = split_list(cfg.profile);
                rc.train = {cfg.train_base_s, cfg.train_jitter};
                rc.scale = cfg.scale;
                rc.seed = cfg.seed;
                rc.store = {cfg.store, cfg.fs_root};
                E2EReport r = run_e2e(rc, catalog);
                auto rows = rows_from(r);
                out.rows.insert(out.rows.end(), rows.begin(), rows.end());
                std::vector<LinkProfile> used;
                for (const auto& name : r.client_profiles) used.push_back(catalog.lookup(name));
                for (const auto& p : used) note_profile(out, p);
                out.json_docs.push_back(to_json(r, used));
                std::cerr << "e2e " << r.backend << " " << r.tier << ": total "
                          << r.total_wall_clock_s << " s over " << r.n_rounds << " round(s)\n";
            }
        }
    }

    finish(cfg, out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Communication-backend benchmarks for cross-silo federated learning"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--backend", cfg.backend,
                        "Backend preset(s), comma-separated or 'all'");
        cmd->add_option("--tier", cfg.tier, "Payload tier(s): small|medium|big|large|all");
        cmd->add_option("--profile", cfg.profile, "Link profile name(s) or 'regions'");
        cmd->add_option("--reps", cfg.reps, "Repetitions per p2p measurement");
        cmd->add_option("--messages", cfg.n_messages, "Messages per concurrency sweep");
        cmd->add_option("--clients", cfg.n_clients, "Clients for e2e rounds");
        cmd->add_option("--rounds", cfg.n_rounds, "Rounds for e2e");
        cmd->add_option("--scale", cfg.scale, "Desk-scale factor for payloads and bandwidths");
        cmd->add_option("--seed", cfg.seed, "RNG seed recorded in reports");
        cmd->add_option("--out", cfg.out_path, "Output file (stdout if omitted)");
        cmd->add_option("--format", cfg.format, "csv | json");
        cmd->add_option("--store", cfg.store, "memory | fs | s3");
        cmd->add_option("--threshold-mb", cfg.threshold_mb, "Hybrid fallback threshold (MB)");
        cmd->add_option("--train-base", cfg.train_base_s, "Synthetic training delay base (s)");
        cmd->add_option("--train-jitter", cfg.train_jitter, "Training delay jitter fraction");
        cmd->add_option("--config", config_path, "Config file ([run] and [profiles.*] sections)");
        return cmd;
    };

    CLI::App* c_p2p = add_common(app.add_subcommand("p2p", "Point-to-point latency benchmark"));
    CLI::App* c_sweep =
        add_common(app.add_subcommand("sweep", "Concurrent-dispatch speedup benchmark"));
    CLI::App* c_e2e = add_common(app.add_subcommand("e2e", "End-to-end FL rounds"));
    CLI::App* c_profiles =
        add_common(app.add_subcommand("profiles", "Print the link profile catalog"));

    CLI11_PARSE(app, argc, argv);

    CLI::App* active = nullptr;
    for (CLI::App* c : {c_p2p, c_sweep, c_e2e, c_profiles})
        if (c->parsed()) active = c;
    cfg.command = active->get_name();

    try {
        ProfileCatalog catalog;
        if (!config_path.empty()) {
            // Flags that were given explicitly keep priority over the file.
            std::vector<std::string> fixed;
            const std::map<std::string, std::string> flag_to_key = {
                {"--backend", "backend"},     {"--tier", "tier"},
                {"--profile", "profile"},     {"--reps", "reps"},
                {"--messages", "messages"},   {"--clients", "clients"},
                {"--rounds", "rounds"},       {"--scale", "scale"},
                {"--seed", "seed"},           {"--out", "out"},
                {"--format", "format"},       {"--store", "store"},
                {"--threshold-mb", "threshold_mb"},
                {"--train-base", "train_base_s"},
                {"--train-jitter", "train_jitter"}};
            for (const auto& [flag, key] : flag_to_key)
                if (active->count(flag) > 0) fixed.push_back(key);
            apply_config_file(load_config_file(config_path), cfg, catalog, fixed);
        }
        validate(cfg);
        return run_command(cfg, catalog);
    } catch (const Error& e) {
        emit_error_record(e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        emit_error_record("internal", e.what());
        return 1;
    }
}
