// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "silocomm/netem.hpp"
#include "silocomm/payload.hpp"
#include "silocomm/transport.hpp"

namespace silocomm {

// Resolved run configuration for one CLI invocation. Flags override config
// file values; the file uses a flat sectioned key=value format:
//
//   [run]
//   backend = hybrid
//   tier = big
//   profile = nc-bahrain
//   reps = 10
//
//   [profiles.myprofile]
//   latency_ms = 5
//   single_mbps = 100
//   aggregate_mbps = 800
//   scale = 1.0
struct RunConfig {
    std::string command;  // p2p | sweep | e2e | profiles
    std::string backend = "all";
    std::string tier = "all";
    std::string profile;  // default depends on command
    int reps = 5;
    int n_messages = 10;
    int n_clients = 7;
    int n_rounds = 1;
    double scale = 1.0;
    std::uint64_t seed = 1;
    std::string out_path;
    std::string format = "csv";  // csv | json
    std::string store = "memory";  // memory | fs | s3
    double threshold_mb = 10.0;
    double train_base_s = 0;
    double train_jitter = 0;
    std::string fs_root = "silocomm-store";
};

struct ConfigLine {
    std::string value;
    int line = 0;
};

struct ConfigFile {
    // section -> key -> value (section "" holds stray top-level keys).
    std::map<std::string, std::map<std::string, ConfigLine>> sections;
};

// Parses the sectioned key=value format; errors carry line numbers.
ConfigFile parse_config_text(const std::string& text, const std::string& origin);
ConfigFile load_config_file(const std::string& path);

// Applies [run] keys to cfg and [profiles.*] sections to the catalog.
// `already_set` lists run keys fixed by CLI flags (flags win). Unknown
// sections or keys are rejected with the offending name and line.
void apply_config_file(const ConfigFile& file, RunConfig& cfg, ProfileCatalog& catalog,
                       const std::vector<std::string>& already_set);

// Validates cross-field constraints (formats, stores, counts).
void validate(const RunConfig& cfg);

std::vector<std::string> split_list(const std::string& csv);

// "all" resolves to every preset / every tier.
std::vector<BackendSpec> resolve_backends(const std::string& list, double threshold_mb);
std::vector<PayloadTier> resolve_tiers(const std::string& list);
std::vector<LinkProfile> resolve_profiles(const std::string& list, const ProfileCatalog& catalog);

}  // namespace silocomm
