// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#include "silocomm/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "silocomm/error.hpp"

namespace silocomm {

namespace {

const std::vector<std::string> kRunKeys = {
    "backend", "tier",   "profile",      "reps",         "messages",     "clients",
    "rounds",  "scale",  "seed",         "out",          "format",       "store",
    "threshold_mb",      "train_base_s", "train_jitter", "fs_root"};

const std::vector<std::string> kProfileKeys = {"latency_ms", "single_mbps", "aggregate_mbps",
                                               "scale"};

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const ConfigLine& v, const std::string& key, const std::string& origin) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v.value, &pos);
        if (pos != v.value.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(origin + ":" + std::to_string(v.line) + ": key '" + key +
                          "' needs a number, got '" + v.value + "'");
    }
}

std::int64_t parse_int(const ConfigLine& v, const std::string& key, const std::string& origin) {
    try {
        std::size_t pos = 0;
        long long i = std::stoll(v.value, &pos);
        if (pos != v.value.size()) throw std::invalid_argument("trailing");
        return i;
    } catch (const std::exception&) {
        throw ConfigError(origin + ":" + std::to_string(v.line) + ": key '" + key +
                          "' needs an integer, got '" + v.value + "'");
    }
}

}  // namespace

ConfigFile parse_config_text(const std::string& text, const std::string& origin) {
    ConfigFile out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            out.sections[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        out.sections[section][key] = {value, lineno};
    }
    return out;
}

ConfigFile load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

void apply_config_file(const ConfigFile& file, RunConfig& cfg, ProfileCatalog& catalog,
                       const std::vector<std::string>& already_set) {
    auto fixed = [&](const std::string& key) {
        return std::find(already_set.begin(), already_set.end(), key) != already_set.end();
    };

    for (const auto& [section, keys] : file.sections) {
        if (section == "run") {
            for (const auto& [key, v] : keys) {
                if (std::find(kRunKeys.begin(), kRunKeys.end(), key) == kRunKeys.end())
                    throw ConfigError("config:" + std::to_string(v.line) +
                                      ": unknown key '" + key + "' in [run]");
                if (fixed(key)) continue;  // CLI flag wins
                if (key == "backend") cfg.backend = v.value;
                else if (key == "tier") cfg.tier = v.value;
                else if (key == "profile") cfg.profile = v.value;
                else if (key == "reps") cfg.reps = int(parse_int(v, key, "config"));
                else if (key == "messages") cfg.n_messages = int(parse_int(v, key, "config"));
                else if (key == "clients") cfg.n_clients = int(parse_int(v, key, "config"));
                else if (key == "rounds") cfg.n_rounds = int(parse_int(v, key, "config"));
                else if (key == "scale") cfg.scale = parse_double(v, key, "config");
                else if (key == "seed") cfg.seed = std::uint64_t(parse_int(v, key, "config"));
                else if (key == "out") cfg.out_path = v.value;
                else if (key == "format") cfg.format = v.value;
                else if (key == "store") cfg.store = v.value;
                else if (key == "threshold_mb") cfg.threshold_mb = parse_double(v, key, "config");
                else if (key == "train_base_s") cfg.train_base_s = parse_double(v, key, "config");
                else if (key == "train_jitter") cfg.train_jitter = parse_double(v, key, "config");
                else if (key == "fs_root") cfg.fs_root = v.value;
            }
        } else if (section.rfind("profiles.", 0) == 0) {
            std::string name = section.substr(9);
            if (name.empty()) throw ConfigError("config: empty profile name in section [" + section + "]");
            LinkProfile p;
            if (catalog.contains(name)) p = catalog.lookup(name);
            p.name = name;
            for (const auto& [key, v] : keys) {
                if (std::find(kProfileKeys.begin(), kProfileKeys.end(), key) == kProfileKeys.end())
                    throw ConfigError("config:" + std::to_string(v.line) + ": unknown key '" + key +
                                      "' in [" + section + "]");
                if (key == "latency_ms") p.latency_ms = parse_double(v, key, "config");
                else if (key == "single_mbps") p.single_mbps = parse_double(v, key, "config");
                else if (key == "aggregate_mbps") p.aggregate_mbps = parse_double(v, key, "config");
                else if (key == "scale") p.scale = parse_double(v, key, "config");
            }
            catalog.upsert(std::move(p));
        } else {
            throw ConfigError("config: unknown section [" + section +
                              "] (expected [run] or [profiles.<name>])");
        }
    }
}

void validate(const RunConfig& cfg) {
    if (cfg.command != "p2p" && cfg.command != "sweep" && cfg.command != "e2e" &&
        cfg.command != "profiles")
        throw ConfigError("unknown command '" + cfg.command + "' (p2p | sweep | e2e | profiles)");
    if (cfg.format != "csv" && cfg.format != "json")
        throw ConfigError("format must be csv or json, got '" + cfg.format + "'");
    if (cfg.store != "memory" && cfg.store != "fs" && cfg.store != "s3")
        throw ConfigError("store must be memory, fs or s3, got '" + cfg.store + "'");
    if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
    if (cfg.n_messages < 2) throw ConfigError("messages must be >= 2");
    if (cfg.n_clients < 1) throw ConfigError("clients must be >= 1");
    if (cfg.n_rounds < 1) throw ConfigError("rounds must be >= 1");
    if (cfg.scale <= 0) throw ConfigError("scale must be positive");
    if (cfg.threshold_mb < 0) throw ConfigError("threshold-mb must be >= 0");
}

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

std::vector<BackendSpec> resolve_backends(const std::string& list, double threshold_mb) {
    std::vector<std::string> names =
        list == "all" ? BackendSpec::preset_names() : split_list(list);
    if (names.empty()) throw ConfigError("no backends given");
    std::vector<BackendSpec> out;
    for (const auto& n : names) {
        BackendSpec s = BackendSpec::preset(n);
        s.fallback_threshold = std::uint64_t(threshold_mb * 1e6);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<PayloadTier> resolve_tiers(const std::string& list) {
    if (list == "all") return PayloadTier::all();
    std::vector<PayloadTier> out;
    for (const auto& n : split_list(list)) {
        auto t = PayloadTier::by_label(n);
        if (!t) throw ConfigError("unknown tier '" + n + "' (small | medium | big | large)");
        out.push_back(*t);
    }
    if (out.empty()) throw ConfigError("no tiers given");
    return out;
}

std::vector<LinkProfile> resolve_profiles(const std::string& list, const ProfileCatalog& catalog) {
    std::vector<std::string> names;
    if (list == "all" || list == "regions")
        names = ProfileCatalog::region_names();
    else
        names = split_list(list);
    if (names.empty()) throw ConfigError("no profiles given");
    std::vector<LinkProfile> out;
    for (const auto& n : names) out.push_back(catalog.lookup(n));
    return out;
}

}  // namespace silocomm
