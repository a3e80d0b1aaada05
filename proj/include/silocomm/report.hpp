// Copyright (c) 2026 The silocomm Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "silocomm/harness.hpp"

namespace silocomm {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kDigestAlgorithm = "sha256";

// One row of the flat CSV schema: backend,tier,profile,metric,value,unit,rep
struct MetricRow {
    std::string backend, tier, profile, metric;
    double value = 0;
    std::string unit;
    int rep = -1;  // -1 = aggregate (empty rep column)
};

// `comments` become "# key=value" lines above the header row, carrying the
// tool version, resolved config, seeds, and profile values.
std::string to_csv(const std::vector<MetricRow>& rows,
                   const std::vector<std::string>& comments = {});

std::vector<MetricRow> rows_from(const P2PReport& r);
std::vector<MetricRow> rows_from(const SpeedupReport& r);
std::vector<MetricRow> rows_from(const E2EReport& r);

// Full JSON documents; every report embeds the tool version, resolved
// config, seeds, and the profile values used.
std::string to_json(const P2PReport& r, const std::vector<LinkProfile>& profiles_used);
std::string to_json(const SpeedupReport& r, const std::vector<LinkProfile>& profiles_used);
std::string to_json(const E2EReport& r, const std::vector<LinkProfile>& profiles_used);

std::string profiles_table(const std::vector<LinkProfile>& profiles);
std::string profiles_json(const std::vector<LinkProfile>& profiles);

void write_file(const std::string& path, const std::string& content);

}  // namespace silocomm
