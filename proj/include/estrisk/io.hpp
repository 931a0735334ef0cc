#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "estrisk/common.hpp"
#include "estrisk/config.hpp"
#include "estrisk/json_value.hpp"
#include "estrisk/moments.hpp"
#include "estrisk/simulation.hpp"

namespace estrisk::io {

// Returns table read from CSV: header row of asset identifiers, then one
// row per time point (oldest first), one numeric column per asset.
struct ReturnsCsv {
    std::vector<std::string> assets;
    Eigen::MatrixXd rows_by_asset;  // T x M, row = time point
};

ReturnsCsv read_returns_csv(const std::string& path);

// Reorients a returns table to the estimator convention: M x N with
// columns ordered oldest to newest.
moments::ReturnsMatrix to_returns_matrix(const ReturnsCsv& csv);

// The experiment curve file:
// N,method,stat,relative_error_pct,trials_used,trials_flagged with stats
// median|mean|q25|q75 per (N, method), rows sorted by (N, method).
std::string curve_csv(const sim::ExperimentReport& report);

// Full experiment report document with keys config, scenario_digest,
// curves, calibration, flagged_trials, versions, seed.
std::string report_json(const sim::ExperimentReport& report, const cli::Config& config);

JsonValue versions_json();
std::string digest_hex(std::uint64_t digest);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace estrisk::io
