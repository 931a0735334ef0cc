#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "estrisk/common.hpp"
#include "estrisk/moments.hpp"
#include "estrisk/portfolio.hpp"

namespace estrisk::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Stateless seed derivation: every random stream in an experiment is keyed
// by (master seed, stream tag, item index), so trial execution order and
// thread count never change what any trial sees.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

enum class Sigma0Kind { identity, diagonal_of_sigma };

// Synthetic market description: per-asset annualized volatilities drawn
// uniformly in [vol_lo, vol_hi], a seeded random correlation of adjustable
// strength, and an optional nonzero mean direction.
struct ScenarioSpec {
    int assets = 50;
    double vol_lo = 0.2;
    double vol_hi = 0.3;
    int periods_per_year = 252;
    double correlation_strength = 0.5;
    double mu_scale = 0.0;
    Sigma0Kind sigma0_kind = Sigma0Kind::identity;
    std::uint64_t seed = 1;

    void validate() const;
};

struct Scenario {
    portfolio::Moments truth;
    MatrixXd sigma0;
    VectorXd mu0;
    // Cached derived matrices used throughout an experiment.
    MatrixXd sigma_sqrt;       // principal square root of truth.sigma
    MatrixXd sigma0_inv_sqrt;  // Sigma0^{-1/2}
    MatrixXd r;                // Sigma0^{-1/2} Sigma Sigma0^{-1/2}
};

Scenario generate_scenario(const ScenarioSpec& spec);

// Y = mu 1' + Sigma^{1/2} X with X i.i.d. standard Gaussian; bit-identical
// for identical (truth, n, seed).
moments::ReturnsMatrix simulate_returns(const portfolio::Moments& truth, int n,
                                        std::uint64_t seed);

// Per-observation weight profile family, instantiated per sample size.
// "bimodal" assigns t to the first floor(N/2) observations and 2-t to the
// rest, the two-level profile used in the validation experiments.
struct WeightScheme {
    enum class Kind { constant, bimodal };
    Kind kind = Kind::constant;
    double value = 1.0;  // constant level
    double t = 0.75;     // bimodal low level

    VectorXd profile(int n) const;
};

struct EstimatorConfig {
    double rho = 0.05;
    double delta = 0.0;
    WeightScheme w_mu;
    WeightScheme w_sigma;

    // Weight profile for n observations; w_mu is rescaled to average one.
    moments::WeightProfile weights(int n) const;
};

enum class CalibrationTarget { none, rho, t_profile, both };

struct CalibrationSpec {
    CalibrationTarget target = CalibrationTarget::none;
    std::vector<double> rho_grid;
    std::vector<double> t_grid;
};

struct ExperimentSpec {
    ScenarioSpec scenario;
    EstimatorConfig estimator;
    std::vector<int> n_grid;
    int trials = 1000;
    CalibrationSpec calibration;
    int threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

// Prediction methods compared against the realized value. Enum order is
// the output order (alphabetical).
enum class Method { ade = 0, cnv = 1, gce = 2 };
inline constexpr std::array<Method, 3> kMethods = {Method::ade, Method::cnv, Method::gce};
const char* method_name(Method m);

struct TrialRecord {
    double realized_sigma = 0.0;
    std::array<double, 3> predicted_sigma{};
    std::array<double, 3> rel_err_pct{};
    bool flagged = false;
    std::string flag_reason;
};

// Sample statistics with linearly interpolated quantiles.
struct Aggregate {
    double median = 0.0;
    double mean = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
};

Aggregate aggregate(std::vector<double> values);

struct CurvePoint {
    int n = 0;
    Method method = Method::ade;
    Aggregate rel_err;
    int trials_used = 0;
    int trials_flagged = 0;
};

struct ExperimentCell {
    int n = 0;
    double ade_sigma = 0.0;  // deterministic prediction for this sample size
    std::vector<TrialRecord> trials;
};

struct CalibrationTrial {
    std::array<double, 3> chosen_rho{};
    std::array<double, 3> chosen_t{};
    std::array<double, 3> realized_sigma{};
    std::array<double, 3> predicted_sigma{};
    std::array<double, 3> rel_err_pct{};
    double oracle_rho = 0.0;
    double oracle_t = 0.0;
    double oracle_realized_sigma = 0.0;
    bool flagged = false;
    std::string flag_reason;
};

struct CalibrationCell {
    int n = 0;
    std::vector<CalibrationTrial> trials;
};

struct CalibrationReport {
    CalibrationTarget target = CalibrationTarget::none;
    std::vector<double> rho_grid;
    std::vector<double> t_grid;
    std::vector<CalibrationCell> cells;
};

struct ExperimentReport {
    ExperimentSpec spec;
    std::uint64_t scenario_digest = 0;
    std::vector<ExperimentCell> cells;
    std::vector<CurvePoint> curves;
    std::optional<CalibrationReport> calibration;
    int trials_flagged_total = 0;
};

// Runs the seeded Monte Carlo comparison of realized GMVP risk against the
// ADE / CNV / GCE predictions over the sample-size grid. Per-trial solver
// failures are recorded as flagged trials and excluded from aggregates.
ExperimentReport run_experiment(const ExperimentSpec& spec);

// Grid search of the shrinkage intensity and/or weight profile level: each
// method selects the grid point minimizing its own predicted GMVP variance
// from the observed sample; the realized-variance oracle minimizer is
// reported alongside for regret analysis.
CalibrationReport calibrate(const ExperimentSpec& spec);

std::uint64_t scenario_digest(const Scenario& s);

}  // namespace estrisk::sim
