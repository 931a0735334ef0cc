#include "estrisk/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <Eigen/Eigenvalues>

#include "estrisk/estimators.hpp"
#include "estrisk/rmt.hpp"

namespace estrisk::sim {

namespace {

constexpr std::uint64_t kScenarioStream = 1;
constexpr std::uint64_t kTrialStream = 2;
constexpr std::uint64_t kCalibrationStream = 3;

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t cell_key(int n, int trial) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(n)) << 32) |
           static_cast<std::uint32_t>(trial);
}

MatrixXd principal_sqrt(const MatrixXd& spd, const char* what) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (spd + spd.transpose()));
    if (es.info() != Eigen::Success) {
        throw ComputeError(std::string(what) + ": eigendecomposition failed");
    }
    VectorXd vals = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * vals.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// Column-major fill order is part of the determinism contract.
MatrixXd standard_normal(Eigen::Index m, Eigen::Index n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    MatrixXd x(m, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            x(i, j) = gauss(rng);
        }
    }
    return x;
}

void parallel_for(int items, int threads, const std::function<void(int)>& body) {
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    threads = std::min(threads, items);
    if (threads <= 1) {
        for (int i = 0; i < items; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= items) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return mix64(mix64(master ^ mix64(stream)) ^ mix64(index));
}

void ScenarioSpec::validate() const {
    if (assets < 1) throw ConfigError("scenario: assets must be >= 1");
    if (!(vol_lo > 0.0 && vol_lo <= vol_hi)) {
        throw ConfigError("scenario: need 0 < vol_lo <= vol_hi");
    }
    if (periods_per_year < 1) throw ConfigError("scenario: periods_per_year must be >= 1");
    if (!(correlation_strength >= 0.0 && correlation_strength < 1.0)) {
        throw ConfigError("scenario: correlation_strength must lie in [0, 1)");
    }
    if (mu_scale < 0.0) throw ConfigError("scenario: mu_scale must be >= 0");
}

Scenario generate_scenario(const ScenarioSpec& spec) {
    spec.validate();
    const int m = spec.assets;
    const double s = spec.correlation_strength;

    for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
        std::mt19937_64 rng(derive_seed(spec.seed, kScenarioStream, attempt));
        std::uniform_real_distribution<double> vol_dist(spec.vol_lo, spec.vol_hi);
        VectorXd sd(m);
        for (int i = 0; i < m; ++i) {
            sd(i) = vol_dist(rng) / std::sqrt(static_cast<double>(spec.periods_per_year));
        }

        MatrixXd corr = MatrixXd::Identity(m, m);
        if (s > 0.0) {
            MatrixXd g = standard_normal(m, 2 * m, rng);
            MatrixXd gram = (g * g.transpose()) / static_cast<double>(2 * m);
            VectorXd d = gram.diagonal().cwiseSqrt();
            MatrixXd chat = d.cwiseInverse().asDiagonal() * gram * d.cwiseInverse().asDiagonal();
            corr = (1.0 - s) * MatrixXd::Identity(m, m) + s * chat;
            corr = 0.5 * (corr + corr.transpose()).eval();
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(corr, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) {
            continue;  // fresh attempt with a new derived stream
        }

        MatrixXd sigma = sd.asDiagonal() * corr * sd.asDiagonal();
        sigma = 0.5 * (sigma + sigma.transpose()).eval();

        VectorXd mu = VectorXd::Zero(m);
        if (spec.mu_scale > 0.0) {
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int i = 0; i < m; ++i) mu(i) = gauss(rng);
            mu *= spec.mu_scale / mu.norm();
        }

        Scenario out;
        out.truth = portfolio::Moments(mu, sigma);
        out.mu0 = VectorXd::Zero(m);
        if (spec.sigma0_kind == Sigma0Kind::identity) {
            out.sigma0 = MatrixXd::Identity(m, m);
            out.sigma0_inv_sqrt = MatrixXd::Identity(m, m);
        } else {
            out.sigma0 = sigma.diagonal().asDiagonal();
            out.sigma0_inv_sqrt =
                sigma.diagonal().cwiseSqrt().cwiseInverse().asDiagonal().toDenseMatrix();
        }
        out.sigma_sqrt = principal_sqrt(sigma, "generate_scenario sigma");
        MatrixXd r = out.sigma0_inv_sqrt * sigma * out.sigma0_inv_sqrt;
        out.r = 0.5 * (r + r.transpose());
        return out;
    }
    throw ComputeError("generate_scenario: correlation matrix not positive definite after 10 attempts");
}

moments::ReturnsMatrix simulate_returns(const portfolio::Moments& truth, int n,
                                        std::uint64_t seed) {
    if (n < 2) throw ConfigError("simulate_returns: need n >= 2");
    MatrixXd sqrt_sigma = principal_sqrt(truth.sigma, "simulate_returns sigma");
    std::mt19937_64 rng(seed);
    MatrixXd x = standard_normal(truth.assets(), n, rng);
    MatrixXd y = (sqrt_sigma * x).colwise() + truth.mu;
    return moments::ReturnsMatrix(std::move(y));
}

VectorXd WeightScheme::profile(int n) const {
    if (n < 1) throw ConfigError("WeightScheme: need n >= 1");
    switch (kind) {
        case Kind::constant: {
            if (value < 0.0) throw ConfigError("WeightScheme: constant level must be >= 0");
            return VectorXd::Constant(n, value);
        }
        case Kind::bimodal: {
            if (!(t > 0.0 && t <= 2.0)) {
                throw ConfigError("WeightScheme: bimodal level must lie in (0, 2]");
            }
            VectorXd w(n);
            const int lo = n / 2;
            for (int i = 0; i < n; ++i) w(i) = (i < lo) ? t : 2.0 - t;
            return w;
        }
    }
    throw ConfigError("WeightScheme: unknown kind");
}

moments::WeightProfile EstimatorConfig::weights(int n) const {
    moments::WeightProfile w;
    w.w_mu = w_mu.profile(n);
    w.w_sigma = w_sigma.profile(n);
    w.rescale_mu();
    w.validate();
    return w;
}

void ExperimentSpec::validate() const {
    scenario.validate();
    if (!(estimator.rho >= 0.0 && estimator.rho < 1.0)) {
        throw ConfigError("estimator: rho must lie in [0, 1)");
    }
    if (!(estimator.delta >= 0.0 && estimator.delta <= 1.0)) {
        throw ConfigError("estimator: delta must lie in [0, 1]");
    }
    if (n_grid.empty()) throw ConfigError("experiment: n_grid must be non-empty");
    for (int n : n_grid) {
        if (n < 2) throw ConfigError("experiment: every N must be >= 2");
    }
    if (trials < 1) throw ConfigError("experiment: trials must be >= 1");
    if (calibration.target == CalibrationTarget::rho ||
        calibration.target == CalibrationTarget::both) {
        if (calibration.rho_grid.empty()) {
            throw ConfigError("calibration: rho_grid must be non-empty");
        }
        for (double r : calibration.rho_grid) {
            if (!(r > 0.0 && r < 1.0)) {
                throw ConfigError("calibration: rho grid values must lie in (0, 1)");
            }
        }
    }
    if (calibration.target == CalibrationTarget::t_profile ||
        calibration.target == CalibrationTarget::both) {
        if (calibration.t_grid.empty()) {
            throw ConfigError("calibration: t_grid must be non-empty");
        }
        for (double t : calibration.t_grid) {
            if (!(t > 0.0 && t <= 2.0)) {
                throw ConfigError("calibration: t grid values must lie in (0, 2]");
            }
        }
    }
}

const char* method_name(Method m) {
    switch (m) {
        case Method::ade: return "ADE";
        case Method::cnv: return "CNV";
        case Method::gce: return "GCE";
    }
    return "?";
}

Aggregate aggregate(std::vector<double> values) {
    if (values.empty()) {
        throw ComputeError("aggregate: no values");
    }
    std::sort(values.begin(), values.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(values.size() - 1);
        const auto lo = static_cast<std::size_t>(h);
        const double frac = h - static_cast<double>(lo);
        if (lo + 1 >= values.size()) return values.back();
        return values[lo] + frac * (values[lo + 1] - values[lo]);
    };
    Aggregate a;
    a.median = quantile(0.5);
    a.q25 = quantile(0.25);
    a.q75 = quantile(0.75);
    a.mean = std::accumulate(values.begin(), values.end(), 0.0) /
             static_cast<double>(values.size());
    return a;
}

namespace {

struct CellContext {
    int n = 0;
    VectorXd w_mu;
    VectorXd w_sigma;
    VectorXd t_profile;
    bool ade_ok = false;
    double ade_sigma = 0.0;
    std::string ade_error;
};

TrialRecord run_trial(const ExperimentSpec& spec, const Scenario& sc, const CellContext& ctx,
                      const VectorXd& upsilon_m, int trial) {
    TrialRecord rec;
    if (!ctx.ade_ok) {
        rec.flagged = true;
        rec.flag_reason = "ade: " + ctx.ade_error;
        return rec;
    }
    try {
        const int n = ctx.n;
        const int m = spec.scenario.assets;
        const double nd = static_cast<double>(n);
        const double md = static_cast<double>(m);
        const double rho = spec.estimator.rho;
        const double delta = spec.estimator.delta;
        const double alpha = rho / (1.0 - rho);

        std::mt19937_64 rng(derive_seed(spec.scenario.seed, kTrialStream, cell_key(n, trial)));
        MatrixXd x = standard_normal(m, n, rng);
        MatrixXd y = (sc.sigma_sqrt * x).colwise() + sc.truth.mu;

        VectorXd mu_w = (y * ctx.w_mu) / nd;
        VectorXd mu_shr = (1.0 - delta) * mu_w + delta * sc.mu0;
        MatrixXd centered = y.colwise() - y.rowwise().mean().eval();
        MatrixXd weighted = centered * ctx.w_sigma.cwiseSqrt().asDiagonal();
        MatrixXd sigma_w = (weighted * weighted.transpose()) / nd;
        sigma_w = 0.5 * (sigma_w + sigma_w.transpose()).eval();
        MatrixXd sigma_shr = (1.0 - rho) * sigma_w + rho * sc.sigma0;

        auto w_est = portfolio::gmvp(portfolio::Moments(mu_shr, sigma_shr));
        rec.realized_sigma = portfolio::realized_performance(w_est, sc.truth).risk;

        estimators::WhitenedData wd(sc.sigma0_inv_sqrt * weighted, alpha);
        const double xi1 = upsilon_m.dot(wd.resolvent_apply(upsilon_m));
        if (!(xi1 > 0.0)) {
            throw ComputeError("trial: xi1 is not positive");
        }
        const double denom = md * xi1 * xi1;
        const double cnv_var = estimators::plugin_xi4(wd, upsilon_m) / denom;
        const double delta_hat = estimators::estimate_delta(wd, ctx.t_profile);
        const double gce_var =
            estimators::gce_xi4(wd, upsilon_m, ctx.t_profile, delta_hat) / denom;

        rec.predicted_sigma[0] = ctx.ade_sigma;
        rec.predicted_sigma[1] = std::sqrt(cnv_var);
        rec.predicted_sigma[2] = std::sqrt(gce_var);
        for (std::size_t k = 0; k < kMethods.size(); ++k) {
            rec.rel_err_pct[k] =
                100.0 * std::abs(rec.realized_sigma - rec.predicted_sigma[k]) /
                rec.realized_sigma;
        }
    } catch (const std::exception& e) {
        rec = TrialRecord{};
        rec.flagged = true;
        rec.flag_reason = e.what();
    }
    return rec;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec) {
    spec.validate();
    const Scenario sc = generate_scenario(spec.scenario);
    const int m = spec.scenario.assets;
    const double rho = spec.estimator.rho;
    if (!(rho > 0.0)) {
        throw ConfigError("run_experiment: rho must be positive (alpha = rho/(1-rho) > 0)");
    }
    const double alpha = rho / (1.0 - rho);
    VectorXd upsilon_m =
        sc.sigma0_inv_sqrt * VectorXd::Ones(m) / std::sqrt(static_cast<double>(m));

    std::vector<CellContext> contexts;
    contexts.reserve(spec.n_grid.size());
    for (int n : spec.n_grid) {
        CellContext ctx;
        ctx.n = n;
        const auto w = spec.estimator.weights(n);
        ctx.w_mu = w.w_mu;
        ctx.w_sigma = w.w_sigma;
        ctx.t_profile = moments::effective_profile(w.w_sigma);
        try {
            rmt::Inputs inputs(sc.r, ctx.t_profile, alpha, upsilon_m,
                               VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n))));
            const auto fp = rmt::solve_fixed_point(inputs);
            ctx.ade_sigma = std::sqrt(rmt::ade_gmvp_variance(inputs, fp, m, rho));
            ctx.ade_ok = true;
        } catch (const std::exception& e) {
            ctx.ade_ok = false;
            ctx.ade_error = e.what();
        }
        contexts.push_back(std::move(ctx));
    }

    ExperimentReport report;
    report.spec = spec;
    report.scenario_digest = scenario_digest(sc);
    report.cells.resize(contexts.size());
    for (std::size_t c = 0; c < contexts.size(); ++c) {
        report.cells[c].n = contexts[c].n;
        report.cells[c].ade_sigma = contexts[c].ade_ok ? contexts[c].ade_sigma : 0.0;
        report.cells[c].trials.resize(spec.trials);
    }

    const int items = static_cast<int>(contexts.size()) * spec.trials;
    parallel_for(items, spec.threads, [&](int idx) {
        const int c = idx / spec.trials;
        const int trial = idx % spec.trials;
        report.cells[c].trials[trial] =
            run_trial(spec, sc, contexts[c], upsilon_m, trial);
    });

    // Aggregation runs in cell/trial order, so the report is independent of
    // the thread schedule above.
    std::vector<std::size_t> order(report.cells.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return report.cells[a].n < report.cells[b].n;
    });
    for (std::size_t oi : order) {
        const auto& cell = report.cells[oi];
        int flagged = 0;
        for (const auto& t : cell.trials) flagged += t.flagged ? 1 : 0;
        report.trials_flagged_total += flagged;
        for (std::size_t k = 0; k < kMethods.size(); ++k) {
            std::vector<double> errs;
            errs.reserve(cell.trials.size());
            for (const auto& t : cell.trials) {
                if (!t.flagged) errs.push_back(t.rel_err_pct[k]);
            }
            if (errs.empty()) continue;  // no usable trials; counts still reported
            CurvePoint pt;
            pt.n = cell.n;
            pt.method = kMethods[k];
            pt.rel_err = aggregate(std::move(errs));
            pt.trials_used = static_cast<int>(cell.trials.size()) - flagged;
            pt.trials_flagged = flagged;
            report.curves.push_back(pt);
        }
    }

    if (spec.calibration.target != CalibrationTarget::none) {
        report.calibration = calibrate(spec);
    }
    return report;
}

namespace {

struct GridPoint {
    double rho = 0.0;
    double alpha = 0.0;
    int scheme_index = 0;  // into the weight-profile axis
    double t_level = 0.0;  // reporting value for the profile axis
};

}  // namespace

CalibrationReport calibrate(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.calibration.target == CalibrationTarget::none) {
        throw ConfigError("calibrate: no calibration target configured");
    }
    const auto target = spec.calibration.target;
    const Scenario sc = generate_scenario(spec.scenario);
    const int m = spec.scenario.assets;
    VectorXd upsilon_m =
        sc.sigma0_inv_sqrt * VectorXd::Ones(m) / std::sqrt(static_cast<double>(m));

    std::vector<double> rhos;
    if (target == CalibrationTarget::rho || target == CalibrationTarget::both) {
        rhos = spec.calibration.rho_grid;
    } else {
        if (!(spec.estimator.rho > 0.0)) {
            throw ConfigError("calibrate: fixed rho must be positive");
        }
        rhos = {spec.estimator.rho};
    }

    std::vector<WeightScheme> schemes;
    std::vector<double> t_levels;
    if (target == CalibrationTarget::t_profile || target == CalibrationTarget::both) {
        for (double t : spec.calibration.t_grid) {
            WeightScheme ws;
            ws.kind = WeightScheme::Kind::bimodal;
            ws.t = t;
            schemes.push_back(ws);
            t_levels.push_back(t);
        }
    } else {
        schemes.push_back(spec.estimator.w_sigma);
        t_levels.push_back(spec.estimator.w_sigma.kind == WeightScheme::Kind::bimodal
                               ? spec.estimator.w_sigma.t
                               : spec.estimator.w_sigma.value);
    }

    std::vector<GridPoint> grid;
    for (std::size_t si = 0; si < schemes.size(); ++si) {
        for (double r : rhos) {
            GridPoint g;
            g.rho = r;
            g.alpha = r / (1.0 - r);
            g.scheme_index = static_cast<int>(si);
            g.t_level = t_levels[si];
            grid.push_back(g);
        }
    }

    CalibrationReport report;
    report.target = target;
    report.rho_grid = rhos;
    report.t_grid = t_levels;
    report.cells.resize(spec.n_grid.size());

    struct CellPre {
        int n = 0;
        std::vector<VectorXd> w_sigma;    // per scheme
        std::vector<VectorXd> t_profile;  // per scheme
        std::vector<double> ade_var;      // per grid point; NaN when the solve failed
    };
    std::vector<CellPre> pres(spec.n_grid.size());
    for (std::size_t c = 0; c < spec.n_grid.size(); ++c) {
        auto& pre = pres[c];
        pre.n = spec.n_grid[c];
        for (const auto& ws : schemes) {
            VectorXd prof = ws.profile(pre.n);
            pre.t_profile.push_back(moments::effective_profile(prof));
            pre.w_sigma.push_back(std::move(prof));
        }
        pre.ade_var.resize(grid.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            try {
                rmt::Inputs inputs(
                    sc.r, pre.t_profile[grid[gi].scheme_index], grid[gi].alpha, upsilon_m,
                    VectorXd::Constant(pre.n, 1.0 / std::sqrt(static_cast<double>(pre.n))));
                const auto fp = rmt::solve_fixed_point(inputs);
                pre.ade_var[gi] = rmt::ade_gmvp_variance(inputs, fp, m, grid[gi].rho);
            } catch (const std::exception&) {
                // leave NaN; the grid point is skipped for ADE selection
            }
        }
        report.cells[c].n = pre.n;
        report.cells[c].trials.resize(spec.trials);
    }

    const double md = static_cast<double>(m);
    const int items = static_cast<int>(spec.n_grid.size()) * spec.trials;
    parallel_for(items, spec.threads, [&](int idx) {
        const std::size_t c = static_cast<std::size_t>(idx) / spec.trials;
        const int trial = idx % spec.trials;
        const auto& pre = pres[c];
        const int n = pre.n;
        const double nd = static_cast<double>(n);
        CalibrationTrial rec;
        try {
            std::mt19937_64 rng(
                derive_seed(spec.scenario.seed, kCalibrationStream, cell_key(n, trial)));
            MatrixXd x = standard_normal(m, n, rng);
            MatrixXd y = (sc.sigma_sqrt * x).colwise() + sc.truth.mu;
            MatrixXd centered = y.colwise() - y.rowwise().mean().eval();

            // One eigendecomposition per weight profile; every rho on the
            // grid is then an O(M) spectral evaluation.
            struct SchemeCache {
                VectorXd eigs;
                MatrixXd vecs;
                VectorXd coeffs;  // eigenbasis coefficients of upsilon_m
            };
            std::vector<SchemeCache> caches(schemes.size());
            for (std::size_t si = 0; si < schemes.size(); ++si) {
                MatrixXd weighted = centered * pre.w_sigma[si].cwiseSqrt().asDiagonal();
                MatrixXd s = sc.sigma0_inv_sqrt * weighted;
                MatrixXd gram = (s * s.transpose()) / nd;
                gram = 0.5 * (gram + gram.transpose()).eval();
                Eigen::SelfAdjointEigenSolver<MatrixXd> es(gram);
                if (es.info() != Eigen::Success) {
                    throw ComputeError("calibrate: eigendecomposition failed");
                }
                caches[si].eigs = es.eigenvalues().cwiseMax(0.0);
                caches[si].vecs = es.eigenvectors();
                caches[si].coeffs = es.eigenvectors().transpose() * upsilon_m;
            }

            const std::size_t g_count = grid.size();
            std::vector<double> realized_var(g_count,
                                             std::numeric_limits<double>::quiet_NaN());
            std::array<std::vector<double>, 3> predicted_var;
            for (auto& v : predicted_var) {
                v.assign(g_count, std::numeric_limits<double>::quiet_NaN());
            }

            for (std::size_t gi = 0; gi < g_count; ++gi) {
                const auto& gp = grid[gi];
                const auto& cache = caches[gp.scheme_index];
                try {
                    double xi1 = 0.0, xi4_cnv = 0.0, trace = 0.0;
                    for (Eigen::Index i = 0; i < cache.eigs.size(); ++i) {
                        const double d = cache.eigs(i) + gp.alpha;
                        const double c2 = cache.coeffs(i) * cache.coeffs(i);
                        xi1 += c2 / d;
                        xi4_cnv += cache.eigs(i) * c2 / (d * d);
                        trace += cache.eigs(i) / d;
                    }
                    trace /= nd;
                    if (!(xi1 > 0.0)) throw ComputeError("calibrate: xi1 not positive");
                    const double denom = md * xi1 * xi1;

                    // Realized variance via the whitened sandwich form,
                    // algebraically identical to building the GMVP weights
                    // from the shrunk covariance and evaluating w' Sigma w.
                    VectorXd u = cache.vecs *
                                 (cache.coeffs.array() / (cache.eigs.array() + gp.alpha))
                                     .matrix();
                    realized_var[gi] = u.dot(sc.r * u) / denom;

                    predicted_var[0][gi] = pre.ade_var[gi];
                    predicted_var[1][gi] = xi4_cnv / denom;
                    const double delta_hat = estimators::solve_delta_from_trace(
                        trace, pre.t_profile[gp.scheme_index]);
                    double tr2 = 0.0;
                    const VectorXd& tp = pre.t_profile[gp.scheme_index];
                    for (Eigen::Index i = 0; i < tp.size(); ++i) {
                        const double q = 1.0 + delta_hat * tp(i);
                        tr2 += tp(i) / (q * q);
                    }
                    tr2 /= nd;
                    if (!(tr2 > 0.0)) throw ComputeError("calibrate: zero weight profile");
                    predicted_var[2][gi] = xi4_cnv / tr2 / denom;
                } catch (const std::exception&) {
                    realized_var[gi] = std::numeric_limits<double>::quiet_NaN();
                    for (auto& v : predicted_var) v[gi] = std::numeric_limits<double>::quiet_NaN();
                }
            }

            auto argmin_finite = [](const std::vector<double>& v) -> int {
                int best = -1;
                for (std::size_t i = 0; i < v.size(); ++i) {
                    if (std::isfinite(v[i]) && (best < 0 || v[i] < v[best])) {
                        best = static_cast<int>(i);
                    }
                }
                return best;
            };

            const int oracle = argmin_finite(realized_var);
            if (oracle < 0) throw ComputeError("calibrate: all grid points flagged");
            rec.oracle_rho = grid[oracle].rho;
            rec.oracle_t = grid[oracle].t_level;
            rec.oracle_realized_sigma = std::sqrt(realized_var[oracle]);

            for (std::size_t k = 0; k < kMethods.size(); ++k) {
                const int best = argmin_finite(predicted_var[k]);
                if (best < 0 || !std::isfinite(realized_var[best])) {
                    throw ComputeError("calibrate: no usable grid point for " +
                                       std::string(method_name(kMethods[k])));
                }
                rec.chosen_rho[k] = grid[best].rho;
                rec.chosen_t[k] = grid[best].t_level;
                rec.realized_sigma[k] = std::sqrt(realized_var[best]);
                rec.predicted_sigma[k] = std::sqrt(predicted_var[k][best]);
                rec.rel_err_pct[k] = 100.0 *
                                     std::abs(rec.realized_sigma[k] - rec.predicted_sigma[k]) /
                                     rec.realized_sigma[k];
            }
        } catch (const std::exception& e) {
            rec = CalibrationTrial{};
            rec.flagged = true;
            rec.flag_reason = e.what();
        }
        report.cells[c].trials[trial] = std::move(rec);
    });

    bool any_used = false;
    for (const auto& cell : report.cells) {
        for (const auto& t : cell.trials) {
            if (!t.flagged) any_used = true;
        }
    }
    if (!any_used) {
        throw ComputeError("calibrate: all grid points flagged in every trial");
    }
    return report;
}

std::uint64_t scenario_digest(const Scenario& s) {
    std::uint64_t h = 14695981039346656037ULL;
    auto mix_str = [&h](const std::string& str) {
        for (unsigned char c : str) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    auto mix_matrix = [&](const MatrixXd& mat) {
        mix_str(std::to_string(mat.rows()) + "x" + std::to_string(mat.cols()));
        for (Eigen::Index j = 0; j < mat.cols(); ++j) {
            for (Eigen::Index i = 0; i < mat.rows(); ++i) {
                mix_str(format_g17(mat(i, j)));
            }
        }
    };
    mix_matrix(s.truth.mu);
    mix_matrix(s.truth.sigma);
    mix_matrix(s.sigma0);
    mix_matrix(s.mu0);
    return h;
}

}  // namespace estrisk::sim
