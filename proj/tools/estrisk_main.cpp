#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "estrisk/config.hpp"
#include "estrisk/estimators.hpp"
#include "estrisk/io.hpp"
#include "estrisk/moments.hpp"
#include "estrisk/rmt.hpp"
#include "estrisk/simulation.hpp"

namespace {

using estrisk::ComputeError;
using estrisk::ConfigError;
using estrisk::io::JsonValue;

struct CommonOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed_override;
    std::optional<int> trials_override;
    std::optional<int> threads_override;
};

estrisk::cli::Config load_with_overrides(const CommonOptions& opts) {
    estrisk::cli::Config cfg = opts.config_path.empty()
                                   ? estrisk::cli::Config{}
                                   : estrisk::cli::load_config_file(opts.config_path);
    if (opts.seed_override) cfg.experiment.scenario.seed = *opts.seed_override;
    if (opts.trials_override) cfg.experiment.trials = *opts.trials_override;
    if (opts.threads_override) cfg.experiment.threads = *opts.threads_override;
    cfg.experiment.validate();
    return cfg;
}

std::string out_path(const CommonOptions& opts, const std::string& name) {
    std::filesystem::create_directories(opts.out_dir);
    return (std::filesystem::path(opts.out_dir) / name).string();
}

JsonValue fixed_point_json(const estrisk::rmt::FixedPoint& fp) {
    JsonValue v = JsonValue::object();
    v.set("delta", JsonValue::number(fp.delta));
    v.set("delta_tilde", JsonValue::number(fp.delta_tilde));
    v.set("gamma", JsonValue::number(fp.gamma));
    v.set("gamma_tilde", JsonValue::number(fp.gamma_tilde));
    v.set("zeta", JsonValue::number(fp.zeta));
    v.set("zeta_tilde", JsonValue::number(fp.zeta_tilde));
    v.set("residual", JsonValue::number(fp.residual));
    v.set("iterations", JsonValue::integer(fp.iterations));
    return v;
}

int cmd_experiment(const CommonOptions& opts) {
    const auto cfg = load_with_overrides(opts);
    const auto report = estrisk::sim::run_experiment(cfg.experiment);
    const std::string curves = estrisk::io::curve_csv(report);
    const std::string json = estrisk::io::report_json(report, cfg);
    const std::string curve_file = out_path(opts, cfg.output_prefix + "_curves.csv");
    const std::string report_file = out_path(opts, cfg.output_prefix + "_report.json");
    estrisk::io::write_file(curve_file, curves);
    estrisk::io::write_file(report_file, json);
    std::cout << "wrote " << curve_file << "\n";
    std::cout << "wrote " << report_file << "\n";
    std::cout << "flagged trials: " << report.trials_flagged_total << "\n";
    return 0;
}

int cmd_ade(const CommonOptions& opts) {
    const auto cfg = load_with_overrides(opts);
    const auto& spec = cfg.experiment;
    const auto scenario = estrisk::sim::generate_scenario(spec.scenario);
    const int m = spec.scenario.assets;
    const double rho = spec.estimator.rho;
    if (!(rho > 0.0)) {
        throw ConfigError("ade: rho must be positive");
    }
    const double alpha = rho / (1.0 - rho);
    Eigen::VectorXd upsilon_m = scenario.sigma0_inv_sqrt * Eigen::VectorXd::Ones(m) /
                                std::sqrt(static_cast<double>(m));

    JsonValue solutions = JsonValue::array();
    for (int n : spec.n_grid) {
        const auto w = spec.estimator.weights(n);
        const Eigen::VectorXd t = estrisk::moments::effective_profile(w.w_sigma);
        estrisk::rmt::Inputs inputs(
            scenario.r, t, alpha, upsilon_m,
            Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n))));
        const auto fp = estrisk::rmt::solve_fixed_point(inputs);
        const auto xi = estrisk::rmt::ade_xi(inputs, fp);
        const auto res = estrisk::rmt::verify_appendix_identities(inputs, fp);
        const double variance = estrisk::rmt::ade_gmvp_variance(inputs, fp, m, rho);

        JsonValue sj = JsonValue::object();
        sj.set("n", JsonValue::integer(n));
        sj.set("alpha", JsonValue::number(alpha));
        sj.set("fixed_point", fixed_point_json(fp));
        JsonValue xj = JsonValue::object();
        xj.set("xi1", JsonValue::number(xi.xi1));
        xj.set("xi2", JsonValue::number(xi.xi2));
        xj.set("xi3", JsonValue::number(xi.xi3));
        xj.set("xi4", JsonValue::number(xi.xi4));
        xj.set("xi5", JsonValue::number(xi.xi5));
        xj.set("xi6", JsonValue::number(xi.xi6));
        sj.set("xi", std::move(xj));
        JsonValue rj = JsonValue::object();
        rj.set("trace_r", JsonValue::number(res.trace_r));
        rj.set("trace_t", JsonValue::number(res.trace_t));
        rj.set("deriv_tilde", JsonValue::number(res.deriv_tilde));
        rj.set("deriv", JsonValue::number(res.deriv));
        rj.set("zeta_relation", JsonValue::number(res.zeta_relation));
        sj.set("identity_residuals", std::move(rj));
        sj.set("gmvp_variance", JsonValue::number(variance));
        sj.set("gmvp_sigma", JsonValue::number(std::sqrt(variance)));
        solutions.push(std::move(sj));
    }

    JsonValue root = JsonValue::object();
    root.set("config", estrisk::cli::config_json_value(cfg));
    root.set("scenario_digest",
             JsonValue::str(estrisk::io::digest_hex(estrisk::sim::scenario_digest(scenario))));
    root.set("solutions", std::move(solutions));
    root.set("versions", estrisk::io::versions_json());
    root.set("seed", JsonValue::integer(static_cast<std::int64_t>(spec.scenario.seed)));
    const std::string text = root.dump();
    if (opts.out_dir.empty()) {
        std::cout << text;
    } else {
        const std::string file = out_path(opts, cfg.output_prefix + "_ade.json");
        estrisk::io::write_file(file, text);
        std::cout << "wrote " << file << "\n";
    }
    return 0;
}

int cmd_gce(const CommonOptions& opts, const std::string& returns_path) {
    const auto cfg = load_with_overrides(opts);
    const auto csv = estrisk::io::read_returns_csv(returns_path);
    const auto returns = estrisk::io::to_returns_matrix(csv);
    const auto m = returns.assets();
    const auto n = returns.samples();

    const auto& est = cfg.experiment.estimator;
    if (!(est.rho > 0.0)) {
        throw ConfigError("gce: rho must be positive");
    }
    estrisk::moments::ShrinkageConfig shrink(est.rho, est.delta, Eigen::VectorXd::Zero(m),
                                             Eigen::MatrixXd::Identity(m, m));
    const auto w = est.weights(static_cast<int>(n));
    const Eigen::VectorXd t = estrisk::moments::effective_profile(w.w_sigma);

    const auto abc = estrisk::estimators::abc_hat(returns, shrink, w);
    auto whitened = estrisk::estimators::WhitenedData::from_returns(returns, shrink, w.w_sigma);
    Eigen::VectorXd upsilon_m =
        Eigen::VectorXd::Constant(m, 1.0 / std::sqrt(static_cast<double>(m)));
    Eigen::VectorXd upsilon_n =
        Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));

    const double xi1 = upsilon_m.dot(whitened.resolvent_apply(upsilon_m));
    const double delta_hat = estrisk::estimators::estimate_delta(whitened, t);
    const double xi4_cnv = estrisk::estimators::plugin_xi4(whitened, upsilon_m);
    const double xi4_gce = estrisk::estimators::gce_xi4(whitened, upsilon_m, t, delta_hat);
    const double xi6_cnv = estrisk::estimators::plugin_xi6(whitened, upsilon_n);
    const double xi6_gce = estrisk::estimators::gce_xi6(whitened, upsilon_n, t, delta_hat);
    if (!(xi1 > 0.0)) {
        throw ComputeError("gce: xi1 is not positive");
    }
    const double denom = static_cast<double>(m) * xi1 * xi1;
    const double var_cnv = xi4_cnv / denom;
    const double var_gce = xi4_gce / denom;

    JsonValue root = JsonValue::object();
    root.set("config", estrisk::cli::config_json_value(cfg));
    root.set("returns_file", JsonValue::str(returns_path));
    root.set("assets", JsonValue::integer(static_cast<std::int64_t>(m)));
    root.set("samples", JsonValue::integer(static_cast<std::int64_t>(n)));
    root.set("alpha", JsonValue::number(shrink.alpha));
    JsonValue aj = JsonValue::object();
    aj.set("A", JsonValue::number(abc.A));
    aj.set("B", JsonValue::number(abc.B));
    aj.set("C", JsonValue::number(abc.C));
    root.set("abc", std::move(aj));
    root.set("trace_s_resolvent", JsonValue::number(whitened.trace_s_resolvent()));
    root.set("delta_hat", JsonValue::number(delta_hat));
    JsonValue xj = JsonValue::object();
    xj.set("xi1", JsonValue::number(xi1));
    xj.set("xi4_cnv", JsonValue::number(xi4_cnv));
    xj.set("xi4_gce", JsonValue::number(xi4_gce));
    xj.set("xi6_cnv", JsonValue::number(xi6_cnv));
    xj.set("xi6_gce", JsonValue::number(xi6_gce));
    root.set("xi", std::move(xj));
    JsonValue pj = JsonValue::object();
    pj.set("gmvp_variance_cnv", JsonValue::number(var_cnv));
    pj.set("gmvp_sigma_cnv", JsonValue::number(std::sqrt(var_cnv)));
    pj.set("gmvp_variance_gce", JsonValue::number(var_gce));
    pj.set("gmvp_sigma_gce", JsonValue::number(std::sqrt(var_gce)));
    root.set("predicted", std::move(pj));
    root.set("versions", estrisk::io::versions_json());
    const std::string text = root.dump();
    if (opts.out_dir.empty()) {
        std::cout << text;
    } else {
        const std::string file = out_path(opts, cfg.output_prefix + "_gce.json");
        estrisk::io::write_file(file, text);
        std::cout << "wrote " << file << "\n";
    }
    return 0;
}

int cmd_calibrate(const CommonOptions& opts) {
    const auto cfg = load_with_overrides(opts);
    if (cfg.experiment.calibration.target == estrisk::sim::CalibrationTarget::none) {
        throw ConfigError("calibrate: config must set experiment.calibration.target");
    }
    const auto cal = estrisk::sim::calibrate(cfg.experiment);
    estrisk::sim::ExperimentReport shell;
    shell.spec = cfg.experiment;
    shell.calibration = cal;
    const auto scenario = estrisk::sim::generate_scenario(cfg.experiment.scenario);
    shell.scenario_digest = estrisk::sim::scenario_digest(scenario);
    const std::string json = estrisk::io::report_json(shell, cfg);
    const std::string file = out_path(opts, cfg.output_prefix + "_calibration.json");
    estrisk::io::write_file(file, json);
    std::cout << "wrote " << file << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Estimation-risk analysis of large shrinkage mean-variance portfolios"};
    app.require_subcommand(1);

    CommonOptions opts;
    std::string returns_path;

    auto add_common = [&](CLI::App* sub, bool config_required) {
        auto* c = sub->add_option("--config", opts.config_path, "JSON configuration file");
        if (config_required) c->required();
        sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", [&](const CLI::results_t& r) {
            opts.seed_override = std::stoull(r[0]);
            return true;
        }, "override scenario seed");
        sub->add_option("--trials", [&](const CLI::results_t& r) {
            opts.trials_override = std::stoi(r[0]);
            return true;
        }, "override trial count");
        sub->add_option("--threads", [&](const CLI::results_t& r) {
            opts.threads_override = std::stoi(r[0]);
            return true;
        }, "worker threads (0 = auto)");
    };

    auto* experiment = app.add_subcommand(
        "experiment", "run the Monte Carlo comparison and write curves + report");
    add_common(experiment, true);
    auto* ade = app.add_subcommand(
        "ade", "solve the deterministic equivalents for the configured scenario");
    add_common(ade, true);
    auto* gce = app.add_subcommand(
        "gce", "estimate GMVP risk from observed returns (CSV)");
    add_common(gce, false);
    gce->add_option("--returns", returns_path, "returns CSV (rows = time, columns = assets)")
        ->required();
    auto* calibrate = app.add_subcommand(
        "calibrate", "grid-search shrinkage/weight parameters and write the calibration report");
    add_common(calibrate, true);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(experiment)) return cmd_experiment(opts);
        if (app.got_subcommand(ade)) return cmd_ade(opts);
        if (app.got_subcommand(gce)) return cmd_gce(opts, returns_path);
        if (app.got_subcommand(calibrate)) return cmd_calibrate(opts);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ComputeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
