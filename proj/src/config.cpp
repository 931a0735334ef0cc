#include "estrisk/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "estrisk/io.hpp"

namespace estrisk::cli {

namespace {

using nlohmann::json;

// Wraps one JSON object for strict consumption: every accessor marks its
// key as seen, and finish() rejects anything left over, naming the full
// key path so config typos surface immediately.
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError("config: expected an object at \"" + path_ + "\"");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number()) throw type_error(key, "a number");
        return v.get<double>();
    }

    int integer(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number_integer()) throw type_error(key, "an integer");
        return v.get<int>();
    }

    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            throw type_error(key, "a nonnegative integer");
        }
        return v.get<std::uint64_t>();
    }

    std::string str(const std::string& key, const std::string& fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_string()) throw type_error(key, "a string");
        return v.get<std::string>();
    }

    std::vector<double> number_array(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_array()) throw type_error(key, "an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw type_error(key, "an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    std::vector<int> integer_array(const std::string& key, std::vector<int> fallback) {
        if (!has(key)) return fallback;
        const json& v = raw(key);
        if (!v.is_array()) throw type_error(key, "an array of integers");
        std::vector<int> out;
        for (const auto& e : v) {
            if (!e.is_number_integer()) throw type_error(key, "an array of integers");
            out.push_back(e.get<int>());
        }
        return out;
    }

    void finish() {
        for (const auto& item : j_.items()) {
            if (seen_.find(item.key()) == seen_.end()) {
                throw ConfigError("config: unknown key \"" + join(item.key()) + "\"");
            }
        }
    }

    std::string join(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

private:
    ConfigError type_error(const std::string& key, const std::string& expected) const {
        return ConfigError("config: key \"" + join(key) + "\" must be " + expected);
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

sim::WeightScheme parse_weight_scheme(StrictObject& parent, const std::string& key,
                                      sim::WeightScheme fallback) {
    if (!parent.has(key)) return fallback;
    StrictObject obj(parent.raw(key), parent.join(key));
    const std::string kind = obj.str("kind", "uniform");
    sim::WeightScheme out;
    if (kind == "uniform") {
        out.kind = sim::WeightScheme::Kind::constant;
        out.value = 1.0;
        obj.finish();
        return out;
    }
    if (kind == "constant") {
        out.kind = sim::WeightScheme::Kind::constant;
        out.value = obj.number("value", 1.0);
        obj.finish();
        return out;
    }
    if (kind == "bimodal") {
        out.kind = sim::WeightScheme::Kind::bimodal;
        out.t = obj.number("t", 0.75);
        obj.finish();
        return out;
    }
    throw ConfigError("config: key \"" + obj.join("kind") +
                      "\" must be one of uniform|constant|bimodal");
}

std::vector<int> default_n_grid() {
    std::vector<int> grid;
    for (int n = 20; n <= 200; n += 20) grid.push_back(n);
    return grid;
}

}  // namespace

Config parse_config(const std::string& json_text, const std::string& origin) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + origin + ": " + e.what());
    }
    StrictObject top(root, "");
    Config cfg;

    if (top.has("scenario")) {
        StrictObject sc(top.raw("scenario"), "scenario");
        auto& s = cfg.experiment.scenario;
        s.assets = sc.integer("assets", s.assets);
        auto band = sc.number_array("vol_band", {s.vol_lo, s.vol_hi});
        if (band.size() != 2) {
            throw ConfigError("config: key \"scenario.vol_band\" must be [lo, hi]");
        }
        s.vol_lo = band[0];
        s.vol_hi = band[1];
        s.periods_per_year = sc.integer("periods_per_year", s.periods_per_year);
        s.correlation_strength = sc.number("correlation_strength", s.correlation_strength);
        s.mu_scale = sc.number("mu_scale", s.mu_scale);
        const std::string kind = sc.str("sigma0", "identity");
        if (kind == "identity") {
            s.sigma0_kind = sim::Sigma0Kind::identity;
        } else if (kind == "diagonal-of-sigma") {
            s.sigma0_kind = sim::Sigma0Kind::diagonal_of_sigma;
        } else {
            throw ConfigError(
                "config: key \"scenario.sigma0\" must be identity|diagonal-of-sigma");
        }
        s.seed = sc.unsigned64("seed", s.seed);
        sc.finish();
    }

    if (top.has("estimator")) {
        StrictObject est(top.raw("estimator"), "estimator");
        auto& e = cfg.experiment.estimator;
        e.rho = est.number("rho", e.rho);
        e.delta = est.number("delta", e.delta);
        e.w_mu = parse_weight_scheme(est, "w_mu", e.w_mu);
        e.w_sigma = parse_weight_scheme(est, "w_sigma", e.w_sigma);
        est.finish();
    }

    cfg.experiment.n_grid = default_n_grid();
    if (top.has("experiment")) {
        StrictObject ex(top.raw("experiment"), "experiment");
        cfg.experiment.n_grid = ex.integer_array("n_grid", cfg.experiment.n_grid);
        cfg.experiment.trials = ex.integer("trials", cfg.experiment.trials);
        cfg.experiment.threads = ex.integer("threads", cfg.experiment.threads);
        if (ex.has("calibration")) {
            StrictObject cal(ex.raw("calibration"), "experiment.calibration");
            auto& c = cfg.experiment.calibration;
            const std::string target = cal.str("target", "none");
            if (target == "none") {
                c.target = sim::CalibrationTarget::none;
            } else if (target == "rho") {
                c.target = sim::CalibrationTarget::rho;
            } else if (target == "t") {
                c.target = sim::CalibrationTarget::t_profile;
            } else if (target == "both") {
                c.target = sim::CalibrationTarget::both;
            } else {
                throw ConfigError(
                    "config: key \"experiment.calibration.target\" must be none|rho|t|both");
            }
            c.rho_grid = cal.number_array("rho_grid", c.rho_grid);
            c.t_grid = cal.number_array("t_grid", c.t_grid);
            cal.finish();
        }
        ex.finish();
    }

    if (top.has("output")) {
        StrictObject out(top.raw("output"), "output");
        cfg.output_prefix = out.str("prefix", cfg.output_prefix);
        out.finish();
    }
    top.finish();

    cfg.experiment.validate();
    return cfg;
}

Config load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("config: cannot open \"" + path + "\"");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

io::JsonValue config_json_value(const Config& c) {
    using io::JsonValue;
    const auto& e = c.experiment;

    auto scheme_json = [](const sim::WeightScheme& ws) {
        JsonValue v = JsonValue::object();
        if (ws.kind == sim::WeightScheme::Kind::constant) {
            v.set("kind", JsonValue::str("constant"));
            v.set("value", JsonValue::number(ws.value));
        } else {
            v.set("kind", JsonValue::str("bimodal"));
            v.set("t", JsonValue::number(ws.t));
        }
        return v;
    };

    JsonValue scenario = JsonValue::object();
    scenario.set("assets", JsonValue::integer(e.scenario.assets));
    JsonValue band = JsonValue::array();
    band.push(JsonValue::number(e.scenario.vol_lo));
    band.push(JsonValue::number(e.scenario.vol_hi));
    scenario.set("vol_band", std::move(band));
    scenario.set("periods_per_year", JsonValue::integer(e.scenario.periods_per_year));
    scenario.set("correlation_strength", JsonValue::number(e.scenario.correlation_strength));
    scenario.set("mu_scale", JsonValue::number(e.scenario.mu_scale));
    scenario.set("sigma0",
                 JsonValue::str(e.scenario.sigma0_kind == sim::Sigma0Kind::identity
                                    ? "identity"
                                    : "diagonal-of-sigma"));
    scenario.set("seed", JsonValue::integer(static_cast<std::int64_t>(e.scenario.seed)));

    JsonValue estimator = JsonValue::object();
    estimator.set("rho", JsonValue::number(e.estimator.rho));
    estimator.set("delta", JsonValue::number(e.estimator.delta));
    estimator.set("w_mu", scheme_json(e.estimator.w_mu));
    estimator.set("w_sigma", scheme_json(e.estimator.w_sigma));

    JsonValue experiment = JsonValue::object();
    JsonValue grid = JsonValue::array();
    for (int n : e.n_grid) grid.push(JsonValue::integer(n));
    experiment.set("n_grid", std::move(grid));
    experiment.set("trials", JsonValue::integer(e.trials));
    experiment.set("threads", JsonValue::integer(e.threads));
    JsonValue calibration = JsonValue::object();
    const char* target = "none";
    switch (e.calibration.target) {
        case sim::CalibrationTarget::none: target = "none"; break;
        case sim::CalibrationTarget::rho: target = "rho"; break;
        case sim::CalibrationTarget::t_profile: target = "t"; break;
        case sim::CalibrationTarget::both: target = "both"; break;
    }
    calibration.set("target", JsonValue::str(target));
    JsonValue rho_grid = JsonValue::array();
    for (double r : e.calibration.rho_grid) rho_grid.push(JsonValue::number(r));
    calibration.set("rho_grid", std::move(rho_grid));
    JsonValue t_grid = JsonValue::array();
    for (double t : e.calibration.t_grid) t_grid.push(JsonValue::number(t));
    calibration.set("t_grid", std::move(t_grid));
    experiment.set("calibration", std::move(calibration));

    JsonValue output = JsonValue::object();
    output.set("prefix", JsonValue::str(c.output_prefix));

    JsonValue root = JsonValue::object();
    root.set("scenario", std::move(scenario));
    root.set("estimator", std::move(estimator));
    root.set("experiment", std::move(experiment));
    root.set("output", std::move(output));
    return root;
}

std::string config_json(const Config& c) {
    return config_json_value(c).dump();
}

}  // namespace estrisk::cli
