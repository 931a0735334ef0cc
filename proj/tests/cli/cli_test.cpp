#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "estrisk/common.hpp"
#include "estrisk/estimators.hpp"
#include "estrisk/io.hpp"
#include "estrisk/moments.hpp"
#include "estrisk/simulation.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string stdout_text;
    std::string stderr_text;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

RunResult run_cli(const std::string& args, const fs::path& dir) {
    const fs::path out_file = dir / "stdout.txt";
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd = std::string(ESTRISK_BIN) + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.stdout_text = slurp(out_file);
    r.stderr_text = slurp(err_file);
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

const std::string kSmallConfig = R"({
  "scenario": {"assets": 12, "vol_band": [0.2, 0.3], "periods_per_year": 1,
               "correlation_strength": 0.5, "sigma0": "identity", "seed": 7},
  "estimator": {"rho": 0.05, "w_sigma": {"kind": "bimodal", "t": 0.75}},
  "experiment": {"n_grid": [15, 30], "trials": 25},
  "output": {"prefix": "smoke"}
})";

}  // namespace

TEST_CASE("experiment subcommand writes outputs and exits 0") {
    auto dir = fresh_dir("estrisk_cli_exp");
    write(dir / "cfg.json", kSmallConfig);
    auto r = run_cli("experiment --config " + (dir / "cfg.json").string() + " --out " +
                         dir.string(),
                     dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "smoke_curves.csv"));
    CHECK(fs::exists(dir / "smoke_report.json"));

    // 2 N values x 3 methods x 4 stats + header
    const std::string csv = slurp(dir / "smoke_curves.csv");
    int lines = 0;
    for (char ch : csv) lines += (ch == '\n') ? 1 : 0;
    CHECK(lines == 25);

    auto parsed = nlohmann::json::parse(slurp(dir / "smoke_report.json"));
    CHECK(parsed.contains("config"));
    CHECK(parsed["flagged_trials"]["total"].get<int>() == 0);
    CHECK(parsed["seed"].get<std::uint64_t>() == 7);
}

TEST_CASE("config errors exit 1 and name the offending key") {
    auto dir = fresh_dir("estrisk_cli_badcfg");
    write(dir / "bad.json", R"({"estimator": {"rho_": 0.1}})");
    auto r = run_cli("experiment --config " + (dir / "bad.json").string() + " --out " +
                         dir.string(),
                     dir);
    CHECK(r.exit_code == 1);
    CHECK(r.stderr_text.find("estimator.rho_") != std::string::npos);

    auto missing = run_cli("experiment --config /nonexistent.json --out " + dir.string(), dir);
    CHECK(missing.exit_code == 1);
}

TEST_CASE("experiment outputs are byte-identical across runs and thread counts") {
    auto dir = fresh_dir("estrisk_cli_det");
    write(dir / "cfg.json", kSmallConfig);
    auto d1 = fresh_dir("estrisk_cli_det1");
    auto d2 = fresh_dir("estrisk_cli_det2");
    auto r1 = run_cli("experiment --config " + (dir / "cfg.json").string() +
                          " --threads 1 --out " + d1.string(),
                      dir);
    auto r2 = run_cli("experiment --config " + (dir / "cfg.json").string() +
                          " --threads 2 --out " + d2.string(),
                      dir);
    REQUIRE(r1.exit_code == 0);
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(d1 / "smoke_curves.csv") == slurp(d2 / "smoke_curves.csv"));
    CHECK(slurp(d1 / "smoke_report.json") == slurp(d2 / "smoke_report.json"));
}

TEST_CASE("config echoed in the report reproduces identical outputs") {
    auto dir = fresh_dir("estrisk_cli_echo");
    write(dir / "cfg.json", kSmallConfig);
    auto d1 = fresh_dir("estrisk_cli_echo1");
    auto r1 = run_cli("experiment --config " + (dir / "cfg.json").string() + " --out " +
                          d1.string(),
                      dir);
    REQUIRE(r1.exit_code == 0);
    auto parsed = nlohmann::json::parse(slurp(d1 / "smoke_report.json"));
    write(dir / "echo.json", parsed["config"].dump(2));
    auto d2 = fresh_dir("estrisk_cli_echo2");
    auto r2 = run_cli("experiment --config " + (dir / "echo.json").string() + " --out " +
                          d2.string(),
                      dir);
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(d1 / "smoke_curves.csv") == slurp(d2 / "smoke_curves.csv"));
    CHECK(slurp(d1 / "smoke_report.json") == slurp(d2 / "smoke_report.json"));
}

TEST_CASE("ade subcommand: isotropic closed form and zero profile") {
    auto dir = fresh_dir("estrisk_cli_ade");
    // Sigma = I via a degenerate band at unit periods; rho = 0.5 so alpha = 1
    write(dir / "iso.json", R"({
      "scenario": {"assets": 30, "vol_band": [1.0, 1.0], "periods_per_year": 1,
                   "correlation_strength": 0.0, "seed": 3},
      "estimator": {"rho": 0.5, "w_sigma": {"kind": "constant", "value": 1.0}},
      "experiment": {"n_grid": [60]},
      "output": {"prefix": "iso"}
    })");
    auto r = run_cli("ade --config " + (dir / "iso.json").string() + " --out " + dir.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    auto parsed = nlohmann::json::parse(slurp(dir / "iso_ade.json"));
    const double delta = parsed["solutions"][0]["fixed_point"]["delta"].get<double>();
    // T from the centered uniform profile has N-1 unit eigenvalues and one
    // zero: delta_tilde = (1/N) (N-1)/(1+delta), delta = c/(delta_tilde+1)
    const int n = 60;
    const double c = 30.0 / 60.0;
    auto resid = [&](double d) {
        const double dt = (static_cast<double>(n - 1) / n) / (1.0 + d);
        return d - c / (dt + 1.0);
    };
    CHECK(std::abs(resid(delta)) < 1e-10);

    write(dir / "zero.json", R"({
      "scenario": {"assets": 10, "vol_band": [0.5, 0.5], "periods_per_year": 1,
                   "correlation_strength": 0.0, "seed": 3},
      "estimator": {"rho": 0.5, "w_sigma": {"kind": "constant", "value": 0.0}},
      "experiment": {"n_grid": [20]},
      "output": {"prefix": "zero"}
    })");
    auto rz = run_cli("ade --config " + (dir / "zero.json").string() + " --out " +
                          dir.string(),
                      dir);
    REQUIRE(rz.exit_code == 0);
    auto pz = nlohmann::json::parse(slurp(dir / "zero_ade.json"));
    CHECK(pz["solutions"][0]["fixed_point"]["delta_tilde"].get<double>() == 0.0);
}

TEST_CASE("gce subcommand: round trip against the in-process pipeline") {
    auto dir = fresh_dir("estrisk_cli_gce");

    // generate a returns panel, write it at 17 significant digits
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(5);
    Eigen::MatrixXd sigma = 0.04 * Eigen::MatrixXd::Identity(5, 5);
    for (int i = 0; i < 4; ++i) sigma(i, i + 1) = sigma(i + 1, i) = 0.01;
    estrisk::portfolio::Moments truth(mu, sigma);
    auto y = estrisk::sim::simulate_returns(truth, 40, 555);
    std::string csv = "a1,a2,a3,a4,a5\n";
    for (int row = 0; row < 40; ++row) {
        for (int col = 0; col < 5; ++col) {
            csv += estrisk::format_g17(y.data(col, row));
            csv += (col == 4) ? "\n" : ",";
        }
    }
    write(dir / "returns.csv", csv);
    write(dir / "cfg.json", R"({
      "estimator": {"rho": 0.1, "w_sigma": {"kind": "bimodal", "t": 0.75}},
      "output": {"prefix": "est"}
    })");

    auto r = run_cli("gce --returns " + (dir / "returns.csv").string() + " --config " +
                         (dir / "cfg.json").string() + " --out " + dir.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    auto parsed = nlohmann::json::parse(slurp(dir / "est_gce.json"));

    // in-process replica of the estimation pipeline
    estrisk::moments::ShrinkageConfig shrink(0.1, 0.0, Eigen::VectorXd::Zero(5),
                                             Eigen::MatrixXd::Identity(5, 5));
    estrisk::sim::EstimatorConfig est;
    est.rho = 0.1;
    est.w_sigma.kind = estrisk::sim::WeightScheme::Kind::bimodal;
    est.w_sigma.t = 0.75;
    auto w = est.weights(40);
    auto whitened = estrisk::estimators::WhitenedData::from_returns(y, shrink, w.w_sigma);
    auto t = estrisk::moments::effective_profile(w.w_sigma);
    const double delta_hat = estrisk::estimators::estimate_delta(whitened, t);
    Eigen::VectorXd um = Eigen::VectorXd::Constant(5, 1.0 / std::sqrt(5.0));
    const double xi4_gce = estrisk::estimators::gce_xi4(whitened, um, t, delta_hat);

    // bit-for-bit: the CSV was written with the exact 17-digit formatter
    CHECK(parsed["delta_hat"].get<double>() == delta_hat);
    CHECK(parsed["xi"]["xi4_gce"].get<double>() == xi4_gce);
    const auto abc = estrisk::estimators::abc_hat(y, shrink, w);
    CHECK(parsed["abc"]["A"].get<double>() == abc.A);
}

TEST_CASE("gce subcommand: hand-checkable panel and constant returns") {
    auto dir = fresh_dir("estrisk_cli_hand");
    // 2 assets, 4 rows
    write(dir / "hand.csv", "x,y\n0.01,0.02\n-0.01,0.00\n0.02,0.01\n0.00,-0.01\n");
    write(dir / "cfg.json", R"({
      "estimator": {"rho": 0.2},
      "output": {"prefix": "hand"}
    })");
    auto r = run_cli("gce --returns " + (dir / "hand.csv").string() + " --config " +
                         (dir / "cfg.json").string() + " --out " + dir.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    auto parsed = nlohmann::json::parse(slurp(dir / "hand_gce.json"));

    // dense hand computation with explicit inverses
    Eigen::MatrixXd y(2, 4);
    y << 0.01, -0.01, 0.02, 0.00, 0.02, 0.00, 0.01, -0.01;
    Eigen::VectorXd mean = y.rowwise().mean();
    Eigen::MatrixXd centered = y.colwise() - mean;
    Eigen::MatrixXd sw = (centered * centered.transpose()) / 4.0;
    Eigen::MatrixXd shr = 0.8 * sw + 0.2 * Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd inv = shr.inverse();
    const double a_hand = (Eigen::VectorXd::Ones(2).transpose() * inv *
                           Eigen::VectorXd::Ones(2))(0);
    const double b_hand = (Eigen::VectorXd::Ones(2).transpose() * inv * mean)(0);
    const double c_hand = mean.transpose() * inv * mean;
    CHECK(parsed["abc"]["A"].get<double>() == doctest::Approx(a_hand).epsilon(1e-12));
    CHECK(parsed["abc"]["B"].get<double>() == doctest::Approx(b_hand).epsilon(1e-12));
    CHECK(parsed["abc"]["C"].get<double>() == doctest::Approx(c_hand).epsilon(1e-12));

    // constant returns: zero covariance, delta_hat = 0
    write(dir / "const.csv", "x,y\n0.01,0.02\n0.01,0.02\n0.01,0.02\n");
    auto rc = run_cli("gce --returns " + (dir / "const.csv").string() + " --config " +
                          (dir / "cfg.json").string() + " --out " + dir.string(),
                      dir);
    REQUIRE(rc.exit_code == 0);
    auto pc = nlohmann::json::parse(slurp(dir / "hand_gce.json"));
    CHECK(pc["delta_hat"].get<double>() == 0.0);
    CHECK(pc["xi"]["xi4_cnv"].get<double>() == 0.0);

    // malformed CSV exits 1 with location
    write(dir / "bad.csv", "x,y\n1,2\n3,oops\n");
    auto rb = run_cli("gce --returns " + (dir / "bad.csv").string() + " --config " +
                          (dir / "cfg.json").string() + " --out " + dir.string(),
                      dir);
    CHECK(rb.exit_code == 1);
    CHECK(rb.stderr_text.find("row 3") != std::string::npos);
}

TEST_CASE("calibrate subcommand") {
    auto dir = fresh_dir("estrisk_cli_cal");
    write(dir / "cal.json", R"({
      "scenario": {"assets": 10, "vol_band": [0.2, 0.3], "periods_per_year": 1,
                   "correlation_strength": 0.5, "seed": 11},
      "estimator": {"rho": 0.05, "w_sigma": {"kind": "bimodal", "t": 0.75}},
      "experiment": {"n_grid": [25], "trials": 10,
                     "calibration": {"target": "rho", "rho_grid": [0.05, 0.2, 0.5]}},
      "output": {"prefix": "cal"}
    })");
    auto r = run_cli("calibrate --config " + (dir / "cal.json").string() + " --out " +
                         dir.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    auto parsed = nlohmann::json::parse(slurp(dir / "cal_calibration.json"));
    CHECK(parsed["calibration"]["target"].get<std::string>() == "rho");
    CHECK(parsed["calibration"]["cells"][0]["trials_used"].get<int>() == 10);

    // calibrate without a target is an input error
    write(dir / "notarget.json", R"({"experiment": {"n_grid": [25], "trials": 5}})");
    auto rn = run_cli("calibrate --config " + (dir / "notarget.json").string() + " --out " +
                          dir.string(),
                      dir);
    CHECK(rn.exit_code == 1);
}

TEST_CASE("bundled figure configs parse and run in miniature") {
    const fs::path cfg_dir(ESTRISK_CONFIG_DIR);
    auto dir = fresh_dir("estrisk_cli_fig1");
    auto r = run_cli("experiment --config " + (cfg_dir / "fig1.json").string() +
                         " --trials 5 --out " + dir.string(),
                     dir);
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(dir / "fig1_curves.csv");
    // 10 N values x 3 methods x 4 stats + header
    int lines = 0;
    for (char ch : csv) lines += (ch == '\n') ? 1 : 0;
    CHECK(lines == 121);
}
