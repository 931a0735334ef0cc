#include <doctest.h>

#include <random>

#include "estrisk/rmt.hpp"
#include "oracles.hpp"

using namespace estrisk;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Positive root of alpha d^2 + (1 + alpha - c) d - c = 0, the fixed point
// for R = I_M, T = I_N with c = M/N.
double isotropic_delta(double alpha, double c) {
    const double b = 1.0 + alpha - c;
    return (-b + std::sqrt(b * b + 4.0 * alpha * c)) / (2.0 * alpha);
}

rmt::Inputs isotropic_inputs(int m, int n, double alpha) {
    return rmt::Inputs(MatrixXd::Identity(m, m), VectorXd::Ones(n), alpha,
                       VectorXd::Constant(m, 1.0 / std::sqrt(static_cast<double>(m))),
                       VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n))));
}

rmt::Inputs random_inputs(std::mt19937_64& rng, int m, int n, double alpha) {
    MatrixXd r = oracles::random_spd(rng, m, 0.05, 5.0);
    std::uniform_real_distribution<double> ut(0.0, 2.0);
    VectorXd t(n);
    for (int i = 0; i < n; ++i) t(i) = ut(rng);
    VectorXd um = oracles::random_gaussian(rng, m, 1).col(0);
    VectorXd un = oracles::random_gaussian(rng, n, 1).col(0).normalized();
    return rmt::Inputs(std::move(r), std::move(t), alpha, std::move(um), std::move(un));
}

}  // namespace

TEST_CASE("fixed point: scalar closed form") {
    // M = N = 1, R = T = [1], alpha = 1: delta solves d^2 + d - 1 = 0
    rmt::Inputs inp(MatrixXd::Identity(1, 1), VectorXd::Ones(1), 1.0, VectorXd::Ones(1),
                    VectorXd::Ones(1));
    auto fp = rmt::solve_fixed_point(inp);
    CHECK(fp.delta == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-12));
    CHECK(fp.delta_tilde == doctest::Approx(1.0 / (1.0 + fp.delta)).epsilon(1e-12));
    CHECK(fp.residual <= 1e-12);
}

TEST_CASE("fixed point: isotropic quadratic family") {
    auto fp = rmt::solve_fixed_point(isotropic_inputs(64, 128, 1.0));
    CHECK(fp.delta == doctest::Approx(isotropic_delta(1.0, 0.5)).epsilon(1e-12));
    CHECK(fp.delta == doctest::Approx(0.280776).epsilon(1e-6));
    CHECK(fp.delta_tilde == doctest::Approx(1.0 / (1.0 + fp.delta)).epsilon(1e-12));

    for (double alpha : {0.02, 0.3, 2.0}) {
        for (auto [m, n] : {std::pair{30, 120}, {50, 50}, {80, 40}}) {
            auto f = rmt::solve_fixed_point(isotropic_inputs(m, n, alpha));
            const double c = static_cast<double>(m) / n;
            CHECK(std::abs(f.delta - isotropic_delta(alpha, c)) < 1e-10);
        }
    }
}

TEST_CASE("fixed point: zero profile decouples") {
    std::mt19937_64 rng(211);
    MatrixXd r = oracles::random_spd(rng, 6, 0.2, 3.0);
    const double alpha = 0.7;
    rmt::Inputs inp(r, VectorXd::Zero(9), alpha,
                    VectorXd::Ones(6), VectorXd::Ones(9).normalized());
    auto fp = rmt::solve_fixed_point(inp);
    CHECK(fp.delta_tilde == doctest::Approx(0.0));
    CHECK(fp.delta == doctest::Approx(r.trace() / (9.0 * alpha)).epsilon(1e-12));
}

TEST_CASE("appendix identities on random instances") {
    std::mt19937_64 rng(223);
    std::uniform_real_distribution<double> ua(0.05 / 0.95, 1.0);
    for (int rep = 0; rep < 25; ++rep) {
        const int m = 4 + static_cast<int>(rng() % 40);
        const int n = 4 + static_cast<int>(rng() % 40);
        auto inp = random_inputs(rng, m, n, ua(rng));
        auto fp = rmt::solve_fixed_point(inp);
        auto res = rmt::verify_appendix_identities(inp, fp);
        CHECK(res.max_abs() < 1e-8);
    }

    // isotropic instance: residuals at solver noise level
    auto inp = isotropic_inputs(32, 64, 0.4);
    auto res = rmt::verify_appendix_identities(inp, rmt::solve_fixed_point(inp));
    CHECK(res.max_abs() < 1e-10);

    // zero profile: the T-side identity reduces to 0 = 0
    rmt::Inputs zt(MatrixXd::Identity(5, 5), VectorXd::Zero(7), 0.5, VectorXd::Ones(5),
                   VectorXd::Ones(7).normalized());
    auto rz = rmt::verify_appendix_identities(zt, rmt::solve_fixed_point(zt));
    CHECK(rz.max_abs() < 1e-12);
}

TEST_CASE("delta decreases in alpha") {
    std::mt19937_64 rng(227);
    auto base = random_inputs(rng, 24, 36, 0.1);
    double prev = std::numeric_limits<double>::infinity();
    for (double alpha : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
        rmt::Inputs inp(MatrixXd(base.r_eigenvalues().asDiagonal()), base.t(), alpha,
                        base.upsilon_m(), base.upsilon_n());
        auto fp = rmt::solve_fixed_point(inp);
        CHECK(fp.delta < prev);
        prev = fp.delta;
    }
}

TEST_CASE("ade_xi closed forms") {
    // zero direction vector
    rmt::Inputs z(MatrixXd::Identity(4, 4), VectorXd::Ones(8), 0.5, VectorXd::Zero(4),
                  VectorXd::Ones(8).normalized());
    auto fpz = rmt::solve_fixed_point(z);
    auto xiz = rmt::ade_xi(z, fpz);
    CHECK(xiz.xi1 == 0.0);
    CHECK(xiz.xi4 == 0.0);
    CHECK(xiz.xi2 == 0.0);
    CHECK(xiz.xi5 == 0.0);

    // R = I, unit upsilon_m: xi1 = 1/(delta_tilde + alpha); T = I closed forms
    auto inp = isotropic_inputs(16, 32, 0.8);
    auto fp = rmt::solve_fixed_point(inp);
    auto xi = rmt::ade_xi(inp, fp);
    CHECK(xi.xi1 == doctest::Approx(1.0 / (fp.delta_tilde + 0.8)).epsilon(1e-12));
    CHECK(xi.xi3 == doctest::Approx(fp.delta / (1.0 + fp.delta)).epsilon(1e-12));
    const double gg = fp.gamma * fp.gamma_tilde;
    CHECK(xi.xi6 == doctest::Approx(fp.gamma / ((1.0 - gg) * (1.0 + fp.delta) *
                                                (1.0 + fp.delta)))
                        .epsilon(1e-12));
    CHECK(xi.xi4 == doctest::Approx(1.0 / ((1.0 - gg) * (fp.delta_tilde + 0.8) *
                                           (fp.delta_tilde + 0.8)))
                        .epsilon(1e-12));
}

TEST_CASE("general-z solver agrees with the fixed point at z = -alpha") {
    std::mt19937_64 rng(229);
    for (int rep = 0; rep < 10; ++rep) {
        const int m = 5 + static_cast<int>(rng() % 30);
        const int n = 5 + static_cast<int>(rng() % 30);
        std::uniform_real_distribution<double> ua(0.05, 1.5);
        const double alpha = ua(rng);
        auto inp = random_inputs(rng, m, n, alpha);
        auto fp = rmt::solve_fixed_point(inp);
        MatrixXd r =
            MatrixXd(inp.r_eigenvalues().asDiagonal());  // same spectrum, diagonal basis
        auto gz = rmt::solve_general_z(r, inp.t(), -alpha);
        CHECK(gz.x == doctest::Approx(fp.delta_tilde).epsilon(1e-10));
        CHECK(gz.e == doctest::Approx(fp.delta).epsilon(1e-10));
        CHECK(gz.e_prime == doctest::Approx(fp.zeta).epsilon(1e-8));
        CHECK(gz.x_prime == doctest::Approx(fp.zeta_tilde).epsilon(1e-8));
        // per-asset normalization of the R-side trace: delta = (M/N) e_m
        const double e_per_asset = (static_cast<double>(n) / m) * gz.e;
        CHECK(fp.delta == doctest::Approx((static_cast<double>(m) / n) * e_per_asset)
                              .epsilon(1e-12));
    }
}

TEST_CASE("general-z isotropic closed form and deep-z limit") {
    // R = I, T = I, M = N, z = -1: same quadratic as the fixed point with
    // alpha = 1, c = 1
    auto gz = rmt::solve_general_z(MatrixXd::Identity(20, 20), VectorXd::Ones(20), -1.0);
    const double expected = isotropic_delta(1.0, 1.0);
    CHECK(gz.e == doctest::Approx(expected).epsilon(1e-10));
    CHECK(gz.x == doctest::Approx(1.0 / (1.0 + expected)).epsilon(1e-10));

    std::mt19937_64 rng(233);
    MatrixXd r = oracles::random_spd(rng, 8, 0.3, 2.0);
    std::uniform_real_distribution<double> ut(0.0, 2.0);
    VectorXd t(12);
    for (int i = 0; i < 12; ++i) t(i) = ut(rng);
    auto deep = rmt::solve_general_z(r, t, -1e9);
    CHECK(std::abs(deep.e) < 1e-8);
    CHECK(deep.x == doctest::Approx(t.mean()).epsilon(1e-8));

    CHECK_THROWS_AS(rmt::solve_general_z(r, t, 0.5), ConfigError);
}

TEST_CASE("ade_gmvp_variance closed form and large-N limit") {
    // Sigma = Sigma0 = I so R = I: variance = 1/(M (1 - gamma gamma_tilde))
    auto inp = isotropic_inputs(40, 80, 0.3);
    auto fp = rmt::solve_fixed_point(inp);
    const double var = rmt::ade_gmvp_variance(inp, fp, 40, 0.3 / 1.3);
    CHECK(var == doctest::Approx(1.0 / (40.0 * (1.0 - fp.gamma * fp.gamma_tilde)))
                     .epsilon(1e-12));

    // c -> 0 with alpha -> 0 recovers the exact GMVP variance 1/(1' Sigma^-1 1)
    std::mt19937_64 rng(239);
    const int m = 6;
    MatrixXd sigma = oracles::random_spd(rng, m, 0.5, 2.0);
    const int n = 200000;
    const double alpha = 1e-8;
    VectorXd um = VectorXd::Ones(m) / std::sqrt(static_cast<double>(m));
    rmt::Inputs lim(sigma, VectorXd::Ones(n), alpha, um,
                    VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n))));
    auto fpl = rmt::solve_fixed_point(lim);
    const double predicted = rmt::ade_gmvp_variance(lim, fpl, m, alpha / (1.0 + alpha));
    const double exact = 1.0 / (VectorXd::Ones(m).transpose() * sigma.inverse() *
                                VectorXd::Ones(m))(0);
    CHECK(predicted == doctest::Approx(exact).epsilon(1e-3));
}

TEST_CASE("invalid inputs are rejected") {
    CHECK_THROWS_AS(rmt::Inputs(MatrixXd::Identity(3, 3), VectorXd::Ones(4), 0.0,
                                VectorXd::Ones(3), VectorXd::Ones(4).normalized()),
                    ConfigError);
    CHECK_THROWS_AS(rmt::Inputs(MatrixXd::Identity(3, 3), VectorXd::Ones(4), 0.5,
                                VectorXd::Ones(3), VectorXd::Ones(4)),  // norm 2, not 1
                    ConfigError);
    VectorXd neg_t(3);
    neg_t << 1.0, -0.5, 0.3;
    CHECK_THROWS_AS(rmt::Inputs(MatrixXd::Identity(3, 3), neg_t, 0.5, VectorXd::Ones(3),
                                VectorXd::Ones(3).normalized()),
                    ConfigError);
}
