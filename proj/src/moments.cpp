#include "estrisk/moments.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace estrisk::moments {

namespace {

constexpr double kMuNormTol = 1e-10;

}  // namespace

ReturnsMatrix::ReturnsMatrix(MatrixXd d) : data(std::move(d)) {
    if (data.rows() < 1 || data.cols() < 2) {
        throw ConfigError("ReturnsMatrix: need M >= 1 assets and N >= 2 samples, got " +
                          std::to_string(data.rows()) + "x" + std::to_string(data.cols()));
    }
    if (!data.allFinite()) {
        throw ConfigError("ReturnsMatrix: non-finite entries");
    }
}

WeightProfile::WeightProfile(VectorXd mu_weights, VectorXd sigma_weights)
    : w_mu(std::move(mu_weights)), w_sigma(std::move(sigma_weights)) {
    validate();
}

WeightProfile WeightProfile::uniform(Eigen::Index n) {
    return WeightProfile(VectorXd::Ones(n), VectorXd::Ones(n));
}

void WeightProfile::rescale_mu() {
    const double mean = w_mu.mean();
    if (mean <= 0.0) {
        throw ConfigError("WeightProfile: cannot rescale w_mu with nonpositive mean");
    }
    w_mu /= mean;
}

void WeightProfile::validate() const {
    if (w_mu.size() != w_sigma.size() || w_mu.size() < 1) {
        throw ConfigError("WeightProfile: w_mu and w_sigma must have equal positive length");
    }
    if (!w_mu.allFinite() || !w_sigma.allFinite()) {
        throw ConfigError("WeightProfile: non-finite weights");
    }
    if (w_mu.minCoeff() < 0.0 || w_sigma.minCoeff() < 0.0) {
        throw ConfigError("WeightProfile: weights must be nonnegative");
    }
    if (std::abs(w_mu.mean() - 1.0) > kMuNormTol) {
        throw ConfigError("WeightProfile: w_mu must average to 1 (got mean " +
                          std::to_string(w_mu.mean()) + "); call rescale_mu() to normalize");
    }
}

ShrinkageConfig::ShrinkageConfig(double rho_, double delta_, VectorXd mu0_, MatrixXd sigma0_)
    : rho(rho_), delta(delta_), mu0(std::move(mu0_)), sigma0(std::move(sigma0_)) {
    alpha = rho / (1.0 - rho);
    beta = delta / (1.0 - delta);
    validate();
}

void ShrinkageConfig::validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) {
        throw ConfigError("ShrinkageConfig: rho must lie in [0, 1)");
    }
    if (!(delta >= 0.0 && delta <= 1.0)) {
        throw ConfigError("ShrinkageConfig: delta must lie in [0, 1]");
    }
    if (sigma0.rows() != sigma0.cols() || sigma0.rows() != mu0.size()) {
        throw ConfigError("ShrinkageConfig: mu0/sigma0 dimension mismatch");
    }
    if (!sigma0.isApprox(sigma0.transpose(), 1e-12)) {
        throw ConfigError("ShrinkageConfig: sigma0 must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma0, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0) {
        throw ConfigError("ShrinkageConfig: sigma0 must be positive definite");
    }
    const double expected_alpha = rho / (1.0 - rho);
    if (std::abs(alpha - expected_alpha) > 1e-15 * std::max(1.0, expected_alpha)) {
        throw ConfigError("ShrinkageConfig: alpha inconsistent with rho");
    }
}

VectorXd sample_mean(const ReturnsMatrix& y) {
    return y.data.rowwise().mean();
}

MatrixXd sample_cov(const ReturnsMatrix& y) {
    if (y.samples() < 2) {
        throw ConfigError("sample_cov: need at least two observations");
    }
    const double n = static_cast<double>(y.samples());
    MatrixXd centered = y.data.colwise() - y.data.rowwise().mean().eval();
    MatrixXd cov = (centered * centered.transpose()) / n;
    return 0.5 * (cov + cov.transpose());
}

VectorXd weighted_mean(const ReturnsMatrix& y, const WeightProfile& w) {
    w.validate();
    if (w.w_mu.size() != y.samples()) {
        throw ConfigError("weighted_mean: weight length does not match sample count");
    }
    return (y.data * w.w_mu) / static_cast<double>(y.samples());
}

MatrixXd weighted_cov(const ReturnsMatrix& y, const WeightProfile& w) {
    w.validate();
    if (w.w_mu.size() != y.samples()) {
        throw ConfigError("weighted_cov: weight length does not match sample count");
    }
    const double n = static_cast<double>(y.samples());
    VectorXd mu_w = (y.data * w.w_mu) / n;
    // Columns of Y (I - (1/N) W_mu 1 1') are y_n - mu_w; scale each by
    // sqrt(w_sigma) so the product reproduces the matrix form exactly.
    MatrixXd centered = y.data.colwise() - mu_w;
    MatrixXd weighted = centered * w.w_sigma.cwiseSqrt().asDiagonal();
    MatrixXd cov = (weighted * weighted.transpose()) / n;
    return 0.5 * (cov + cov.transpose());
}

VectorXd shrink_mean(const VectorXd& mu_hat, const ShrinkageConfig& cfg) {
    if (mu_hat.size() != cfg.mu0.size()) {
        throw ConfigError("shrink_mean: dimension mismatch");
    }
    return (1.0 - cfg.delta) * mu_hat + cfg.delta * cfg.mu0;
}

MatrixXd shrink_cov(const MatrixXd& s, const ShrinkageConfig& cfg) {
    if (s.rows() != cfg.sigma0.rows() || s.cols() != cfg.sigma0.cols()) {
        throw ConfigError("shrink_cov: dimension mismatch");
    }
    MatrixXd shrunk = (1.0 - cfg.rho) * s + cfg.rho * cfg.sigma0;
    if (cfg.rho == 0.0) {
        Eigen::LLT<MatrixXd> llt(shrunk);
        if (llt.info() != Eigen::Success) {
            throw ComputeError(
                "shrink_cov: rho = 0 left a non-invertible covariance "
                "(expected whenever M > N); use rho > 0");
        }
    }
    return shrunk;
}

VectorXd effective_profile(const VectorXd& w_sigma) {
    const Eigen::Index n = w_sigma.size();
    if (n < 1 || !w_sigma.allFinite() || w_sigma.minCoeff() < 0.0) {
        throw ConfigError("effective_profile: w_sigma must be nonnegative and finite");
    }
    MatrixXd p = MatrixXd::Identity(n, n) -
                 MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
    MatrixXd m = p * w_sigma.asDiagonal() * p;
    m = 0.5 * (m + m.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
    VectorXd vals = es.eigenvalues();
    const double clamp_tol = 1e-12 * std::max(1.0, std::abs(vals.maxCoeff()));
    VectorXd out(n);
    // SelfAdjointEigenSolver sorts ascending; flip to descending.
    for (Eigen::Index i = 0; i < n; ++i) {
        double v = vals(n - 1 - i);
        if (v < 0.0) {
            if (v < -clamp_tol) {
                throw ComputeError("effective_profile: eigenvalue below clamp tolerance");
            }
            v = 0.0;
        }
        out(i) = v;
    }
    return out;
}

}  // namespace estrisk::moments
