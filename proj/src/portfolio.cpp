#include "estrisk/portfolio.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace estrisk::portfolio {

namespace {

constexpr double kRcondFloor = 1e-14;

Eigen::LLT<MatrixXd> factor(const Moments& m) {
    Eigen::LLT<MatrixXd> llt(m.sigma);
    if (llt.info() != Eigen::Success) {
        throw ComputeError("portfolio: covariance factorization failed (singular sigma)");
    }
    return llt;
}

}  // namespace

Moments::Moments(VectorXd mu_, MatrixXd sigma_) : mu(std::move(mu_)), sigma(std::move(sigma_)) {
    if (sigma.rows() != sigma.cols() || sigma.rows() != mu.size() || mu.size() < 1) {
        throw ConfigError("Moments: dimension mismatch");
    }
    if (!mu.allFinite() || !sigma.allFinite()) {
        throw ConfigError("Moments: non-finite entries");
    }
    if (!sigma.isApprox(sigma.transpose(), 1e-10)) {
        throw ConfigError("Moments: sigma must be symmetric");
    }
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success || llt.rcond() < kRcondFloor) {
        throw ComputeError("Moments: sigma is singular or too ill-conditioned (rcond < 1e-14)");
    }
}

AbcScalars abc(const Moments& m) {
    auto llt = factor(m);
    VectorXd ones = VectorXd::Ones(m.assets());
    VectorXd si_one = llt.solve(ones);
    VectorXd si_mu = llt.solve(m.mu);
    AbcScalars out;
    out.A = ones.dot(si_one);
    out.B = ones.dot(si_mu);
    out.C = m.mu.dot(si_mu);
    return out;
}

Weights mv_portfolio(const Moments& m, double mu_d) {
    auto llt = factor(m);
    VectorXd ones = VectorXd::Ones(m.assets());
    VectorXd si_one = llt.solve(ones);
    VectorXd si_mu = llt.solve(m.mu);
    const double a = ones.dot(si_one);
    const double b = ones.dot(si_mu);
    const double c = m.mu.dot(si_mu);
    const double det = a * c - b * b;
    if (det <= 1e-12 * a * c) {
        throw ComputeError(
            "mv_portfolio: degenerate frontier (mu is proportional to 1); "
            "the return constraint is redundant, use gmvp() instead");
    }
    Weights out;
    out.w = ((c - mu_d * b) / det) * si_one + ((mu_d * a - b) / det) * si_mu;
    return out;
}

Weights gmvp(const Moments& m) {
    auto llt = factor(m);
    VectorXd si_one = llt.solve(VectorXd::Ones(m.assets()));
    Weights out;
    out.w = si_one / si_one.sum();
    return out;
}

Weights tangency(const Moments& m) {
    auto llt = factor(m);
    VectorXd si_mu = llt.solve(m.mu);
    const double b = si_mu.sum();
    const double scale = std::max(1.0, si_mu.cwiseAbs().maxCoeff());
    if (std::abs(b) <= 1e-12 * scale) {
        throw ComputeError("tangency: 1' Sigma^-1 mu vanishes, tangency portfolio undefined");
    }
    Weights out;
    out.w = si_mu / b;
    return out;
}

Weights ewp(Eigen::Index m) {
    if (m < 1) {
        throw ConfigError("ewp: need at least one asset");
    }
    Weights out;
    out.w = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    return out;
}

Performance realized_performance(const Weights& w, const Moments& truth) {
    if (w.w.size() != truth.assets()) {
        throw ConfigError("realized_performance: dimension mismatch");
    }
    Performance p;
    p.mean = w.w.dot(truth.mu);
    const double var = w.w.dot(truth.sigma * w.w);
    if (var <= 0.0) {
        throw ComputeError("realized_performance: portfolio variance is not positive");
    }
    p.risk = std::sqrt(var);
    p.sharpe = p.mean / p.risk;
    return p;
}

}  // namespace estrisk::portfolio
