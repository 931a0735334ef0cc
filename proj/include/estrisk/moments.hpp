#pragma once

#include <Eigen/Dense>

#include "estrisk/common.hpp"

namespace estrisk::moments {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Asset return observations, one column per time point (oldest first),
// one row per asset. M = rows(), N = cols().
struct ReturnsMatrix {
    MatrixXd data;

    ReturnsMatrix() = default;
    explicit ReturnsMatrix(MatrixXd d);

    Eigen::Index assets() const { return data.rows(); }
    Eigen::Index samples() const { return data.cols(); }
};

// Per-observation weights: w_mu scales observations inside the mean,
// w_sigma inside the covariance. The mean weights must average to one,
// (1/N) sum_n w_mu[n] = 1, so the weighted mean stays unbiased.
struct WeightProfile {
    VectorXd w_mu;
    VectorXd w_sigma;

    WeightProfile() = default;
    WeightProfile(VectorXd mu_weights, VectorXd sigma_weights);

    static WeightProfile uniform(Eigen::Index n);
    // Rescales w_mu so its average is exactly one.
    void rescale_mu();

    void validate() const;
};

// Shrinkage targets and intensities. rho pulls the covariance toward
// sigma0, delta pulls the mean toward mu0. rho = 1 is disallowed because
// the derived regularizer alpha = rho/(1-rho) must stay finite.
struct ShrinkageConfig {
    double rho = 0.0;
    double delta = 0.0;
    VectorXd mu0;
    MatrixXd sigma0;
    double alpha = 0.0;  // rho/(1-rho), fixed at construction
    double beta = 0.0;   // delta/(1-delta)

    ShrinkageConfig() = default;
    ShrinkageConfig(double rho_, double delta_, VectorXd mu0_, MatrixXd sigma0_);

    void validate() const;
};

// (1/N) Y 1
VectorXd sample_mean(const ReturnsMatrix& y);

// (1/N) Y (I - (1/N) 1 1') Y'.  Divisor is N, not N-1.
MatrixXd sample_cov(const ReturnsMatrix& y);

// (1/N) Y W_mu 1
VectorXd weighted_mean(const ReturnsMatrix& y, const WeightProfile& w);

// (1/N) Y (I - (1/N) W_mu 1 1') W_sigma (I - (1/N) 1 1' W_mu) Y',
// i.e. observations centered at the weighted mean before weighting.
MatrixXd weighted_cov(const ReturnsMatrix& y, const WeightProfile& w);

// (1-delta) mu_hat + delta mu0
VectorXd shrink_mean(const VectorXd& mu_hat, const ShrinkageConfig& cfg);

// (1-rho) s + rho sigma0. Throws ComputeError when rho = 0 leaves a
// singular matrix (always the case for M > N sample covariances).
MatrixXd shrink_cov(const MatrixXd& s, const ShrinkageConfig& cfg);

// Effective temporal weight profile: the eigenvalues of P W_sigma P with
// P = I - (1/N) 1 1', sorted descending and clamped at zero. This is the
// spectrum the RMT layer sees after mean-centering the weighted sample
// covariance.
VectorXd effective_profile(const VectorXd& w_sigma);

}  // namespace estrisk::moments
