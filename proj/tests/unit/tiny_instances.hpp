#pragma once

// Small fully-specified problem instances on which the shrinkage quadratic
// forms decompose exactly into the whitened xi terms. Shared between the
// unit tests and the acceptance suite.

#include <random>

#include <Eigen/Dense>

#include "oracles.hpp"

namespace tiny {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Returns generated as Y = mu 1' + Sigma^{1/2} X with the covariance
// estimated as (1/N) Sigma^{1/2} X T X' Sigma^{1/2} and the mean weighted
// by W_mu = T. T is rescaled to average one so the weighted mean stays
// unbiased and the direction vector T^{1/2} 1 / sqrt(N) has unit norm.
struct Instance {
    int m = 0;
    int n = 0;
    double rho = 0.0;
    double alpha = 0.0;
    VectorXd mu;
    MatrixXd sigma;
    MatrixXd sigma0;
    MatrixXd x;
    VectorXd t;

    MatrixXd sigma0_inv_sqrt() const {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma0);
        return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
               es.eigenvectors().transpose();
    }

    MatrixXd sigma_sqrt() const {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
        return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
               es.eigenvectors().transpose();
    }

    // weighted sample covariance of the structural model
    MatrixXd sigma_w() const {
        MatrixXd sx = sigma_sqrt() * x;
        return (sx * t.asDiagonal() * sx.transpose()) / static_cast<double>(n);
    }

    MatrixXd sigma_shr() const { return (1.0 - rho) * sigma_w() + rho * sigma0; }

    // weighted sample mean with W_mu = T
    VectorXd mu_w() const {
        return mu + (sigma_sqrt() * x * t) / static_cast<double>(n);
    }

    // whitened data matrix: Sigma0^{-1/2} Sigma^{1/2} X T^{1/2}
    MatrixXd ytilde() const {
        return sigma0_inv_sqrt() * sigma_sqrt() * x * t.cwiseSqrt().asDiagonal();
    }

    MatrixXd r() const {
        MatrixXd out = sigma0_inv_sqrt() * sigma * sigma0_inv_sqrt();
        return 0.5 * (out + out.transpose());
    }

    VectorXd upsilon_ones() const {
        return sigma0_inv_sqrt() * VectorXd::Ones(m) / std::sqrt(static_cast<double>(m));
    }

    VectorXd upsilon_mu() const { return sigma0_inv_sqrt() * mu; }

    VectorXd upsilon_n() const {
        return t.cwiseSqrt() / std::sqrt(static_cast<double>(n));
    }
};

inline Instance random_instance(std::mt19937_64& rng, int max_m = 4, int max_n = 6) {
    std::uniform_real_distribution<double> urho(0.05, 0.6);
    std::uniform_real_distribution<double> ut(0.2, 1.8);
    Instance inst;
    inst.m = 2 + static_cast<int>(rng() % static_cast<unsigned>(max_m - 1));
    inst.n = inst.m + 1 + static_cast<int>(rng() % static_cast<unsigned>(max_n - inst.m));
    inst.rho = urho(rng);
    inst.alpha = inst.rho / (1.0 - inst.rho);
    inst.mu = 0.2 * oracles::random_gaussian(rng, inst.m, 1).col(0);
    inst.sigma = oracles::random_spd(rng, inst.m, 0.3, 2.0);
    inst.sigma0 = oracles::random_spd(rng, inst.m, 0.4, 1.6);
    inst.x = oracles::random_gaussian(rng, inst.m, inst.n);
    inst.t.resize(inst.n);
    for (int i = 0; i < inst.n; ++i) inst.t(i) = ut(rng);
    inst.t *= static_cast<double>(inst.n) / inst.t.sum();  // average one
    return inst;
}

}  // namespace tiny
