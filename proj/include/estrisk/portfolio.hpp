#pragma once

#include <Eigen/Dense>

#include "estrisk/common.hpp"

namespace estrisk::portfolio {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Mean vector and covariance matrix driving a single-period allocation.
// The covariance must be usable in linear solves: construction rejects
// matrices whose estimated reciprocal condition falls below 1e-14.
struct Moments {
    VectorXd mu;
    MatrixXd sigma;

    Moments() = default;
    Moments(VectorXd mu_, MatrixXd sigma_);

    Eigen::Index assets() const { return mu.size(); }
};

// Allocation weights under the budget constraint w' 1 = 1. Short positions
// (negative weights) are allowed.
struct Weights {
    VectorXd w;
};

// The three fundamental quadratic forms of mean-variance analysis:
// A = 1' Sigma^-1 1, B = 1' Sigma^-1 mu, C = mu' Sigma^-1 mu.
struct AbcScalars {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};

AbcScalars abc(const Moments& m);

// Minimum-variance weights hitting target mean return mu_d. Requires a
// non-degenerate frontier (mu not proportional to 1); otherwise throws a
// ComputeError pointing the caller at gmvp().
Weights mv_portfolio(const Moments& m, double mu_d);

// Global minimum variance portfolio Sigma^-1 1 / (1' Sigma^-1 1).
Weights gmvp(const Moments& m);

// Tangency portfolio Sigma^-1 mu / (1' Sigma^-1 mu); undefined when
// 1' Sigma^-1 mu vanishes.
Weights tangency(const Moments& m);

// Equally weighted portfolio 1/M.
Weights ewp(Eigen::Index m);

struct Performance {
    double mean = 0.0;    // w' mu
    double risk = 0.0;    // sqrt(w' Sigma w)
    double sharpe = 0.0;  // mean / risk
};

// Out-of-sample performance of weights w evaluated under the true moments.
Performance realized_performance(const Weights& w, const Moments& truth);

}  // namespace estrisk::portfolio
