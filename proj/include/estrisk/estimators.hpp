#pragma once

#include <optional>

#include <Eigen/Dense>

#include "estrisk/common.hpp"
#include "estrisk/moments.hpp"

namespace estrisk::estimators {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Whitened observation matrix Ytilde (M x N) together with its scaled Gram
// matrix S = (1/N) Ytilde Ytilde' and the shrinkage regularizer alpha.
// In simulation Ytilde = R^{1/2} X T^{1/2}; in estimation mode it is built
// from observed returns by centering at the plain sample mean, scaling the
// columns by sqrt(w_sigma) and whitening with Sigma0^{-1/2}.
//
// S is eigendecomposed once at construction so every resolvent quadratic
// form and trace afterwards is O(M^2) or cheaper.
class WhitenedData {
public:
    WhitenedData(MatrixXd ytilde, double alpha);

    static WhitenedData from_returns(const moments::ReturnsMatrix& y,
                                     const moments::ShrinkageConfig& cfg,
                                     const VectorXd& w_sigma);

    Eigen::Index m() const { return s_.rows(); }
    Eigen::Index n() const { return ytilde_.cols(); }
    double alpha() const { return alpha_; }
    const MatrixXd& ytilde() const { return ytilde_; }
    const MatrixXd& s() const { return s_; }
    const VectorXd& s_eigenvalues() const { return s_eigs_; }

    // (S + alpha I)^-1 v
    VectorXd resolvent_apply(const VectorXd& v) const;
    // (1/N) tr[ S (S + alpha I)^-1 ]
    double trace_s_resolvent() const;

private:
    MatrixXd ytilde_;
    MatrixXd s_;
    double alpha_;
    VectorXd s_eigs_;
    MatrixXd s_vecs_;
};

enum class XiFlavor { empirical, plugin, gce };

struct XiSet {
    double xi1 = 0.0;
    double xi2 = 0.0;
    double xi3 = 0.0;
    double xi4 = 0.0;
    double xi5 = 0.0;
    double xi6 = 0.0;
    XiFlavor flavor = XiFlavor::empirical;
};

// The six sample quadratic forms evaluated on data. xi4..xi6 require the
// true whitened covariance R, so this flavor is simulation-only ground
// truth for validating the estimators below.
XiSet empirical_xi(const WhitenedData& d, const VectorXd& upsilon_m,
                   const VectorXd& upsilon_n, const MatrixXd& r);

// Naive plug-in estimator of xi4: upsilon' (S+aI)^-1 S (S+aI)^-1 upsilon,
// i.e. the unknown R replaced by the sample S.
double plugin_xi4(const WhitenedData& d, const VectorXd& upsilon_m);

// Plug-in estimator of xi6 computed in the N x N Gram domain,
// upsilon' G^2 (G + aI)^-2 upsilon with G = (1/N) Ytilde' Ytilde.
double plugin_xi6(const WhitenedData& d, const VectorXd& upsilon_n);

// Same value computed in the M x M domain; kept as an algebraically
// independent route for the dual-form consistency check.
double plugin_xi6_m_domain(const WhitenedData& d, const VectorXd& upsilon_n);

// Data-only estimate of the fixed-point scalar delta: the unique
// nonnegative root of
//   (1/N) tr[ S (S + alpha I)^-1 ] = delta_hat (1/N) tr[ T (I + delta_hat T)^-1 ].
// Throws ComputeError when the left side reaches the right side's supremum
// (no finite root).
double estimate_delta(const WhitenedData& d, const VectorXd& t);

// The root-solve behind estimate_delta, usable when the trace has been
// computed elsewhere: unique nonnegative delta with
// lhs = delta (1/N) tr[T (I + delta T)^-1]. Bracketed bisection; the right
// side is strictly increasing whenever some t_n > 0.
double solve_delta_from_trace(double lhs, const VectorXd& t);

// Bias-corrected estimators: gce_xi4 = a * plugin_xi4 and
// gce_xi6 = a * plugin_xi6 + b, with
//   a = 1 / ((1/N) tr[ T (I + delta_hat T)^-2 ])
//   b = -delta_hat^2 upsilon_n' T^2 (I + delta_hat T)^-2 upsilon_n * a.
double gce_xi4(const WhitenedData& d, const VectorXd& upsilon_m, const VectorXd& t,
               double delta_hat);
double gce_xi6(const WhitenedData& d, const VectorXd& upsilon_n, const VectorXd& t,
               double delta_hat);

struct AbcEstimates {
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
    // True-covariance sandwich forms 1' Shat^-1 Sigma Shat^-1 1 and
    // mu_shr' Shat^-1 Sigma Shat^-1 mu_shr; present only when the caller
    // supplies the true Sigma (simulation mode).
    std::optional<double> sandwich_ones;
    std::optional<double> sandwich_mu;
};

// Direct linear-algebra evaluation of A-hat, B-hat, C-hat from the
// shrunk moments, with no xi decomposition involved. The covariance is
// centered at the plain sample mean and weighted by w.w_sigma.
AbcEstimates abc_hat(const moments::ReturnsMatrix& y, const moments::ShrinkageConfig& cfg,
                     const moments::WeightProfile& w,
                     const MatrixXd* truth_sigma = nullptr);

}  // namespace estrisk::estimators
