#pragma once

#include <Eigen/Dense>

#include "estrisk/common.hpp"

namespace estrisk::rmt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Deterministic inputs of the asymptotic layer: the whitened population
// covariance R (symmetric, nonnegative definite), the temporal weight
// spectrum t, the shrinkage regularizer alpha = rho/(1-rho) > 0, and the
// direction vectors of the quadratic forms (upsilon_n must have unit norm).
//
// Construction eigendecomposes R once; every trace functional and
// quadratic form the solvers need afterwards costs O(M) or O(N).
class Inputs {
public:
    Inputs(MatrixXd r, VectorXd t, double alpha, VectorXd upsilon_m, VectorXd upsilon_n);

    Eigen::Index m() const { return r_eigs_.size(); }
    Eigen::Index n() const { return t_.size(); }
    double alpha() const { return alpha_; }
    const VectorXd& t() const { return t_; }
    const VectorXd& upsilon_m() const { return upsilon_m_; }
    const VectorXd& upsilon_n() const { return upsilon_n_; }
    const VectorXd& r_eigenvalues() const { return r_eigs_; }
    // Coefficients of upsilon_m in the eigenbasis of R.
    const VectorXd& upsilon_m_coeffs() const { return um_coeffs_; }

private:
    VectorXd t_;
    double alpha_;
    VectorXd upsilon_m_;
    VectorXd upsilon_n_;
    VectorXd r_eigs_;
    VectorXd um_coeffs_;
};

// Solution of the coupled scalar equations
//   delta_tilde = (1/N) tr[ T (I + delta T)^-1 ]
//   delta       = (1/N) tr[ R (delta_tilde R + alpha I)^-1 ]
// together with the derived spectral moments
//   gamma       = (1/N) tr[ (R (delta_tilde R + alpha I)^-1)^2 ]
//   gamma_tilde = (1/N) tr[ (T (I + delta T)^-1)^2 ]
// and the resolvent-derivative scalars zeta, zeta_tilde (zeta_tilde is
// always -gamma_tilde * zeta).
struct FixedPoint {
    double delta = 0.0;
    double delta_tilde = 0.0;
    double gamma = 0.0;
    double gamma_tilde = 0.0;
    double zeta = 0.0;
    double zeta_tilde = 0.0;
    double residual = 0.0;
    int iterations = 0;
};

// Alternating substitution from delta = 0, with a bisection fallback on
// the monotone scalar residual. Throws ComputeError on non-convergence or
// when gamma * gamma_tilde >= 1 (invalid regime, e.g. alpha too small for
// a heavy weight profile).
FixedPoint solve_fixed_point(const Inputs& inp);

// Resolvent fixed point at a general real z < 0:
//   e(z) = (1/N) tr[ R (x(z) R - z I)^-1 ]
//   x(z) = (1/N) tr[ T (I + e(z) T)^-1 ]
// normalized so that e(-alpha) = delta and x(-alpha) = delta_tilde hold
// exactly; the per-asset normalization (N/M) e is a caller-side rescale.
// e_prime/x_prime are the z-derivatives, with e_prime(-alpha) = zeta and
// x_prime(-alpha) = zeta_tilde.
struct GeneralZ {
    double z = 0.0;
    double e = 0.0;
    double x = 0.0;
    double e_prime = 0.0;
    double x_prime = 0.0;
};

GeneralZ solve_general_z(const MatrixXd& r, const VectorXd& t, double z);

// Asymptotic deterministic equivalents of the six sample quadratic forms.
// xi2 and xi5 vanish in the double limit and are reported as exact zeros.
struct XiAde {
    double xi1 = 0.0;
    double xi2 = 0.0;
    double xi3 = 0.0;
    double xi4 = 0.0;
    double xi5 = 0.0;
    double xi6 = 0.0;
};

XiAde ade_xi(const Inputs& inp, const FixedPoint& fp);

// Residuals of the internal consistency identities tying the fixed point
// to its resolvent derivatives. All should sit at numerical noise level
// (<= 1e-8) on any solved instance; this is the executable cross-check of
// the scalar calculus behind the deterministic equivalents.
struct IdentityResiduals {
    double trace_r = 0.0;        // delta - delta_tilde*gamma vs alpha * tr2_R
    double trace_t = 0.0;        // delta_tilde - delta*gamma_tilde vs tr2_T
    double deriv_tilde = 0.0;    // delta_tilde + alpha*zeta_tilde vs tr2_T/(1-gg)
    double deriv = 0.0;          // delta - alpha*zeta vs gamma*tr2_T/(1-gg)
    double zeta_relation = 0.0;  // zeta_tilde + gamma_tilde*zeta

    double max_abs() const;
};

IdentityResiduals verify_appendix_identities(const Inputs& inp, const FixedPoint& fp);

// Predicted realized variance of the sample GMVP, assembled from the
// deterministic equivalents with upsilon_m = Sigma0^{-1/2} 1 / sqrt(M):
// the shrinkage factors (1-rho) cancel between numerator and denominator.
double ade_gmvp_variance(const Inputs& inp, const FixedPoint& fp, Eigen::Index m, double rho);

}  // namespace estrisk::rmt
