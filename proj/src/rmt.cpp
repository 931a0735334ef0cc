#include "estrisk/rmt.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace estrisk::rmt {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kStepTol = 1e-13;
constexpr double kResidualTol = 1e-12;

// (1/N) sum_i lam_i / (dt*lam_i + a)^p over an eigenvalue vector, and the
// matching T-side sums. N is always the temporal dimension.
double trace_r(const VectorXd& lam, double dt, double a, int p, double n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double d = dt * lam(i) + a;
        acc += (p == 1) ? lam(i) / d : lam(i) / (d * d);
    }
    return acc / n;
}

double trace_r_sq(const VectorXd& lam, double dt, double a, double n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double q = lam(i) / (dt * lam(i) + a);
        acc += q * q;
    }
    return acc / n;
}

double trace_t(const VectorXd& t, double d, int p, double n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double q = 1.0 + d * t(i);
        acc += (p == 1) ? t(i) / q : t(i) / (q * q);
    }
    return acc / n;
}

double trace_t_sq(const VectorXd& t, double d, double n) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double q = t(i) / (1.0 + d * t(i));
        acc += q * q;
    }
    return acc / n;
}

VectorXd clamped_nonnegative(VectorXd v, const char* what) {
    if (!v.allFinite()) {
        throw ConfigError(std::string(what) + ": non-finite entries");
    }
    const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) < 0.0) {
            if (v(i) < -1e-10 * scale) {
                throw ConfigError(std::string(what) + ": significantly negative entry");
            }
            v(i) = 0.0;
        }
    }
    return v;
}

}  // namespace

Inputs::Inputs(MatrixXd r, VectorXd t, double alpha, VectorXd upsilon_m, VectorXd upsilon_n)
    : t_(std::move(t)), alpha_(alpha), upsilon_m_(std::move(upsilon_m)),
      upsilon_n_(std::move(upsilon_n)) {
    if (r.rows() != r.cols() || r.rows() != upsilon_m_.size()) {
        throw ConfigError("rmt::Inputs: R/upsilon_m dimension mismatch");
    }
    if (t_.size() != upsilon_n_.size() || t_.size() < 1) {
        throw ConfigError("rmt::Inputs: T/upsilon_n dimension mismatch");
    }
    if (!(alpha_ > 0.0)) {
        throw ConfigError("rmt::Inputs: alpha must be positive");
    }
    if (!r.allFinite() || !upsilon_m_.allFinite() || !upsilon_n_.allFinite()) {
        throw ConfigError("rmt::Inputs: non-finite entries");
    }
    if (!r.isApprox(r.transpose(), 1e-10)) {
        throw ConfigError("rmt::Inputs: R must be symmetric");
    }
    if (std::abs(upsilon_n_.norm() - 1.0) > 1e-10) {
        throw ConfigError("rmt::Inputs: upsilon_n must have unit norm");
    }
    t_ = clamped_nonnegative(std::move(t_), "rmt::Inputs T");

    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (r + r.transpose()));
    if (es.info() != Eigen::Success) {
        throw ComputeError("rmt::Inputs: eigendecomposition of R failed");
    }
    r_eigs_ = clamped_nonnegative(es.eigenvalues(), "rmt::Inputs R spectrum");
    um_coeffs_ = es.eigenvectors().transpose() * upsilon_m_;
}

FixedPoint solve_fixed_point(const Inputs& inp) {
    const VectorXd& lam = inp.r_eigenvalues();
    const VectorXd& t = inp.t();
    const double a = inp.alpha();
    const double n = static_cast<double>(inp.n());

    auto step_t = [&](double delta) { return trace_t(t, delta, 1, n); };
    auto step_r = [&](double dt) { return trace_r(lam, dt, a, 1, n); };

    double delta = 0.0;
    double delta_tilde = step_t(delta);
    int iter = 0;
    bool converged = false;
    for (; iter < kMaxIterations; ++iter) {
        const double dt_new = step_t(delta);
        const double d_new = step_r(dt_new);
        const double change = std::max(std::abs(d_new - delta), std::abs(dt_new - delta_tilde));
        delta = d_new;
        delta_tilde = dt_new;
        if (change <= kStepTol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        // Substitution stalled: bisect the scalar residual h(d) = d - g(f(d)),
        // which crosses zero exactly at the fixed point.
        auto h = [&](double d) { return d - step_r(step_t(d)); };
        double lo = 0.0;
        double hi = std::max(1.0, step_r(step_t(0.0)));
        int guard = 0;
        while (h(hi) < 0.0 && guard++ < 200) hi *= 2.0;
        if (h(hi) < 0.0) {
            throw ComputeError("solve_fixed_point: failed to bracket the fixed point");
        }
        for (int i = 0; i < 200 && (hi - lo) > 1e-16 * std::max(1.0, hi); ++i) {
            const double mid = 0.5 * (lo + hi);
            (h(mid) < 0.0 ? lo : hi) = mid;
        }
        delta = 0.5 * (lo + hi);
        delta_tilde = step_t(delta);
        delta = step_r(delta_tilde);
    }

    FixedPoint fp;
    fp.delta = delta;
    fp.delta_tilde = delta_tilde;
    fp.iterations = iter + 1;
    fp.residual = std::max(std::abs(delta_tilde - step_t(delta)),
                           std::abs(delta - step_r(delta_tilde)));
    if (!(fp.residual <= kResidualTol)) {
        throw ComputeError("solve_fixed_point: did not reach residual tolerance (residual = " +
                           std::to_string(fp.residual) + ")");
    }

    fp.gamma = trace_r_sq(lam, delta_tilde, a, n);
    fp.gamma_tilde = trace_t_sq(t, delta, n);
    const double gg = fp.gamma * fp.gamma_tilde;
    if (gg >= 1.0) {
        throw ComputeError(
            "solve_fixed_point: gamma * gamma_tilde = " + std::to_string(gg) +
            " >= 1; the scenario is outside the valid regime (alpha too small "
            "for the given R norm / weight profile)");
    }
    const double tr2_r = trace_r(lam, delta_tilde, a, 2, n);
    fp.zeta = tr2_r / (1.0 - gg);
    fp.zeta_tilde = -fp.gamma_tilde * fp.zeta;
    return fp;
}

GeneralZ solve_general_z(const MatrixXd& r, const VectorXd& t, double z) {
    if (!(z < 0.0)) {
        throw ConfigError("solve_general_z: z must be negative");
    }
    if (r.rows() != r.cols()) {
        throw ConfigError("solve_general_z: R must be square");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (r + r.transpose()), Eigen::EigenvaluesOnly);
    const VectorXd lam = clamped_nonnegative(es.eigenvalues(), "solve_general_z R spectrum");
    const VectorXd tt = clamped_nonnegative(t, "solve_general_z T");
    const double n = static_cast<double>(tt.size());
    const double a = -z;

    auto step_t = [&](double e) { return trace_t(tt, e, 1, n); };
    auto step_r = [&](double x) { return trace_r(lam, x, a, 1, n); };

    double e = 0.0;
    double x = step_t(e);
    bool converged = false;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        const double x_new = step_t(e);
        const double e_new = step_r(x_new);
        const double change = std::max(std::abs(e_new - e), std::abs(x_new - x));
        e = e_new;
        x = x_new;
        if (change <= kStepTol) {
            converged = true;
            break;
        }
    }
    if (!converged) {
        auto h = [&](double v) { return v - step_r(step_t(v)); };
        double lo = 0.0;
        double hi = std::max(1.0, step_r(step_t(0.0)));
        int guard = 0;
        while (h(hi) < 0.0 && guard++ < 200) hi *= 2.0;
        if (h(hi) < 0.0) {
            throw ComputeError("solve_general_z: failed to bracket the fixed point");
        }
        for (int i = 0; i < 200 && (hi - lo) > 1e-16 * std::max(1.0, hi); ++i) {
            const double mid = 0.5 * (lo + hi);
            (h(mid) < 0.0 ? lo : hi) = mid;
        }
        e = 0.5 * (lo + hi);
        x = step_t(e);
        e = step_r(x);
    }

    GeneralZ out;
    out.z = z;
    out.e = e;
    out.x = x;
    const double num_r = trace_r(lam, x, a, 2, n);
    const double gsq_r = trace_r_sq(lam, x, a, n);
    const double gsq_t = trace_t_sq(tt, e, n);
    const double denom = 1.0 - gsq_r * gsq_t;
    if (denom <= 0.0) {
        throw ComputeError("solve_general_z: derivative system singular (invalid regime)");
    }
    out.e_prime = num_r / denom;
    out.x_prime = -gsq_t * out.e_prime;
    return out;
}

XiAde ade_xi(const Inputs& inp, const FixedPoint& fp) {
    const double gg = fp.gamma * fp.gamma_tilde;
    if (gg >= 1.0) {
        throw ComputeError("ade_xi: gamma * gamma_tilde >= 1");
    }
    const VectorXd& lam = inp.r_eigenvalues();
    const VectorXd& p = inp.upsilon_m_coeffs();
    const VectorXd& t = inp.t();
    const VectorXd& un = inp.upsilon_n();
    const double a = inp.alpha();

    XiAde xi;
    double q1 = 0.0, q4 = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        const double d = fp.delta_tilde * lam(i) + a;
        q1 += p(i) * p(i) / d;
        // R^{1/2} (dt R + a I)^-2 R^{1/2} in the eigenbasis of R: the
        // principal square root contributes one factor lam per mode.
        q4 += lam(i) * p(i) * p(i) / (d * d);
    }
    double q3 = 0.0, q6 = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double d = fp.delta * t(i) + 1.0;
        q3 += un(i) * un(i) * t(i) / d;
        q6 += un(i) * un(i) * t(i) / (d * d);
    }
    xi.xi1 = q1;
    xi.xi2 = 0.0;
    xi.xi3 = fp.delta * q3;
    xi.xi4 = q4 / (1.0 - gg);
    xi.xi5 = 0.0;
    xi.xi6 = fp.gamma * q6 / (1.0 - gg);
    return xi;
}

double IdentityResiduals::max_abs() const {
    return std::max({trace_r, trace_t, deriv_tilde, deriv, zeta_relation});
}

IdentityResiduals verify_appendix_identities(const Inputs& inp, const FixedPoint& fp) {
    const double n = static_cast<double>(inp.n());
    const double a = inp.alpha();
    const double tr2_r = trace_r(inp.r_eigenvalues(), fp.delta_tilde, a, 2, n);
    const double tr2_t = trace_t(inp.t(), fp.delta, 2, n);
    const double gg = fp.gamma * fp.gamma_tilde;

    IdentityResiduals res;
    res.trace_r = std::abs((fp.delta - fp.delta_tilde * fp.gamma) - a * tr2_r);
    res.trace_t = std::abs((fp.delta_tilde - fp.delta * fp.gamma_tilde) - tr2_t);
    res.deriv_tilde = std::abs((fp.delta_tilde + a * fp.zeta_tilde) - tr2_t / (1.0 - gg));
    res.deriv = std::abs((fp.delta - a * fp.zeta) - fp.gamma * tr2_t / (1.0 - gg));
    res.zeta_relation = std::abs(fp.zeta_tilde + fp.gamma_tilde * fp.zeta);
    return res;
}

double ade_gmvp_variance(const Inputs& inp, const FixedPoint& fp, Eigen::Index m, double rho) {
    const XiAde xi = ade_xi(inp, fp);
    if (!(xi.xi1 > 0.0)) {
        throw ComputeError("ade_gmvp_variance: xi1 must be positive");
    }
    const double md = static_cast<double>(m);
    const double a_pred = md * xi.xi1 / (1.0 - rho);
    const double sandwich_pred = md * xi.xi4 / ((1.0 - rho) * (1.0 - rho));
    return sandwich_pred / (a_pred * a_pred);
}

}  // namespace estrisk::rmt
