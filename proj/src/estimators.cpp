#include "estrisk/estimators.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace estrisk::estimators {

namespace {

MatrixXd inverse_sqrt(const MatrixXd& spd, const char* what) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(spd);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0) {
        throw ComputeError(std::string(what) + ": matrix is not positive definite");
    }
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
           es.eigenvectors().transpose();
}

double trace_t_resolvent(const VectorXd& t, double delta, int power) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double q = 1.0 + delta * t(i);
        acc += (power == 1) ? t(i) / q : t(i) / (q * q);
    }
    return acc / static_cast<double>(t.size());
}

}  // namespace

WhitenedData::WhitenedData(MatrixXd ytilde, double alpha)
    : ytilde_(std::move(ytilde)), alpha_(alpha) {
    if (ytilde_.rows() < 1 || ytilde_.cols() < 1) {
        throw ConfigError("WhitenedData: empty data matrix");
    }
    if (!(alpha_ > 0.0)) {
        throw ConfigError("WhitenedData: alpha must be positive");
    }
    if (!ytilde_.allFinite()) {
        throw ConfigError("WhitenedData: non-finite entries");
    }
    const double n = static_cast<double>(ytilde_.cols());
    s_ = (ytilde_ * ytilde_.transpose()) / n;
    s_ = 0.5 * (s_ + s_.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s_);
    if (es.info() != Eigen::Success) {
        throw ComputeError("WhitenedData: eigendecomposition of S failed");
    }
    s_eigs_ = es.eigenvalues().cwiseMax(0.0);
    s_vecs_ = es.eigenvectors();
}

WhitenedData WhitenedData::from_returns(const moments::ReturnsMatrix& y,
                                        const moments::ShrinkageConfig& cfg,
                                        const VectorXd& w_sigma) {
    if (w_sigma.size() != y.samples()) {
        throw ConfigError("WhitenedData::from_returns: w_sigma length mismatch");
    }
    if (w_sigma.minCoeff() < 0.0) {
        throw ConfigError("WhitenedData::from_returns: w_sigma must be nonnegative");
    }
    MatrixXd sigma0_isqrt = inverse_sqrt(cfg.sigma0, "WhitenedData sigma0");
    MatrixXd centered = y.data.colwise() - y.data.rowwise().mean().eval();
    MatrixXd ytilde = sigma0_isqrt * centered * w_sigma.cwiseSqrt().asDiagonal();
    return WhitenedData(std::move(ytilde), cfg.alpha);
}

VectorXd WhitenedData::resolvent_apply(const VectorXd& v) const {
    VectorXd coeffs = s_vecs_.transpose() * v;
    coeffs.array() /= (s_eigs_.array() + alpha_);
    return s_vecs_ * coeffs;
}

double WhitenedData::trace_s_resolvent() const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < s_eigs_.size(); ++i) {
        acc += s_eigs_(i) / (s_eigs_(i) + alpha_);
    }
    return acc / static_cast<double>(n());
}

XiSet empirical_xi(const WhitenedData& d, const VectorXd& upsilon_m,
                   const VectorXd& upsilon_n, const MatrixXd& r) {
    if (upsilon_m.size() != d.m() || upsilon_n.size() != d.n()) {
        throw ConfigError("empirical_xi: direction vector dimension mismatch");
    }
    if (std::abs(upsilon_n.norm() - 1.0) > 1e-10) {
        throw ConfigError("empirical_xi: upsilon_n must have unit norm");
    }
    // upsilon_hat = (1/N) Ytilde (sqrt(N) upsilon_n)
    VectorXd upsilon_hat =
        (d.ytilde() * upsilon_n) / std::sqrt(static_cast<double>(d.n()));
    VectorXd u = d.resolvent_apply(upsilon_m);
    VectorXd u_hat = d.resolvent_apply(upsilon_hat);

    XiSet xi;
    xi.flavor = XiFlavor::empirical;
    xi.xi1 = upsilon_m.dot(u);
    xi.xi2 = upsilon_m.dot(u_hat);
    xi.xi3 = upsilon_hat.dot(u_hat);
    xi.xi4 = u.dot(r * u);
    xi.xi5 = u.dot(r * u_hat);
    xi.xi6 = u_hat.dot(r * u_hat);
    return xi;
}

double plugin_xi4(const WhitenedData& d, const VectorXd& upsilon_m) {
    if (upsilon_m.size() != d.m()) {
        throw ConfigError("plugin_xi4: dimension mismatch");
    }
    VectorXd u = d.resolvent_apply(upsilon_m);
    return u.dot(d.s() * u);
}

double plugin_xi6(const WhitenedData& d, const VectorXd& upsilon_n) {
    if (upsilon_n.size() != d.n()) {
        throw ConfigError("plugin_xi6: dimension mismatch");
    }
    const double n = static_cast<double>(d.n());
    MatrixXd gram = (d.ytilde().transpose() * d.ytilde()) / n;
    gram = 0.5 * (gram + gram.transpose()).eval();
    MatrixXd shifted = gram + d.alpha() * MatrixXd::Identity(d.n(), d.n());
    Eigen::LLT<MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) {
        throw ComputeError("plugin_xi6: Gram resolvent factorization failed");
    }
    VectorXd w = gram * llt.solve(upsilon_n);
    return w.squaredNorm();
}

double plugin_xi6_m_domain(const WhitenedData& d, const VectorXd& upsilon_n) {
    if (upsilon_n.size() != d.n()) {
        throw ConfigError("plugin_xi6_m_domain: dimension mismatch");
    }
    VectorXd upsilon_hat =
        (d.ytilde() * upsilon_n) / std::sqrt(static_cast<double>(d.n()));
    VectorXd u = d.resolvent_apply(upsilon_hat);
    return u.dot(d.s() * u);
}

double estimate_delta(const WhitenedData& d, const VectorXd& t) {
    if (t.size() != d.n()) {
        throw ConfigError("estimate_delta: weight profile length mismatch");
    }
    return solve_delta_from_trace(d.trace_s_resolvent(), t);
}

double solve_delta_from_trace(double lhs, const VectorXd& t) {
    if (t.size() < 1 || t.minCoeff() < 0.0) {
        throw ConfigError("solve_delta_from_trace: weight profile must be nonnegative");
    }
    if (lhs <= 0.0) {
        return 0.0;
    }
    const double n = static_cast<double>(t.size());
    const double supremum = static_cast<double>((t.array() > 0.0).count()) / n;
    if (lhs >= supremum) {
        throw ComputeError(
            "solve_delta_from_trace: no finite root (trace " + std::to_string(lhs) +
            " >= profile supremum " + std::to_string(supremum) + ")");
    }
    // rhs(delta) = delta (1/N) tr[T (I + delta T)^-1] is strictly increasing
    // toward the supremum, so a sign change brackets the unique root.
    auto rhs = [&](double delta) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            acc += delta * t(i) / (1.0 + delta * t(i));
        }
        return acc / n;
    };
    double lo = 0.0;
    double hi = 1.0;
    int guard = 0;
    while (rhs(hi) < lhs && guard++ < 200) hi *= 2.0;
    if (rhs(hi) < lhs) {
        throw ComputeError("solve_delta_from_trace: failed to bracket the root");
    }
    for (int i = 0; i < 100 && (hi - lo) > 1e-14; ++i) {
        const double mid = 0.5 * (lo + hi);
        (rhs(mid) < lhs ? lo : hi) = mid;
    }
    const double delta_hat = 0.5 * (lo + hi);
    if (std::abs(rhs(delta_hat) - lhs) > 1e-12 * std::max(1.0, lhs)) {
        throw ComputeError("solve_delta_from_trace: root residual above tolerance");
    }
    return delta_hat;
}

double gce_xi4(const WhitenedData& d, const VectorXd& upsilon_m, const VectorXd& t,
               double delta_hat) {
    const double tr2 = trace_t_resolvent(t, delta_hat, 2);
    if (tr2 <= 0.0) {
        throw ComputeError("gce_xi4: correction factor undefined (weight profile is zero)");
    }
    return plugin_xi4(d, upsilon_m) / tr2;
}

double gce_xi6(const WhitenedData& d, const VectorXd& upsilon_n, const VectorXd& t,
               double delta_hat) {
    const double tr2 = trace_t_resolvent(t, delta_hat, 2);
    if (tr2 <= 0.0) {
        throw ComputeError("gce_xi6: correction factor undefined (weight profile is zero)");
    }
    double quad = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double q = t(i) / (1.0 + delta_hat * t(i));
        quad += upsilon_n(i) * upsilon_n(i) * q * q;
    }
    const double b = -delta_hat * delta_hat * quad / tr2;
    return plugin_xi6(d, upsilon_n) / tr2 + b;
}

AbcEstimates abc_hat(const moments::ReturnsMatrix& y, const moments::ShrinkageConfig& cfg,
                     const moments::WeightProfile& w, const MatrixXd* truth_sigma) {
    VectorXd mu_w = moments::weighted_mean(y, w);
    VectorXd mu_shr = moments::shrink_mean(mu_w, cfg);

    // Plain-sample-mean centering, then observation weights: this is the
    // covariance convention under which the whitened quadratic forms
    // decompose exactly into the xi terms.
    const double n = static_cast<double>(y.samples());
    MatrixXd centered = y.data.colwise() - y.data.rowwise().mean().eval();
    MatrixXd weighted = centered * w.w_sigma.cwiseSqrt().asDiagonal();
    MatrixXd sigma_w = (weighted * weighted.transpose()) / n;
    sigma_w = 0.5 * (sigma_w + sigma_w.transpose()).eval();
    MatrixXd sigma_shr = moments::shrink_cov(sigma_w, cfg);

    Eigen::LLT<MatrixXd> llt(sigma_shr);
    if (llt.info() != Eigen::Success) {
        throw ComputeError("abc_hat: shrunk covariance is not positive definite");
    }
    VectorXd ones = VectorXd::Ones(y.assets());
    VectorXd si_one = llt.solve(ones);
    VectorXd si_mu = llt.solve(mu_shr);

    AbcEstimates out;
    out.A = ones.dot(si_one);
    out.B = ones.dot(si_mu);
    out.C = mu_shr.dot(si_mu);
    if (truth_sigma != nullptr) {
        out.sandwich_ones = si_one.dot(*truth_sigma * si_one);
        out.sandwich_mu = si_mu.dot(*truth_sigma * si_mu);
    }
    return out;
}

}  // namespace estrisk::estimators
