#pragma once

#include "tagsync/error.hpp"
#include "tagsync/stats.hpp"
#include "tagsync/xcorr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tagsync {

struct FitOptions {
    double rel_tol = 1e-8;
    int max_iterations = 200;
    double damping_factor = 10.0;
    double initial_damping = 1e-3;
    /// Weight residuals by 1/max(count, 1) instead of plain least squares.
    bool poisson_weights = false;
    bool record_history = false;
    std::size_t min_nonzero_bins = 8;
    /// Minimum (max - median) / sqrt(max(median, 1)).
    double min_contrast = 3.0;
};

/// Model: amplitude * exp(-(t - center)^2 / (2 sigma^2)) + baseline.
template <typename Scalar>
struct GaussianFit {
    Scalar center_ps{};
    Scalar sigma_ps{};
    Scalar amplitude{};
    Scalar baseline{};
    Scalar fwhm_ps{};
    Scalar residual_rms{};
    bool converged = false;
    int iterations = 0;
    /// Cost after every accepted step, starting with the initial guess.
    std::vector<Scalar> cost_history;
};

using GaussianFitResult = GaussianFit<double>;

namespace detail {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Scalar median_of(const Vec<Scalar>& y) {
    std::vector<Scalar> v(y.data(), y.data() + y.size());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    Scalar m = v[mid];
    if (v.size() % 2 == 0) {
        const Scalar lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
        m = (m + lower) / Scalar(2);
    }
    return m;
}

template <typename Scalar>
Vec<Scalar> gaussian_model(const Vec<Scalar>& x, const Eigen::Matrix<Scalar, 4, 1>& p) {
    const Scalar inv = Scalar(1) / (Scalar(2) * p(2) * p(2));
    return (p(0) * (-(x.array() - p(1)).square() * inv).exp() + p(3)).matrix();
}

} // namespace detail

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of a Gaussian plus constant
/// baseline. Throws FitError with too few nonzero samples and NoPeakError when
/// the peak does not rise above the median. Non-convergence is reported via
/// `converged`, not thrown.
template <typename DerivedX, typename DerivedY>
GaussianFit<typename DerivedX::Scalar> fit_gaussian(const Eigen::MatrixBase<DerivedX>& x_in,
                                                    const Eigen::MatrixBase<DerivedY>& y_in,
                                                    const FitOptions& opt = {}) {
    using Scalar = typename DerivedX::Scalar;
    using Vec = detail::Vec<Scalar>;
    using Vec4 = Eigen::Matrix<Scalar, 4, 1>;
    using Mat4 = Eigen::Matrix<Scalar, 4, 4>;

    const Vec x = x_in;
    const Vec y = y_in.template cast<Scalar>();
    if (x.size() != y.size()) throw ShapeError("fit_gaussian: x and y differ in length");
    const Eigen::Index n = x.size();
    const auto nonzero = static_cast<std::size_t>((y.array() != Scalar(0)).count());
    if (nonzero < opt.min_nonzero_bins) {
        throw FitError("fit needs at least " + std::to_string(opt.min_nonzero_bins) + " nonzero bins, have " +
                       std::to_string(nonzero));
    }

    // Initial guess from the histogram shape.
    const Scalar base0 = detail::median_of(y);
    Eigen::Index imax = 0;
    const Scalar ymax = y.maxCoeff(&imax);
    const Scalar amp0 = ymax - base0;
    const Scalar contrast = amp0 / std::sqrt(std::max(base0, Scalar(1)));
    if (!(amp0 > Scalar(0)) || contrast < Scalar(opt.min_contrast)) {
        throw NoPeakError("peak contrast " + std::to_string(static_cast<double>(contrast)) + " below " +
                          std::to_string(opt.min_contrast));
    }
    const Scalar step = n > 1 ? std::abs(x(1) - x(0)) : Scalar(1);
    Eigen::Index first = imax;
    Eigen::Index last = imax;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (y(k) > base0 + amp0 / Scalar(2)) {
            first = std::min(first, k);
            last = std::max(last, k);
        }
    }
    const Scalar span = std::abs(x(last) - x(first)) + step;

    // Iterate on x measured from the initial peak and y in units of its maximum.
    const Scalar x0 = x(imax);
    const Scalar ys = ymax;
    const Vec u = (x.array() - x0).matrix();
    const Vec v = y / ys;
    Vec4 p(amp0 / ys, Scalar(0), span / Scalar(kFwhmPerSigma), std::max(base0, Scalar(0)) / ys);

    const Vec w = opt.poisson_weights ? Vec((Scalar(1) / y.array().max(Scalar(1))).matrix())
                                      : Vec(Vec::Ones(n));
    auto cost_of = [&](const Vec4& q) {
        const Vec r = detail::gaussian_model(u, q) - v;
        return (w.array() * r.array().square()).sum();
    };

    GaussianFit<Scalar> out;
    Scalar cost = cost_of(p);
    if (opt.record_history) out.cost_history.push_back(cost * ys * ys);
    Scalar lambda = Scalar(opt.initial_damping);
    int iter = 0;
    bool converged = false;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 4> J(n, 4);
    while (iter < opt.max_iterations) {
        ++iter;
        const Scalar inv_s2 = Scalar(1) / (p(2) * p(2));
        const auto dx = (u.array() - p(1)).eval();
        const auto g = (-(dx.square()) * inv_s2 / Scalar(2)).exp().eval();
        J.col(0) = g.matrix();
        J.col(1) = (p(0) * g * dx * inv_s2).matrix();
        J.col(2) = (p(0) * g * dx.square() * inv_s2 / p(2)).matrix();
        J.col(3).setOnes();
        const Vec r = (p(0) * g + p(3)).matrix() - v;

        const Mat4 JtJ = J.transpose() * w.asDiagonal() * J;
        const Vec4 Jtr = J.transpose() * (w.array() * r.array()).matrix();

        bool accepted = false;
        while (!accepted) {
            Mat4 A = JtJ;
            A.diagonal() += lambda * JtJ.diagonal().cwiseMax(Scalar(1e-12));
            const Vec4 delta = A.ldlt().solve(-Jtr);
            Vec4 trial = p + delta;
            trial(3) = std::max(trial(3), Scalar(0));
            const bool legal = trial(0) > Scalar(0) && trial(2) > Scalar(0) && trial.allFinite();
            const Scalar trial_cost = legal ? cost_of(trial) : std::numeric_limits<Scalar>::infinity();
            if (legal && trial_cost <= cost) {
                const Scalar change = (trial - p).norm();
                p = trial;
                cost = trial_cost;
                lambda = std::max(lambda / Scalar(opt.damping_factor), Scalar(1e-12));
                accepted = true;
                if (opt.record_history) out.cost_history.push_back(cost * ys * ys);
                if (change <= Scalar(opt.rel_tol) * (p.norm() + Scalar(opt.rel_tol))) converged = true;
            } else {
                lambda *= Scalar(opt.damping_factor);
                if (lambda > Scalar(1e16)) {
                    // No damped step lowers the cost: stationary to working precision.
                    converged = true;
                    break;
                }
            }
        }
        if (converged) break;
    }

    out.amplitude = p(0) * ys;
    out.center_ps = p(1) + x0;
    out.sigma_ps = p(2);
    out.baseline = p(3) * ys;
    out.fwhm_ps = Scalar(kFwhmPerSigma) * p(2);
    out.residual_rms = std::sqrt(cost_of(p) / Scalar(n)) * ys;
    out.iterations = iter;
    const bool inside = p(1) >= u.minCoeff() && p(1) <= u.maxCoeff();
    out.converged = converged && inside;
    return out;
}

/// Fits counts against bin midpoints.
GaussianFitResult fit_gaussian(const CoincidenceHistogram& hist, const FitOptions& opt = {});

/// `key=value` lines: center_ps, fwhm_ps, sigma_ps, amplitude, baseline,
/// residual_rms, converged, iterations.
std::string fit_report(const GaussianFitResult& fit);

struct QuadraticFit {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;

    double operator()(double r) const { return c0 + r * (c1 + r * c2); }
};

/// Ordinary least squares y = c0 + c1 x + c2 x^2 by column-pivoted QR.
template <typename DerivedX, typename DerivedY>
Eigen::Matrix<typename DerivedX::Scalar, 3, 1> quadratic_least_squares(const Eigen::MatrixBase<DerivedX>& x,
                                                                       const Eigen::MatrixBase<DerivedY>& y) {
    using Scalar = typename DerivedX::Scalar;
    if (x.size() != y.size()) throw ShapeError("quadratic fit: x and y differ in length");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 3> V(x.size(), 3);
    V.col(0).setOnes();
    V.col(1) = x;
    V.col(2) = x.array().square().matrix();
    Eigen::ColPivHouseholderQR<Eigen::Matrix<Scalar, Eigen::Dynamic, 3>> qr(V);
    if (qr.rank() < 3) throw FitError("quadratic fit is rank deficient");
    return qr.solve(y.template cast<Scalar>());
}

/// Offset versus fine resolution; c0 is the resolution-independent offset.
/// Needs at least four distinct resolutions.
QuadraticFit fit_quadratic_offset(std::span<const std::int64_t> resolutions_ps, std::span<const double> offsets_ps);

struct PrecisionPrediction {
    double delta_tau_prime_ps = 0.0;
    double rc_cps = 0.0;
    double ta_s = 0.0;
    double sd_ps = 0.0;
};

/// sd = sqrt(delta_tau^2 + jitter^2) / sqrt(2 R_c T_a).
PrecisionPrediction predict_precision(double delta_tau_ps, double jitter_fwhm_ps, double rc_cps, double ta_s);

} // namespace tagsync
