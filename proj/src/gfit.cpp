#include "tagsync/gfit.hpp"

#include <iomanip>
#include <set>
#include <sstream>

namespace tagsync {

GaussianFitResult fit_gaussian(const CoincidenceHistogram& hist, const FitOptions& opt) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(hist.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(hist.size()));
    for (std::size_t k = 0; k < hist.size(); ++k) {
        x(static_cast<Eigen::Index>(k)) = hist.midpoint_ps(k);
        y(static_cast<Eigen::Index>(k)) = static_cast<double>(hist.counts[k]);
    }
    return fit_gaussian(x, y, opt);
}

std::string fit_report(const GaussianFitResult& f) {
    std::ostringstream os;
    os << std::setprecision(10);
    os << "center_ps=" << f.center_ps << "\n";
    os << "fwhm_ps=" << f.fwhm_ps << "\n";
    os << "sigma_ps=" << f.sigma_ps << "\n";
    os << "amplitude=" << f.amplitude << "\n";
    os << "baseline=" << f.baseline << "\n";
    os << "residual_rms=" << f.residual_rms << "\n";
    os << "converged=" << (f.converged ? "true" : "false") << "\n";
    os << "iterations=" << f.iterations << "\n";
    return os.str();
}

QuadraticFit fit_quadratic_offset(std::span<const std::int64_t> resolutions_ps, std::span<const double> offsets_ps) {
    if (resolutions_ps.size() != offsets_ps.size()) throw ShapeError("resolutions and offsets differ in length");
    const std::set<std::int64_t> distinct(resolutions_ps.begin(), resolutions_ps.end());
    if (distinct.size() < 4) {
        throw FitError("quadratic offset fit needs at least 4 distinct resolutions, have " +
                       std::to_string(distinct.size()));
    }
    Eigen::VectorXd r(static_cast<Eigen::Index>(resolutions_ps.size()));
    for (std::size_t k = 0; k < resolutions_ps.size(); ++k) r(static_cast<Eigen::Index>(k)) = static_cast<double>(resolutions_ps[k]);
    const Eigen::Map<const Eigen::VectorXd> y(offsets_ps.data(), static_cast<Eigen::Index>(offsets_ps.size()));
    const Eigen::Vector3d c = quadratic_least_squares(r, y);
    return {c(0), c(1), c(2)};
}

PrecisionPrediction predict_precision(double delta_tau_ps, double jitter_fwhm_ps, double rc_cps, double ta_s) {
    if (!(delta_tau_ps >= 0.0) || !(jitter_fwhm_ps >= 0.0) || !(rc_cps > 0.0) || !(ta_s > 0.0)) {
        throw DomainError("predict_precision needs nonnegative widths and positive rate and time");
    }
    PrecisionPrediction p;
    p.delta_tau_prime_ps = std::hypot(delta_tau_ps, jitter_fwhm_ps);
    if (!(p.delta_tau_prime_ps > 0.0)) throw DomainError("combined correlation width must be positive");
    p.rc_cps = rc_cps;
    p.ta_s = ta_s;
    p.sd_ps = p.delta_tau_prime_ps / std::sqrt(2.0 * rc_cps * ta_s);
    return p;
}

} // namespace tagsync
