#include "tagsync/error.hpp"
#include "tagsync/gfit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace tagsync;

namespace {

Eigen::VectorXd grid(double first, double step, Eigen::Index n) {
    return Eigen::VectorXd::LinSpaced(n, first, first + step * static_cast<double>(n - 1));
}

Eigen::VectorXd gaussian(const Eigen::VectorXd& x, double a, double mu, double sigma, double b) {
    return (a * (-(x.array() - mu).square() / (2 * sigma * sigma)).exp() + b).matrix();
}

CoincidenceHistogram poisson_histogram(std::mt19937_64& rng, double a, double mu, double sigma, double b) {
    CoincidenceHistogram h;
    h.resolution_ps = 1;
    h.window_width_ps = 1;
    h.center0_ps = -110;
    h.counts.resize(500);
    for (std::size_t k = 0; k < h.size(); ++k) {
        const double t = h.midpoint_ps(k);
        std::poisson_distribution<std::int64_t> p(a * std::exp(-(t - mu) * (t - mu) / (2 * sigma * sigma)) + b);
        h.counts[k] = p(rng);
    }
    return h;
}

} // namespace

TEST(FitGaussian, RecoversExactModel) {
    const Eigen::VectorXd x = grid(-110, 1, 500);
    const Eigen::VectorXd y = gaussian(x, 100, 140, 30, 5);
    const GaussianFitResult f = fit_gaussian(x, y);
    ASSERT_TRUE(f.converged);
    EXPECT_NEAR(f.amplitude, 100, 1e-6 * 100);
    EXPECT_NEAR(f.center_ps, 140, 1e-6 * 140);
    EXPECT_NEAR(f.sigma_ps, 30, 1e-6 * 30);
    EXPECT_NEAR(f.baseline, 5, 1e-6 * 5);
    EXPECT_LT(f.residual_rms, 1e-6);
}

TEST(FitGaussian, FwhmSigmaRelation) {
    const Eigen::VectorXd x = grid(0, 2, 200);
    const GaussianFitResult f = fit_gaussian(x, gaussian(x, 40, 210, 17, 2));
    EXPECT_NEAR(f.fwhm_ps / f.sigma_ps, 2.354820045030949, 1e-9 * 2.354820045030949);
}

TEST(FitGaussian, FloatScalarWorks) {
    const Eigen::VectorXf x = grid(-110, 1, 500).cast<float>();
    const Eigen::VectorXf y = gaussian(grid(-110, 1, 500), 100, 140, 30, 5).cast<float>();
    FitOptions opt;
    opt.rel_tol = 1e-5;
    const GaussianFit<float> f = fit_gaussian(x, y, opt);
    EXPECT_NEAR(f.center_ps, 140.0f, 1e-2f);
}

TEST(FitGaussian, TranslationEquivariance) {
    std::mt19937_64 rng(1);
    const CoincidenceHistogram h = poisson_histogram(rng, 20, 140, 30, 5);
    Eigen::VectorXd x(static_cast<Eigen::Index>(h.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(h.size()));
    for (std::size_t k = 0; k < h.size(); ++k) {
        x(static_cast<Eigen::Index>(k)) = h.midpoint_ps(k);
        y(static_cast<Eigen::Index>(k)) = static_cast<double>(h.counts[k]);
    }
    const GaussianFitResult base = fit_gaussian(x, y);
    for (const double delta : {-1000.0, 3.0, 25000.0}) {
        const GaussianFitResult moved = fit_gaussian((x.array() + delta).matrix(), y);
        EXPECT_NEAR(moved.center_ps - base.center_ps, delta, 1e-8 * std::max(1.0, std::abs(delta)));
        EXPECT_NEAR(moved.sigma_ps, base.sigma_ps, 1e-8 * base.sigma_ps);
    }
}

TEST(FitGaussian, CountScalingEquivariance) {
    std::mt19937_64 rng(2);
    const CoincidenceHistogram h = poisson_histogram(rng, 20, 140, 30, 5);
    const GaussianFitResult base = fit_gaussian(h);
    Eigen::VectorXd x(static_cast<Eigen::Index>(h.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(h.size()));
    for (std::size_t k = 0; k < h.size(); ++k) {
        x(static_cast<Eigen::Index>(k)) = h.midpoint_ps(k);
        y(static_cast<Eigen::Index>(k)) = static_cast<double>(h.counts[k]);
    }
    for (const double k : {3.0, 17.5, 1000.0}) {
        const GaussianFitResult scaled = fit_gaussian(x, (y * k).eval());
        EXPECT_NEAR(scaled.amplitude, k * base.amplitude, 1e-8 * k * base.amplitude);
        EXPECT_NEAR(scaled.baseline, k * base.baseline, 1e-8 * k * base.baseline);
        EXPECT_NEAR(scaled.center_ps, base.center_ps, 1e-8 * base.center_ps);
        EXPECT_NEAR(scaled.sigma_ps, base.sigma_ps, 1e-8 * base.sigma_ps);
    }
}

TEST(FitGaussian, CostHistoryNonIncreasing) {
    std::mt19937_64 rng(3);
    FitOptions opt;
    opt.record_history = true;
    const GaussianFitResult f = fit_gaussian(poisson_histogram(rng, 15, 120, 25, 8), opt);
    ASSERT_GE(f.cost_history.size(), 2u);
    for (std::size_t k = 1; k < f.cost_history.size(); ++k) EXPECT_LE(f.cost_history[k], f.cost_history[k - 1]);
}

TEST(FitGaussian, PoissonNoisedCenterIsUnbiased) {
    std::mt19937_64 rng(4);
    const int n = 200;
    std::vector<double> c;
    for (int k = 0; k < n; ++k) {
        const GaussianFitResult f = fit_gaussian(poisson_histogram(rng, 50, 140, 30, 5));
        ASSERT_TRUE(f.converged);
        c.push_back(f.center_ps);
    }
    const Eigen::Map<Eigen::VectorXd> v(c.data(), n);
    EXPECT_NEAR(sample_mean(v), 140.0, 3.0 * sample_sd(v) / std::sqrt(static_cast<double>(n)));
}

TEST(FitGaussian, CenterInsideSpanWhenConverged) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 50; ++k) {
        const CoincidenceHistogram h = poisson_histogram(rng, 10, 140, 30, 4);
        const GaussianFitResult f = fit_gaussian(h);
        if (!f.converged) continue;
        EXPECT_GE(f.center_ps, h.midpoint_ps(0));
        EXPECT_LE(f.center_ps, h.midpoint_ps(h.size() - 1));
    }
}

TEST(FitGaussian, WeightedModeRecoversExactModel) {
    const Eigen::VectorXd x = grid(-110, 1, 500);
    FitOptions opt;
    opt.poisson_weights = true;
    const GaussianFitResult f = fit_gaussian(x, gaussian(x, 100, 140, 30, 5), opt);
    EXPECT_NEAR(f.center_ps, 140, 1e-6);
}

TEST(FitGaussian, Preconditions) {
    const Eigen::VectorXd x = grid(0, 1, 100);
    Eigen::VectorXd sparse = Eigen::VectorXd::Zero(100);
    sparse.segment(40, 5).setConstant(10);
    EXPECT_THROW(fit_gaussian(x, sparse), FitError);
    const Eigen::VectorXd flat = Eigen::VectorXd::Constant(100, 50.0);
    EXPECT_THROW(fit_gaussian(x, flat), NoPeakError);
    EXPECT_THROW(fit_gaussian(x, Eigen::VectorXd::Ones(99)), ShapeError);
}

TEST(FitGaussian, MidpointsOfEvenBins) {
    CoincidenceHistogram h;
    h.resolution_ps = 4;
    h.window_width_ps = 4;
    h.center0_ps = 0;
    h.counts = {1, 2, 3};
    // Bin k holds differences center - 2 .. center + 1.
    EXPECT_DOUBLE_EQ(h.midpoint_ps(0), -0.5);
    h.resolution_ps = 5;
    h.window_width_ps = 5;
    EXPECT_DOUBLE_EQ(h.midpoint_ps(1), 5.0);
}

TEST(FitReport, KeyValueLines) {
    const Eigen::VectorXd x = grid(-110, 1, 500);
    const std::string r = fit_report(fit_gaussian(x, gaussian(x, 100, 140, 30, 5)));
    for (const char* key : {"center_ps=", "fwhm_ps=", "amplitude=", "baseline=", "residual_rms=", "converged=true"}) {
        EXPECT_NE(r.find(key), std::string::npos) << key;
    }
}

TEST(QuadraticOffset, RecoversExactCoefficients) {
    const std::vector<std::int64_t> r{1, 3, 5, 7, 9, 15, 25, 35, 55};
    std::vector<double> y;
    for (auto v : r) y.push_back(140.32 + 0.1 * v + 0.001 * v * v);
    const QuadraticFit q = fit_quadratic_offset(r, y);
    EXPECT_NEAR(q.c0, 140.32, 1e-9);
    EXPECT_NEAR(q.c1, 0.1, 1e-9);
    EXPECT_NEAR(q.c2, 0.001, 1e-9);
    EXPECT_NEAR(q(10.0), 140.32 + 1.0 + 0.1, 1e-9);
}

TEST(QuadraticOffset, NeedsFourDistinctResolutions) {
    const std::vector<std::int64_t> r{1, 1, 3, 3, 5, 5};
    const std::vector<double> y{1, 1, 2, 2, 3, 3};
    EXPECT_THROW(fit_quadratic_offset(r, y), FitError);
    EXPECT_THROW(fit_quadratic_offset(std::vector<std::int64_t>{1, 2, 3, 4}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(PredictPrecision, Examples) {
    EXPECT_NEAR(predict_precision(0.0, 70.5, 1140, 4.5).sd_ps, 0.69601, 1e-5);
    EXPECT_NEAR(predict_precision(0.0, 100, 50, 2).sd_ps, 7.0711, 1e-4);
    const double a = predict_precision(0.4, 70.5, 1140, 1.0).sd_ps;
    const double b = predict_precision(0.4, 70.5, 1140, 4.0).sd_ps;
    EXPECT_NEAR(a / b, 2.0, 1e-12);
}

TEST(PredictPrecision, HomogeneousAndExact) {
    const PrecisionPrediction p = predict_precision(3.0, 4.0, 200, 0.5);
    EXPECT_DOUBLE_EQ(p.delta_tau_prime_ps, 5.0);
    EXPECT_DOUBLE_EQ(p.sd_ps, 5.0 / std::sqrt(2.0 * 200 * 0.5));
    EXPECT_NEAR(predict_precision(6.0, 8.0, 200, 0.5).sd_ps, 2.0 * p.sd_ps, 1e-12);
}

TEST(PredictPrecision, DomainErrors) {
    EXPECT_THROW(predict_precision(1, 70, 0, 1), DomainError);
    EXPECT_THROW(predict_precision(1, 70, 10, -1), DomainError);
    EXPECT_THROW(predict_precision(-1, 70, 10, 1), DomainError);
    EXPECT_THROW(predict_precision(0, 0, 10, 1), DomainError);
}
