#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>

#include "relperturb/estimation.hpp"
#include "relperturb/generators.hpp"
#include "relperturb/stats.hpp"
#include "support.hpp"

using namespace relperturb;

namespace {

GeneratorConfig base_config(Setting setting, int n, std::uint64_t seed = 9001) {
    Eigen::VectorXd lam(3);
    lam << 1.0, 0.5, 0.25;
    GeneratorConfig cfg;
    cfg.setting = setting;
    cfg.n = n;
    cfg.model = SpectrumModel::from_eigenvalues(lam);
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("identical config and seed give bit-identical datasets") {
    for (Setting s : {Setting::IID, Setting::WeakDependence, Setting::LongMemory}) {
        GeneratorConfig cfg = base_config(s, 64);
        cfg.dependence.filter_length = 4;
        const Dataset a = sample_dataset(cfg, 3);
        const Dataset b = sample_dataset(cfg, 3);
        REQUIRE(a.samples.rows() == b.samples.rows());
        CHECK(std::memcmp(a.samples.data(), b.samples.data(),
                          sizeof(double) * a.samples.size()) == 0);
        const Dataset c = sample_dataset(cfg, 4);
        CHECK(std::memcmp(a.samples.data(), c.samples.data(),
                          sizeof(double) * a.samples.size()) != 0);
    }
    GeneratorConfig cfg = base_config(Setting::OneFactor, 64);
    cfg.factor.spikes = 2;
    const Dataset a = sample_dataset(cfg, 1);
    const Dataset b = sample_dataset(cfg, 1);
    CHECK(std::memcmp(a.samples.data(), b.samples.data(), sizeof(double) * a.samples.size()) == 0);
}

TEST_CASE("every setting is mean zero per coordinate") {
    for (Setting s :
         {Setting::IID, Setting::WeakDependence, Setting::LongMemory, Setting::OneFactor}) {
        GeneratorConfig cfg = base_config(s, 20000);
        cfg.dependence.filter_length = 6;
        cfg.factor.spikes = 2;
        const Dataset ds = sample_dataset(cfg, 0);
        for (int j = 0; j < 3; ++j) {
            const double var_j = cfg.model.eigenvalue(j);
            CHECK(std::abs(ds.samples.col(j).mean()) <=
                  4.0 * std::sqrt(var_j / ds.samples.rows()));
        }
    }
}

TEST_CASE("iid sampling converges to the population covariance in max norm") {
    Eigen::VectorXd lam(5);
    for (int j = 0; j < 5; ++j) lam[j] = std::pow(j + 1.0, -1.0);
    GeneratorConfig cfg;
    cfg.setting = Setting::IID;
    cfg.n = 100000;
    cfg.model = SpectrumModel::from_eigenvalues(lam);
    cfg.seed = 3;
    const Dataset ds = sample_iid(cfg, 0);
    const Eigen::MatrixXd sigma_hat = empirical_covariance(ds.samples);
    const double err = (sigma_hat - cfg.model.matrix()).cwiseAbs().maxCoeff();
    CHECK(err / lam[0] <= 0.05);
}

TEST_CASE("scalar model gives plain gaussian draws of the right variance") {
    GeneratorConfig cfg;
    cfg.setting = Setting::IID;
    cfg.n = 50000;
    cfg.model = SpectrumModel::from_eigenvalues(2.0 * Eigen::VectorXd::Ones(1));
    cfg.seed = 5;
    const Dataset ds = sample_iid(cfg, 0);
    const double var = ds.samples.col(0).squaredNorm() / cfg.n;
    CHECK(std::abs(var - 2.0) <= 3.0 * 2.0 * std::sqrt(2.0 / cfg.n));
}

TEST_CASE("student-t coefficients carry the documented fourth moment") {
    const double df = 5.0;
    const double scale = std::sqrt((df - 2.0) / df);

    // Quadrature oracle for E[eta^4 1{|eta| <= cut}] under the unit-variance
    // scaling eta = scale * T. The plain sample mean of eta^4 is useless here
    // (eta^8 is not integrable at df = 5), so the test compares the truncated
    // moment, whose estimator has finite variance, and separately pins the
    // full moment formula 3(df-2)/(df-4) = 9 by quadrature.
    auto density = [&](double t) {
        return std::exp(std::lgamma((df + 1.0) / 2.0) - std::lgamma(df / 2.0)) /
               std::sqrt(df * M_PI) * std::pow(1.0 + t * t / df, -(df + 1.0) / 2.0);
    };
    auto truncated_fourth = [&](double cut_eta) {
        const double cut_t = cut_eta / scale;
        const int steps = 200000;
        const double h = cut_t / steps;
        double integral = 0.0;  // Simpson on [0, cut_t]
        for (int i = 0; i <= steps; ++i) {
            const double t = i * h;
            const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            integral += w * std::pow(t, 4) * density(t);
        }
        return 2.0 * std::pow(scale, 4) * integral * h / 3.0;
    };
    // Formula check: the truncated moment approaches 9 as the cut grows.
    CHECK_THAT(truncated_fourth(4000.0), Catch::Matchers::WithinAbs(9.0, 1e-2));

    GeneratorConfig cfg;
    cfg.setting = Setting::IID;
    cfg.n = 200000;
    cfg.model = SpectrumModel::from_eigenvalues(Eigen::VectorXd::Ones(1));
    cfg.family = CoeffFamily::StudentT;
    cfg.student_df = df;
    cfg.seed = 11;
    const Dataset ds = sample_iid(cfg, 0);
    const double cut = 8.0;
    const double expected = truncated_fourth(cut);
    std::vector<double> clipped;
    clipped.reserve(static_cast<std::size_t>(cfg.n));
    for (int i = 0; i < cfg.n; ++i) {
        const double eta = ds.samples(i, 0);
        clipped.push_back(std::abs(eta) <= cut ? std::pow(eta, 4) : 0.0);
    }
    const double est = mean(clipped);
    const double se = sample_sd(clipped) / std::sqrt(static_cast<double>(cfg.n));
    CHECK(std::abs(est - expected) <= 3.0 * se);

    cfg.student_df = 4.0;
    CHECK_THROWS_AS(sample_iid(cfg, 0), MomentError);
}

TEST_CASE("degenerate filter reduces the shift sequence to iid draws") {
    GeneratorConfig cfg = base_config(Setting::WeakDependence, 128);
    cfg.dependence.filter_length = 0;
    const Dataset dep = sample_weak_dependence(cfg, 7);
    const Dataset iid = sample_iid(cfg, 7);
    CHECK(std::memcmp(dep.samples.data(), iid.samples.data(),
                      sizeof(double) * dep.samples.size()) == 0);

    cfg.dependence.decay_a = 1.2;
    cfg.dependence.filter_length = 3;
    CHECK_THROWS_AS(sample_weak_dependence(cfg, 0), DecayError);
}

TEST_CASE("filtered coefficients match the closed-form lag-one autocorrelation") {
    const double a = 2.0;
    const int filter = 8;
    std::vector<double> c(filter + 1);
    double c_sq = 0.0, c_lag = 0.0;
    for (int k = 0; k <= filter; ++k) c[static_cast<std::size_t>(k)] = std::pow(k + 1.0, -a);
    for (int k = 0; k <= filter; ++k) c_sq += c[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(k)];
    for (int k = 0; k < filter; ++k) c_lag += c[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(k + 1)];
    const double rho = c_lag / c_sq;

    const int d = 16, n = 100000;
    GeneratorConfig cfg;
    cfg.setting = Setting::WeakDependence;
    cfg.n = n;
    cfg.model = SpectrumModel::from_eigenvalues(Eigen::VectorXd::Ones(d));
    cfg.dependence.decay_a = a;
    cfg.dependence.filter_length = filter;
    cfg.seed = 13;
    const Dataset ds = sample_weak_dependence(cfg, 0);

    // One estimate per coordinate; coordinates are independent copies.
    std::vector<double> per_coord;
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int i = 0; i + 1 < n; ++i) s += ds.samples(i, j) * ds.samples(i + 1, j);
        per_coord.push_back(s / (n - 1));
    }
    const double est = mean(per_coord);
    const double se = sample_sd(per_coord) / std::sqrt(static_cast<double>(d));
    CHECK(std::abs(est - rho) <= 3.0 * se);
}

TEST_CASE("swapping one innovation perturbs the filtered process by the filter weight") {
    const double a = 2.0;
    const int filter = 8, n = filter + 1, reps = 3000;
    double norm_sq = 0.0;
    for (int k = 0; k <= filter; ++k) norm_sq += std::pow(k + 1.0, -2.0 * a);

    std::vector<int> lags = {1, 2, 4};
    std::vector<std::vector<double>> fourth(lags.size());
    for (int rep = 0; rep < reps; ++rep) {
        RngStream rng(99, static_cast<std::uint64_t>(rep), Role::Innovations);
        Eigen::MatrixXd eps(n + filter, 1);
        for (int i = 0; i < n + filter; ++i) eps(i, 0) = rng.gaussian();
        Eigen::MatrixXd swapped = eps;
        swapped(filter, 0) = rng.gaussian();  // replace the time-zero innovation
        const Eigen::MatrixXd eta = weak_dependence_filter(eps, filter, a);
        const Eigen::MatrixXd eta_swapped = weak_dependence_filter(swapped, filter, a);
        for (std::size_t li = 0; li < lags.size(); ++li) {
            const double diff = eta(lags[li], 0) - eta_swapped(lags[li], 0);
            fourth[li].push_back(diff * diff * diff * diff);
        }
    }
    for (std::size_t li = 0; li < lags.size(); ++li) {
        const double c_i = std::pow(lags[li] + 1.0, -a);
        const double expected = 12.0 * std::pow(c_i, 4) / (norm_sq * norm_sq);
        const double se = sample_sd(fourth[li]) / std::sqrt(static_cast<double>(reps));
        CHECK(std::abs(mean(fourth[li]) - expected) <= 3.0 * se);
    }
}

TEST_CASE("zero volatility strength reduces the long-memory sequence to iid draws") {
    GeneratorConfig cfg = base_config(Setting::LongMemory, 128);
    cfg.long_memory.sigma = 0.0;
    const Dataset lm = sample_long_memory(cfg, 2);
    const Dataset iid = sample_iid(cfg, 2);
    CHECK(std::memcmp(lm.samples.data(), iid.samples.data(),
                      sizeof(double) * lm.samples.size()) == 0);
}

TEST_CASE("volatility squares average to one") {
    const int n = 100000;
    const double hurst = 0.8, sigma = 0.5;
    RngStream vol(77, 0, Role::Volatility);
    const Eigen::VectorXd g = sample_fgn(n, hurst, vol);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(sigma * g[i] - sigma * sigma / 2.0);
    const double v2_mean = s / n;
    // Long memory inflates the error of the mean to about sigma n^{H-1}.
    const double se = sigma * std::pow(static_cast<double>(n), hurst - 1.0);
    CHECK(std::abs(v2_mean - 1.0) <= 4.0 * se);
}

TEST_CASE("partial sums of squared volatility grow at the long-memory rate") {
    const double hurst = 0.8, sigma = 0.5;
    const std::vector<int> ns = {512, 2048, 8192};
    const int reps = 300;
    std::vector<double> variances;
    for (int n : ns) {
        std::vector<double> sums;
        for (int rep = 0; rep < reps; ++rep) {
            RngStream vol(123, static_cast<std::uint64_t>(rep), Role::Volatility);
            const Eigen::VectorXd g = sample_fgn(n, hurst, vol);
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += std::exp(sigma * g[i] - sigma * sigma / 2.0) - 1.0;
            sums.push_back(s);
        }
        const double sd = sample_sd(sums);
        variances.push_back(sd * sd);
    }
    const double slope =
        loglog_slope({512.0, 2048.0, 8192.0}, variances).slope;
    CHECK(slope >= 2.0 * hurst - 0.15);
    CHECK(slope <= 2.0 * hurst + 0.15);
}

TEST_CASE("one-factor samples reproduce the population covariance exactly in mean") {
    Eigen::VectorXd lam(4);
    lam << 1.0, 0.6, 0.3, 0.1;
    auto model = SpectrumModel::from_eigenvalues(lam);
    const int n = 100000, spikes = 2;
    const Dataset ds = sample_one_factor(model, spikes, n, 31, 0);
    const Eigen::MatrixXd sigma_hat = empirical_covariance(ds.samples);
    for (int a = 0; a < 4; ++a)
        for (int b = a; b < 4; ++b) {
            double var_prod = 0.0;
            const double m_ab = sigma_hat(a, b);
            for (int i = 0; i < n; ++i) {
                const double prod = ds.samples(i, a) * ds.samples(i, b);
                var_prod += (prod - m_ab) * (prod - m_ab);
            }
            const double se = std::sqrt(var_prod / (n - 1.0) / n);
            const double truth = (a == b) ? lam[a] : 0.0;
            CHECK(std::abs(m_ab - truth) <= 3.0 * se);
        }
    CHECK_THROWS_AS(sample_one_factor(model, 9, 16, 1, 0), ModelError);
}

TEST_CASE("one-factor spike variable takes the three documented values") {
    // With one spike the factor lives on {0, +-1}; X - eps lies on the spike
    // direction, so the coordinate along it equals f sqrt(lambda_1) + noise.
    // Check the atom probabilities through the factor draw itself.
    const int reps = 200000;
    int plus = 0, minus = 0;
    RngStream factor(55, 0, Role::Factor);
    for (int i = 0; i < reps; ++i) {
        const double u = factor.uniform();
        if (u < 0.25)
            ++plus;
        else if (u < 0.5)
            ++minus;
    }
    const double p_plus = static_cast<double>(plus) / reps;
    const double p_minus = static_cast<double>(minus) / reps;
    const double se = std::sqrt(0.25 * 0.75 / reps);
    CHECK(std::abs(p_plus - 0.25) <= 4.0 * se);
    CHECK(std::abs(p_minus - 0.25) <= 4.0 * se);
}

TEST_CASE("spiked factor model: population, degenerate weights and moment bounds") {
    SpikedFactorSpec spec;
    spec.base = Eigen::MatrixXd::Identity(3, 3);
    spec.weights = Eigen::VectorXd::Constant(1, 2.0);
    spec.directions = Eigen::MatrixXd::Zero(3, 1);
    spec.directions(0, 0) = 1.0;
    const SpectrumModel pop = spiked_population(spec);
    Eigen::VectorXd expected(3);
    expected << 5.0, 1.0, 1.0;
    CHECK((pop.eigenvalues() - expected).cwiseAbs().maxCoeff() <= 1e-12);

    // No spikes: covariance is the base matrix.
    SpikedFactorSpec flat;
    flat.base = Eigen::MatrixXd::Identity(3, 3);
    flat.weights = Eigen::VectorXd(0);
    flat.directions = Eigen::MatrixXd(3, 0);
    const Dataset ds = sample_spiked_factor(flat, CoeffFamily::Gaussian, 0.0, 50000, 17, 0);
    const Eigen::MatrixXd sigma_hat = empirical_covariance(ds.samples);
    CHECK((sigma_hat - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <=
          4.0 * std::sqrt(3.0 / 50000.0));

    // Coefficient fourth moments stay bounded across spike scales.
    for (double w : {0.5, 2.0, 8.0}) {
        SpikedFactorSpec s = spec;
        s.weights[0] = w;
        const Dataset d2 = sample_spiked_factor(s, CoeffFamily::Gaussian, 0.0, 40000, 19, 0);
        const SpectrumModel p2 = d2.provenance.model;
        for (int j = 0; j < 3; ++j) {
            const Eigen::VectorXd eta =
                (d2.samples * p2.eigenvectors().col(j)) / std::sqrt(p2.eigenvalue(j));
            CHECK(eta.array().pow(4).mean() < 5.0);
        }
    }

    SpikedFactorSpec bad = spec;
    bad.base = -Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(sample_spiked_factor(bad, CoeffFamily::Gaussian, 0.0, 8, 1, 0), ModelError);
}

TEST_CASE("monte carlo mean of the empirical covariance matches the population") {
    Eigen::VectorXd lam(3);
    lam << 1.0, 0.5, 0.25;
    const int trials = 200, n = 2000;
    SpikedFactorSpec spec;
    spec.base = 0.25 * Eigen::MatrixXd::Identity(3, 3);
    spec.weights = Eigen::VectorXd::Constant(1, std::sqrt(0.75));
    spec.directions = Eigen::MatrixXd::Zero(3, 1);
    spec.directions(0, 0) = 1.0;

    for (Setting s : {Setting::IID, Setting::WeakDependence, Setting::LongMemory,
                      Setting::OneFactor, Setting::SpikedFactor}) {
        GeneratorConfig cfg = base_config(s, n, 2024);
        cfg.dependence.filter_length = 5;
        cfg.factor.spikes = 2;
        cfg.factor.spiked = spec;
        if (s == Setting::SpikedFactor) cfg.model = spiked_population(spec);
        const Eigen::MatrixXd truth = cfg.model.matrix();

        std::vector<Eigen::MatrixXd> covs;
        for (int t = 0; t < trials; ++t)
            covs.push_back(empirical_covariance(sample_dataset(cfg, static_cast<std::uint64_t>(t)).samples));
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                std::vector<double> entry;
                for (const auto& c : covs) entry.push_back(c(a, b));
                const double se = sample_sd(entry) / std::sqrt(static_cast<double>(trials));
                CHECK(std::abs(mean(entry) - truth(a, b)) <= 5.0 * se);
            }
    }
}

TEST_CASE("fractional noise: white case, closed-form autocovariance, unit variance") {
    CHECK(fgn_autocovariance(0, 0.8) == 1.0);
    CHECK(std::abs(fgn_autocovariance(1, 0.5)) <= 1e-15);
    CHECK(std::abs(fgn_autocovariance(3, 0.5)) <= 1e-15);
    CHECK_THAT(fgn_autocovariance(1, 0.8), Catch::Matchers::WithinAbs(0.515717, 1e-6));
    CHECK_THAT(fgn_autocovariance(5, 0.8), Catch::Matchers::WithinAbs(0.252623, 1e-6));

    // Sample autocovariances across independent paths, against closed form.
    const int n = 4096, paths = 64;
    for (double hurst : {0.5, 0.8}) {
        std::vector<std::vector<double>> acv(6);
        for (int p = 0; p < paths; ++p) {
            RngStream rng(141, static_cast<std::uint64_t>(p), Role::Volatility);
            const Eigen::VectorXd g = sample_fgn(n, hurst, rng);
            for (int k = 0; k < 6; ++k) {
                double s = 0.0;
                for (int i = 0; i + k < n; ++i) s += g[i] * g[i + k];
                acv[static_cast<std::size_t>(k)].push_back(s / (n - k));
            }
        }
        for (int k = 0; k < 6; ++k) {
            const double est = mean(acv[static_cast<std::size_t>(k)]);
            const double se =
                sample_sd(acv[static_cast<std::size_t>(k)]) / std::sqrt(static_cast<double>(paths));
            CHECK(std::abs(est - fgn_autocovariance(k, hurst)) <= 3.0 * se);
        }
    }

    CHECK_THROWS_AS([] {
        RngStream rng(1, 0, Role::Volatility);
        return sample_fgn(1, 0.8, rng);
    }(), EmbeddingError);
}
