#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "relperturb/estimation.hpp"
#include "support.hpp"

using namespace relperturb;
using test_support::random_spectrum;

TEST_CASE("empirical covariance basics") {
    Eigen::MatrixXd one(1, 3);
    one << 1, 2, 3;
    const Eigen::MatrixXd outer = empirical_covariance(one);
    CHECK((outer - one.transpose() * one).cwiseAbs().maxCoeff() <= 1e-14);

    const Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(4, 4);
    CHECK((empirical_covariance(basis) - 0.25 * Eigen::MatrixXd::Identity(4, 4))
              .cwiseAbs()
              .maxCoeff() <= 1e-14);

    CHECK_THROWS_AS(empirical_covariance(Eigen::MatrixXd(0, 3)), DimError);
}

TEST_CASE("empirical covariance matches a naive summation oracle") {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd samples(50, 4);
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 4; ++j) samples(i, j) = normal(rng);

    Eigen::MatrixXd oracle = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 50; ++i)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) oracle(a, b) += samples(i, a) * samples(i, b) / 50.0;

    CHECK((empirical_covariance(samples) - oracle).cwiseAbs().maxCoeff() <= 1e-12);

    // Centered variant subtracts the column means first.
    Eigen::MatrixXd shifted = samples;
    shifted.col(0).array() += 10.0;
    const Eigen::MatrixXd centered = empirical_covariance(shifted, true);
    const Eigen::RowVectorXd mu = shifted.colwise().mean();
    Eigen::MatrixXd oracle_centered = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 50; ++i) {
        const Eigen::RowVectorXd row = shifted.row(i) - mu;
        oracle_centered += row.transpose() * row / 50.0;
    }
    CHECK((centered - oracle_centered).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("empirical spectrum sorting and alignment contract") {
    Eigen::VectorXd lam(3);
    lam << 3, 2, 1;
    auto population = SpectrumModel::from_eigenvalues(lam);

    // Population eigendecomposition reproduces itself.
    const EmpiricalSpectrum self(population.matrix(), population);
    CHECK((self.eigenvalues() - lam).cwiseAbs().maxCoeff() <= 1e-10);
    for (int r = 0; r < 3; ++r)
        CHECK((self.projector(r) - projector(population, r)).cwiseAbs().maxCoeff() <= 1e-10);

    // Ascending input gets re-sorted descending.
    Eigen::MatrixXd ascending = Eigen::Vector3d(1, 2, 3).asDiagonal();
    const EmpiricalSpectrum sorted(ascending, population);
    CHECK(sorted.eigenvalue(0) == 3.0);
    CHECK(sorted.eigenvalue(1) == 2.0);
    CHECK(sorted.eigenvalue(2) == 1.0);

    // Sign alignment: eigenvectors have positive overlap with the population.
    std::mt19937_64 rng(103);
    auto m = random_spectrum(5, rng);
    const EmpiricalSpectrum aligned(m.matrix(), m);
    for (int j = 0; j < 5; ++j)
        CHECK(aligned.eigenvector(j).dot(m.eigenvectors().col(j)) > 0.0);

    CHECK_THROWS_AS(EmpiricalSpectrum(Eigen::MatrixXd::Zero(2, 2), population), DimError);
}

TEST_CASE("rank-deficient covariances expose exactly d - n zero eigenvalues") {
    std::mt19937_64 rng(107);
    auto m = random_spectrum(6, rng);
    std::normal_distribution<double> normal;
    const int n = 3;
    Eigen::MatrixXd h(n, 6);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 6; ++j) h(i, j) = normal(rng);
    const Eigen::MatrixXd samples =
        h * m.eigenvalues().cwiseSqrt().asDiagonal() * m.eigenvectors().transpose();
    const EmpiricalSpectrum emp(empirical_covariance(samples), m);
    for (int j = n; j < 6; ++j) CHECK(std::abs(emp.eigenvalue(j)) <= 1e-9);
    for (int j = 0; j < n; ++j) CHECK(emp.eigenvalue(j) > 1e-9);
}

TEST_CASE("spectrum-level invariants of the estimator") {
    std::mt19937_64 rng(109);
    auto m = random_spectrum(5, rng);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd h(40, 5);
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 5; ++j) h(i, j) = normal(rng);
    const Eigen::MatrixXd samples =
        h * m.eigenvalues().cwiseSqrt().asDiagonal() * m.eigenvectors().transpose();
    const Eigen::MatrixXd sigma_hat = empirical_covariance(samples);

    double mean_norm_sq = 0.0;
    for (int i = 0; i < 40; ++i) mean_norm_sq += samples.row(i).squaredNorm() / 40.0;
    CHECK_THAT(sigma_hat.trace(), Catch::Matchers::WithinAbs(mean_norm_sq, 1e-10));

    const EmpiricalSpectrum emp(sigma_hat, m);
    Eigen::MatrixXd sum_p = Eigen::MatrixXd::Zero(5, 5);
    for (int r = 0; r < m.num_blocks(); ++r) {
        const Eigen::MatrixXd p_hat = emp.projector(r);
        sum_p += p_hat;
        CHECK((p_hat * p_hat - p_hat).cwiseAbs().maxCoeff() <= 1e-8);
        const Eigen::MatrixXd p_pop = projector(m, r);
        const double lhs = (p_hat - p_pop).squaredNorm();
        const double rhs = 2.0 * (p_hat * (Eigen::MatrixXd::Identity(5, 5) - p_pop)).trace();
        CHECK_THAT(lhs, Catch::Matchers::WithinAbs(rhs, 1e-9));
    }
    CHECK((sum_p - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("projector distance") {
    Eigen::MatrixXd p1 = Eigen::Vector2d(1, 0).asDiagonal();
    Eigen::MatrixXd p2 = Eigen::Vector2d(0, 1).asDiagonal();
    CHECK(projector_distance(p1, p1) == 0.0);
    CHECK_THAT(projector_distance(p1, p2), Catch::Matchers::WithinAbs(std::sqrt(2.0), 1e-14));

    std::mt19937_64 rng(113);
    const Eigen::MatrixXd a = test_support::random_symmetric(4, rng);
    const Eigen::MatrixXd b = test_support::random_symmetric(4, rng);
    double frob = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) frob += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    CHECK_THAT(projector_distance(a, b), Catch::Matchers::WithinAbs(std::sqrt(frob), 1e-12));
    CHECK_THROWS_AS(projector_distance(a, Eigen::MatrixXd::Zero(3, 3)), DimError);
}
