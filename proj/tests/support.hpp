#pragma once

// Shared generators for randomized tests: spectra with controlled gaps,
// orthonormal bases, and perturbation directions normalised so that the
// sup of the relative coefficients is exactly one.

#include <Eigen/Dense>
#include <random>

#include "relperturb/perturbation.hpp"
#include "relperturb/spectrum.hpp"

namespace test_support {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_orthonormal(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    MatrixXd g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = normal(rng);
    Eigen::HouseholderQR<MatrixXd> qr(g);
    MatrixXd q = qr.householderQ();
    // Fix signs so Q is a deterministic function of g.
    const MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    return q;
}

inline MatrixXd random_symmetric(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    MatrixXd e(d, d);
    for (int i = 0; i < d; ++i) {
        e(i, i) = normal(rng);
        for (int j = i + 1; j < d; ++j) {
            e(i, j) = normal(rng);
            e(j, i) = e(i, j);
        }
    }
    return e;
}

/// All-simple spectrum with relative neighbour gaps of at least 20%.
inline relperturb::SpectrumModel random_spectrum(int d, std::mt19937_64& rng,
                                                 bool identity_basis = false) {
    std::uniform_real_distribution<double> ratio(0.35, 0.8);
    VectorXd lam(d);
    lam[0] = 1.0;
    for (int j = 1; j < d; ++j) lam[j] = lam[j - 1] * ratio(rng);
    if (identity_basis) return relperturb::SpectrumModel::from_eigenvalues(std::move(lam));
    return relperturb::SpectrumModel::build(std::move(lam), random_orthonormal(d, rng));
}

/// Spectrum with exact ties: random block multiplicities summing to d
/// (at least two blocks), distinct values decaying geometrically.
inline relperturb::SpectrumModel random_blocked_spectrum(int d, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> mult(1, 3);
    std::vector<int> counts;
    int used = 0;
    while (used < d) {
        const int c = std::min(mult(rng), d - used);
        counts.push_back(c);
        used += c;
    }
    if (counts.size() < 2) {  // force at least two distinct values
        counts.back() -= 1;
        counts.push_back(1);
    }
    std::uniform_real_distribution<double> ratio(0.3, 0.6);
    VectorXd lam(d);
    double mu = 1.0;
    int at = 0;
    for (int c : counts) {
        for (int k = 0; k < c; ++k) lam[at++] = mu;
        mu *= ratio(rng);
    }
    return relperturb::SpectrumModel::build(std::move(lam), random_orthonormal(d, rng), 1e-12);
}

/// Symmetric direction scaled so that sup |eta_bar(D)| = 1; then E = x D
/// has relative-coefficient sup exactly x.
inline MatrixXd normalized_direction(const relperturb::SpectrumModel& m, std::mt19937_64& rng) {
    const MatrixXd raw = random_symmetric(m.dim(), rng);
    const relperturb::Perturbation p = relperturb::relative_coefficients(m, raw);
    return raw / p.x_full;
}

}  // namespace test_support
