#pragma once

#include <Eigen/Dense>
#include <vector>

#include "relperturb/errors.hpp"
#include "relperturb/spectrum.hpp"

namespace relperturb {

/// Uncentered empirical covariance (1/n) sum_i X_i X_i^T of an n x d
/// sample matrix (rows are observations). Mean-centering is available
/// behind a flag but defaults off: the estimator of record is uncentered
/// for centered data.
inline MatrixXd empirical_covariance(const MatrixXd& samples, bool center = false) {
    if (samples.rows() == 0) throw DimError("empirical_covariance: empty dataset");
    const double n = static_cast<double>(samples.rows());
    if (!center) {
        MatrixXd sigma = MatrixXd::Zero(samples.cols(), samples.cols());
        sigma.selfadjointView<Eigen::Lower>().rankUpdate(samples.transpose(), 1.0 / n);
        return MatrixXd(sigma.selfadjointView<Eigen::Lower>());
    }
    const Eigen::RowVectorXd mu = samples.colwise().mean();
    const MatrixXd centered = samples.rowwise() - mu;
    MatrixXd sigma = MatrixXd::Zero(samples.cols(), samples.cols());
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(), 1.0 / n);
    return MatrixXd(sigma.selfadjointView<Eigen::Lower>());
}

/// Eigensystem of a symmetric matrix, sorted descending and sign-aligned
/// against a population basis. Empirical blocks always reuse the
/// population index sets; no empirical tie-grouping happens here.
class EmpiricalSpectrum {
  public:
    /// Decomposes sigma_hat with a dense symmetric eigensolver, re-sorts
    /// eigenvalues in descending order, and flips each eigenvector whose
    /// inner product with its population counterpart is negative. A zero
    /// inner product is left unflipped; expansion-level code that needs a
    /// strict sign decision reports that case explicitly.
    EmpiricalSpectrum(const MatrixXd& sigma_hat, const SpectrumModel& population)
        : population_(&population) {
        const int d = population.dim();
        if (sigma_hat.rows() != d || sigma_hat.cols() != d)
            throw DimError("empirical spectrum: dimension mismatch with population");
        Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sigma_hat);
        if (solver.info() != Eigen::Success)
            throw Error("symmetric eigendecomposition failed");
        eigenvalues_.resize(d);
        eigenvectors_.resize(d, d);
        for (int j = 0; j < d; ++j) {
            // Eigen sorts ascending; reverse for the descending convention.
            eigenvalues_[j] = solver.eigenvalues()[d - 1 - j];
            eigenvectors_.col(j) = solver.eigenvectors().col(d - 1 - j);
            if (eigenvectors_.col(j).dot(population.eigenvectors().col(j)) < 0.0)
                eigenvectors_.col(j) = -eigenvectors_.col(j);
        }
    }

    const VectorXd& eigenvalues() const { return eigenvalues_; }
    const MatrixXd& eigenvectors() const { return eigenvectors_; }
    const SpectrumModel& population() const { return *population_; }

    double eigenvalue(int j) const {
        population_->check_index(j);
        return eigenvalues_[j];
    }

    VectorXd eigenvector(int j) const {
        population_->check_index(j);
        return eigenvectors_.col(j);
    }

    /// Empirical projector for population block r: sum of u_hat_j u_hat_j^T
    /// over the population index set of that block.
    MatrixXd projector(int r) const {
        const DistinctBlock& b = population_->block(r);
        const auto cols = eigenvectors_.middleCols(b.first, b.count);
        return cols * cols.transpose();
    }

  private:
    const SpectrumModel* population_;
    VectorXd eigenvalues_;
    MatrixXd eigenvectors_;
};

/// Hilbert-Schmidt distance between two projectors (or any matrices).
inline double projector_distance(const MatrixXd& p_hat, const MatrixXd& p) {
    if (p_hat.rows() != p.rows() || p_hat.cols() != p.cols())
        throw DimError("projector_distance: shape mismatch");
    return (p_hat - p).norm();
}

}  // namespace relperturb
