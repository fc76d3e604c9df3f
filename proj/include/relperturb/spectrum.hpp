#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "relperturb/errors.hpp"

namespace relperturb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One distinct eigenvalue of the population operator: its value mu,
/// the contiguous range [first, first + count) of sorted eigenvalue
/// indices sharing it, and its multiplicity count.
struct DistinctBlock {
    int index = 0;  ///< 0-based block position, outermost first
    double mu = 0.0;
    int first = 0;
    int count = 0;
};

/// Population covariance operator in spectral form: eigenvalues sorted in
/// descending order, an orthonormal eigenvector basis, and the partition
/// of indices into distinct-eigenvalue blocks.
///
/// All indices in this library are 0-based: eigenvalue j is the (j+1)-th
/// largest, block r the (r+1)-th largest distinct eigenvalue.
/// Instances are immutable after construction and safe to share across
/// threads; every operation below is a pure function of its inputs.
class SpectrumModel {
  public:
    /// Validates and groups. Eigenvalues must be positive and non-increasing;
    /// eigenvectors orthonormal within 1e-8. Consecutive eigenvalues are merged
    /// into one block while they stay within grouping_tol * (block head) of the
    /// block head; the block value is the mean of its members.
    static SpectrumModel build(VectorXd eigenvalues, MatrixXd eigenvectors,
                               double grouping_tol = 1e-8) {
        const int d = static_cast<int>(eigenvalues.size());
        if (d == 0) throw InvalidSpectrum("empty spectrum");
        for (int j = 0; j < d; ++j) {
            if (!(eigenvalues[j] > 0.0)) throw InvalidSpectrum("eigenvalues must be positive");
            if (j > 0 && eigenvalues[j] > eigenvalues[j - 1])
                throw InvalidSpectrum("eigenvalues must be non-increasing");
        }
        if (eigenvectors.rows() != d || eigenvectors.cols() != d)
            throw InvalidBasis("eigenvector matrix must be d x d");
        const double ortho_err =
            (eigenvectors.transpose() * eigenvectors - MatrixXd::Identity(d, d))
                .cwiseAbs()
                .maxCoeff();
        if (ortho_err > 1e-8) throw InvalidBasis("eigenvectors not orthonormal");

        SpectrumModel m;
        m.eigenvalues_ = std::move(eigenvalues);
        m.eigenvectors_ = std::move(eigenvectors);
        int first = 0;
        while (first < d) {
            int last = first;
            while (last + 1 < d &&
                   m.eigenvalues_[first] - m.eigenvalues_[last + 1] <=
                       grouping_tol * m.eigenvalues_[first]) {
                ++last;
            }
            DistinctBlock b;
            b.index = static_cast<int>(m.blocks_.size());
            b.first = first;
            b.count = last - first + 1;
            b.mu = m.eigenvalues_.segment(first, b.count).mean();
            m.blocks_.push_back(b);
            first = last + 1;
        }
        m.block_of_.resize(d);
        for (const auto& b : m.blocks_)
            for (int j = b.first; j < b.first + b.count; ++j) m.block_of_[j] = b.index;
        return m;
    }

    /// Spectrum with the identity eigenbasis.
    static SpectrumModel from_eigenvalues(VectorXd eigenvalues, double grouping_tol = 1e-8) {
        const int d = static_cast<int>(eigenvalues.size());
        return build(std::move(eigenvalues), MatrixXd::Identity(d, d), grouping_tol);
    }

    int dim() const { return static_cast<int>(eigenvalues_.size()); }
    int num_blocks() const { return static_cast<int>(blocks_.size()); }
    const VectorXd& eigenvalues() const { return eigenvalues_; }
    const MatrixXd& eigenvectors() const { return eigenvectors_; }
    const std::vector<DistinctBlock>& blocks() const { return blocks_; }

    double eigenvalue(int j) const {
        check_index(j);
        return eigenvalues_[j];
    }

    const DistinctBlock& block(int r) const {
        if (r < 0 || r >= num_blocks()) throw InvalidIndex("block index out of range");
        return blocks_[static_cast<std::size_t>(r)];
    }

    int block_of(int j) const {
        check_index(j);
        return block_of_[static_cast<std::size_t>(j)];
    }

    bool is_simple(int j) const { return block(block_of(j)).count == 1; }

    double trace() const { return eigenvalues_.sum(); }

    /// tr_{>= r0}: total weight of blocks r0, r0+1, ...; zero for an empty tail.
    double tail_trace(int r0) const {
        if (r0 < 0 || r0 > num_blocks()) throw InvalidIndex("tail block index out of range");
        double t = 0.0;
        for (int s = r0; s < num_blocks(); ++s)
            t += blocks_[static_cast<std::size_t>(s)].count * blocks_[static_cast<std::size_t>(s)].mu;
        return t;
    }

    /// Dense reconstruction U diag(lambda) U^T.
    MatrixXd matrix() const {
        return eigenvectors_ * eigenvalues_.asDiagonal() * eigenvectors_.transpose();
    }

    void check_index(int j) const {
        if (j < 0 || j >= dim()) throw InvalidIndex("eigenvalue index out of range");
    }

  private:
    SpectrumModel() = default;
    VectorXd eigenvalues_;
    MatrixXd eigenvectors_;
    std::vector<DistinctBlock> blocks_;
    std::vector<int> block_of_;
};

/// Spectral gap g_j: distance of lambda_j to its nearest neighbour.
/// g_0 = lambda_0 - lambda_1; interior j use the smaller of the two
/// one-sided gaps; the last index uses the gap to its predecessor.
inline double spectral_gap(const SpectrumModel& m, int j) {
    m.check_index(j);
    if (m.dim() == 1) throw NoGap("spectral gap undefined for a single eigenvalue");
    if (!m.is_simple(j)) throw NotSimple("spectral gap requires a simple eigenvalue");
    const VectorXd& lam = m.eigenvalues();
    if (j == 0) return lam[0] - lam[1];
    if (j == m.dim() - 1) return lam[j - 1] - lam[j];
    return std::min(lam[j - 1] - lam[j], lam[j] - lam[j + 1]);
}

/// Gap of a distinct block: min distance of mu_r to its neighbouring
/// distinct values; boundary blocks use the single available gap.
inline double block_gap(const SpectrumModel& m, int r) {
    const auto& blocks = m.blocks();
    if (blocks.size() < 2) throw NoGap("block gap undefined for a single block");
    const DistinctBlock& b = m.block(r);
    if (r == 0) return b.mu - blocks[1].mu;
    if (r == m.num_blocks() - 1) return blocks[blocks.size() - 2].mu - b.mu;
    return std::min(blocks[static_cast<std::size_t>(r - 1)].mu - b.mu,
                    b.mu - blocks[static_cast<std::size_t>(r + 1)].mu);
}

/// Relative rank of a simple eigenvalue:
///   r_j = sum_{k != j} lambda_k / |lambda_j - lambda_k| + lambda_j / g_j.
/// Measures how well lambda_j is separated from the rest of the spectrum
/// relative to eigenvalue magnitudes.
inline double relative_rank(const SpectrumModel& m, int j) {
    m.check_index(j);
    if (!m.is_simple(j)) throw NotSimple("relative rank (simple form) requires a simple eigenvalue");
    const VectorXd& lam = m.eigenvalues();
    double sum = 0.0;
    for (int k = 0; k < m.dim(); ++k) {
        if (k == j) continue;
        sum += lam[k] / std::abs(lam[j] - lam[k]);
    }
    return sum + lam[j] / spectral_gap(m, j);
}

/// Relative rank of a distinct block, weighting each distinct value by its
/// multiplicity:
///   r_r = sum_{s != r} m_s mu_s / |mu_r - mu_s| + m_r mu_r / gap_r.
/// Coincides with relative_rank at the block's index when all
/// multiplicities are one.
inline double block_relative_rank(const SpectrumModel& m, int r) {
    const DistinctBlock& b = m.block(r);
    double sum = 0.0;
    for (const auto& s : m.blocks()) {
        if (s.index == r) continue;
        sum += s.count * s.mu / std::abs(b.mu - s.mu);
    }
    return sum + b.count * b.mu / block_gap(m, r);
}

/// Orthogonal projector onto the eigenspace of block r.
inline MatrixXd projector(const SpectrumModel& m, int r) {
    const DistinctBlock& b = m.block(r);
    const auto cols = m.eigenvectors().middleCols(b.first, b.count);
    return cols * cols.transpose();
}

/// Projector onto the eigenspaces of blocks r0, r0+1, ... (zero if empty).
inline MatrixXd tail_projector(const SpectrumModel& m, int r0) {
    if (r0 < 0 || r0 > m.num_blocks()) throw InvalidIndex("tail block index out of range");
    MatrixXd p = MatrixXd::Zero(m.dim(), m.dim());
    if (r0 == m.num_blocks()) return p;
    const int first = m.block(r0).first;
    const int count = m.dim() - first;
    const auto cols = m.eigenvectors().middleCols(first, count);
    return cols * cols.transpose();
}

/// Reduced resolvent at mu_r: R_r = sum_{s != r} (mu_s - mu_r)^{-1} P_s.
/// Satisfies R_r (Sigma - mu_r I) = I - P_r and R_r P_r = 0.
inline MatrixXd resolvent(const SpectrumModel& m, int r) {
    const DistinctBlock& b = m.block(r);
    MatrixXd res = MatrixXd::Zero(m.dim(), m.dim());
    for (const auto& s : m.blocks()) {
        if (s.index == r) continue;
        const auto cols = m.eigenvectors().middleCols(s.first, s.count);
        res.noalias() += (cols * cols.transpose()) / (s.mu - b.mu);
    }
    return res;
}

/// Relative eigenvector scale sqrt(sum_{k != j} lambda_j lambda_k /
/// (lambda_j - lambda_k)^2): the natural yardstick for deviations of the
/// j-th empirical eigenvector.
inline double eigvec_sensitivity(const SpectrumModel& m, int j) {
    m.check_index(j);
    if (!m.is_simple(j)) throw NotSimple("eigvec_sensitivity requires a simple eigenvalue");
    const VectorXd& lam = m.eigenvalues();
    double sum = 0.0;
    for (int k = 0; k < m.dim(); ++k) {
        if (k == j) continue;
        const double diff = lam[j] - lam[k];
        sum += lam[j] * lam[k] / (diff * diff);
    }
    return std::sqrt(sum);
}

struct ConvexityRow {
    int j = 0;          ///< 0-based index
    double s1 = 0.0;    ///< sum_{k != j} lambda_k / |lambda_j - lambda_k|
    double s2 = 0.0;    ///< sum_{k != j} lambda_j lambda_k / (lambda_j - lambda_k)^2
    double s1_ratio = 0.0;  ///< s1 / max((j+1) log(j+1), 1)
    double s2_ratio = 0.0;  ///< s2 / (j+1)^2
};

/// Per-index separation sums with their growth-normalised ratios. For
/// convex eigenvalue decays both ratios stay bounded in j; the table lets
/// a harness check that numerically. The log-denominator is clamped to 1
/// so the first row stays finite.
inline std::vector<ConvexityRow> convexity_bound_report(const SpectrumModel& m, int j_max) {
    if (j_max < 0 || j_max >= m.dim()) throw InvalidIndex("j_max out of range");
    const VectorXd& lam = m.eigenvalues();
    std::vector<ConvexityRow> rows;
    rows.reserve(static_cast<std::size_t>(j_max) + 1);
    for (int j = 0; j <= j_max; ++j) {
        if (!m.is_simple(j)) throw NotSimple("convexity report requires simple eigenvalues");
        ConvexityRow row;
        row.j = j;
        for (int k = 0; k < m.dim(); ++k) {
            if (k == j) continue;
            const double diff = std::abs(lam[j] - lam[k]);
            row.s1 += lam[k] / diff;
            row.s2 += lam[j] * lam[k] / (diff * diff);
        }
        const double one_based = static_cast<double>(j) + 1.0;
        row.s1_ratio = row.s1 / std::max(one_based * std::log(one_based), 1.0);
        row.s2_ratio = row.s2 / (one_based * one_based);
        rows.push_back(row);
    }
    return rows;
}

/// Smallest block index r0 with mu_{r0} <= mu_r / 2; num_blocks() when no
/// block in the truncation is that small (empty tail).
inline int default_tail_block(const SpectrumModel& m, int r) {
    const double half = m.block(r).mu / 2.0;
    for (int s = r + 1; s < m.num_blocks(); ++s)
        if (m.block(s).mu <= half) return s;
    return m.num_blocks();
}

/// Truncation dimension for the two standard decay families such that the
/// discarded tail trace stays below tail_fraction of the total. Decay is
/// evaluated at 1-based positions; bounds use integral comparisons.
inline int suggested_truncation_poly(double alpha, double tail_fraction = 1e-6,
                                     int max_dim = 2048) {
    if (!(alpha > 1.0)) throw ConfigError("polynomial decay needs alpha > 1 for a finite trace");
    double total = 0.0;
    for (int j = 1; j <= max_dim; ++j) total += std::pow(j, -alpha);
    total += std::pow(max_dim, 1.0 - alpha) / (alpha - 1.0);
    double head = 0.0;
    for (int d = 1; d <= max_dim; ++d) {
        head += std::pow(d, -alpha);
        const double tail = std::pow(d, 1.0 - alpha) / (alpha - 1.0);
        if (tail <= tail_fraction * total) return d;
    }
    return max_dim;
}

inline int suggested_truncation_exp(double alpha, double tail_fraction = 1e-6,
                                    int max_dim = 2048) {
    if (!(alpha > 0.0)) throw ConfigError("exponential decay needs alpha > 0");
    const double total = std::exp(-alpha) / (1.0 - std::exp(-alpha));
    for (int d = 1; d <= max_dim; ++d) {
        const double tail = std::exp(-alpha * (d + 1)) / (1.0 - std::exp(-alpha));
        if (tail <= tail_fraction * total) return d;
    }
    return max_dim;
}

}  // namespace relperturb
