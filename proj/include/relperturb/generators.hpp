#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "relperturb/errors.hpp"
#include "relperturb/fgn.hpp"
#include "relperturb/rng.hpp"
#include "relperturb/spectrum.hpp"

namespace relperturb {

enum class Setting { IID, WeakDependence, LongMemory, OneFactor, SpikedFactor };
enum class CoeffFamily { Gaussian, StudentT, ScaledRademacher };

/// Finite linear filter eta_i = sum_{k=0..L} c_k eps_{i-k} with polynomial
/// coefficients c_k = (k+1)^{-a}, normalised to unit variance. The coupling
/// distance after swapping one innovation then decays like i^{-a}.
struct DependenceParams {
    double decay_a = 2.0;
    int filter_length = 0;
};

/// Lognormal volatility subordinated to fractional Gaussian noise:
/// v_i^2 = exp(sigma G_i - sigma^2 / 2), so E v_i^2 = 1 and partial sums of
/// v_i^2 - 1 inherit the n^hurst scaling of the noise.
struct LongMemoryParams {
    double hurst = 0.8;
    double sigma = 0.5;
};

/// Spiked covariance pieces: Sigma = sum_k weights_k^2 f_k f_k^T + base.
/// Directions are the columns of `directions` and must be orthonormal;
/// `base` must be symmetric positive definite.
struct SpikedFactorSpec {
    VectorXd weights;
    MatrixXd directions;
    MatrixXd base;
};

struct FactorParams {
    int spikes = 1;           ///< spike count of the one-factor construction
    SpikedFactorSpec spiked;  ///< pieces of the spiked model (empty if unused)
};

struct GeneratorConfig {
    Setting setting = Setting::IID;
    int n = 0;
    SpectrumModel model = SpectrumModel::from_eigenvalues(VectorXd::Ones(1));
    CoeffFamily family = CoeffFamily::Gaussian;
    double student_df = 9.0;
    DependenceParams dependence;
    LongMemoryParams long_memory;
    FactorParams factor;
    std::uint64_t seed = 0;
};

/// n x d sample matrix (rows are observations) plus the exact configuration
/// that produced it. The population truth is provenance.model.
struct Dataset {
    MatrixXd samples;
    GeneratorConfig provenance;
    std::uint64_t trial = 0;
};

namespace detail {

inline double draw_coefficient(RngStream& rng, CoeffFamily family, double df) {
    switch (family) {
        case CoeffFamily::Gaussian:
            return rng.gaussian();
        case CoeffFamily::StudentT:
            return rng.student_t_unit(df);
        case CoeffFamily::ScaledRademacher:
            return rng.rademacher();
    }
    throw ConfigError("unknown coefficient family");
}

inline void validate_family(CoeffFamily family, double df) {
    if (family == CoeffFamily::StudentT && !(df > 4.0))
        throw MomentError("student-t coefficients need df > 4");
}

/// Coefficient rows to samples: X = H diag(sqrt(lambda)) U^T.
inline MatrixXd to_samples(const SpectrumModel& m, MatrixXd coeffs) {
    coeffs *= m.eigenvalues().cwiseSqrt().asDiagonal();
    if (m.eigenvectors().isIdentity(0.0)) return coeffs;
    return coeffs * m.eigenvectors().transpose();
}

inline MatrixXd draw_matrix(int rows, int cols, RngStream& rng, CoeffFamily family, double df) {
    MatrixXd h(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) h(i, j) = draw_coefficient(rng, family, df);
    return h;
}

}  // namespace detail

/// Independent Karhunen-Loeve samples X_i = sum_j sqrt(lambda_j) eta_ij u_j
/// with i.i.d. unit-variance coefficient vectors.
inline Dataset sample_iid(const GeneratorConfig& cfg, std::uint64_t trial) {
    if (cfg.n < 1) throw ConfigError("sample count must be positive");
    detail::validate_family(cfg.family, cfg.student_df);
    RngStream coeff(cfg.seed, trial, Role::Coefficients);
    Dataset ds;
    ds.samples = detail::to_samples(
        cfg.model, detail::draw_matrix(cfg.n, cfg.model.dim(), coeff, cfg.family, cfg.student_df));
    ds.provenance = cfg;
    ds.trial = trial;
    return ds;
}

/// Normalised filter application: innovations has n + L rows (times -L..n-1),
/// output row i is sum_k c_k eps_{i-k} / sqrt(sum c^2).
inline MatrixXd weak_dependence_filter(const MatrixXd& innovations, int filter_length,
                                       double decay_a) {
    if (!(decay_a > 1.5)) throw DecayError("weak dependence needs decay exponent a > 3/2");
    if (filter_length < 0) throw ConfigError("filter length must be nonnegative");
    const int n = static_cast<int>(innovations.rows()) - filter_length;
    if (n < 1) throw DimError("innovation matrix too short for the filter");
    std::vector<double> c(static_cast<std::size_t>(filter_length) + 1);
    double norm_sq = 0.0;
    for (int k = 0; k <= filter_length; ++k) {
        c[static_cast<std::size_t>(k)] = std::pow(static_cast<double>(k + 1), -decay_a);
        norm_sq += c[static_cast<std::size_t>(k)] * c[static_cast<std::size_t>(k)];
    }
    const double norm = std::sqrt(norm_sq);
    MatrixXd out(n, innovations.cols());
    for (int i = 0; i < n; ++i) {
        out.row(i).setZero();
        for (int k = 0; k <= filter_length; ++k)
            out.row(i) += c[static_cast<std::size_t>(k)] * innovations.row(filter_length + i - k);
        out.row(i) /= norm;
    }
    return out;
}

/// Bernoulli-shift coefficients through the finite linear filter above.
/// filter_length = 0 reproduces sample_iid draw for draw.
inline Dataset sample_weak_dependence(const GeneratorConfig& cfg, std::uint64_t trial) {
    if (cfg.n < 1) throw ConfigError("sample count must be positive");
    detail::validate_family(cfg.family, cfg.student_df);
    if (!(cfg.dependence.decay_a > 1.5))
        throw DecayError("weak dependence needs decay exponent a > 3/2");
    RngStream coeff(cfg.seed, trial, Role::Coefficients);
    const MatrixXd innovations = detail::draw_matrix(
        cfg.n + cfg.dependence.filter_length, cfg.model.dim(), coeff, cfg.family, cfg.student_df);
    const MatrixXd eta =
        weak_dependence_filter(innovations, cfg.dependence.filter_length, cfg.dependence.decay_a);
    Dataset ds;
    ds.samples = detail::to_samples(cfg.model, eta);
    ds.provenance = cfg;
    ds.trial = trial;
    return ds;
}

/// Volatility-modulated samples X_i = v_i eps_i with lognormal long-memory
/// volatility and independent Karhunen-Loeve innovations. sigma = 0 makes
/// v identically one and reproduces sample_iid draw for draw (volatility
/// and coefficients use disjoint streams).
inline Dataset sample_long_memory(const GeneratorConfig& cfg, std::uint64_t trial) {
    if (cfg.n < 1) throw ConfigError("sample count must be positive");
    detail::validate_family(cfg.family, cfg.student_df);
    const double hurst = cfg.long_memory.hurst;
    const double sigma = cfg.long_memory.sigma;
    if (!(hurst > 0.5 && hurst < 1.0)) throw ConfigError("hurst must lie in (1/2, 1)");
    if (sigma < 0.0) throw ConfigError("sigma must be nonnegative");

    RngStream coeff(cfg.seed, trial, Role::Coefficients);
    MatrixXd eta =
        detail::draw_matrix(cfg.n, cfg.model.dim(), coeff, cfg.family, cfg.student_df);
    if (sigma > 0.0) {
        RngStream vol(cfg.seed, trial, Role::Volatility);
        const Eigen::VectorXd g = sample_fgn(cfg.n, hurst, vol);
        for (int i = 0; i < cfg.n; ++i)
            eta.row(i) *= std::exp(sigma * g[i] / 2.0 - sigma * sigma / 4.0);
    }
    Dataset ds;
    ds.samples = detail::to_samples(cfg.model, eta);
    ds.provenance = cfg;
    ds.trial = trial;
    return ds;
}

/// One-factor anti-concentration model: X = f F + eps with
/// F = sum_{j < r} sqrt(lambda_j) u_j, f in {0, +-sqrt(r)} with
/// P(f = +-sqrt(r)) = 1/(4 r^2), and Gaussian eps with covariance
/// Sigma - (1/(2r)) F F^T. The total covariance of X is exactly Sigma.
inline Dataset sample_one_factor(const SpectrumModel& model, int spikes, int n,
                                 std::uint64_t seed, std::uint64_t trial) {
    if (n < 1) throw ConfigError("sample count must be positive");
    const int d = model.dim();
    if (spikes < 1 || spikes > d) throw ModelError("spike count must lie in [1, d]");

    // Work in the eigenbasis: the noise covariance there is
    // diag(lambda) - (1/(2r)) s s^T with s_j = sqrt(lambda_j) 1_{j < r}.
    VectorXd s = VectorXd::Zero(d);
    for (int j = 0; j < spikes; ++j) s[j] = std::sqrt(model.eigenvalue(j));
    MatrixXd noise_cov = MatrixXd(model.eigenvalues().asDiagonal());
    noise_cov -= (1.0 / (2.0 * spikes)) * s * s.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(noise_cov);
    if (es.eigenvalues().minCoeff() < -1e-12 * model.eigenvalue(0))
        throw ModelError("one-factor noise covariance not positive semidefinite");
    const MatrixXd root = es.eigenvectors() *
                          es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                          es.eigenvectors().transpose();

    RngStream factor(seed, trial, Role::Factor);
    RngStream noise(seed, trial, Role::Noise);
    const double p_atom = 1.0 / (4.0 * static_cast<double>(spikes) * spikes);
    const double root_r = std::sqrt(static_cast<double>(spikes));

    MatrixXd coords(n, d);
    VectorXd g(d);
    for (int i = 0; i < n; ++i) {
        const double u = factor.uniform();
        const double f = (u < p_atom) ? root_r : (u < 2.0 * p_atom ? -root_r : 0.0);
        for (int j = 0; j < d; ++j) g[j] = noise.gaussian();
        coords.row(i) = (f * s + root * g).transpose();
    }
    Dataset ds;
    ds.samples = model.eigenvectors().isIdentity(0.0)
                     ? std::move(coords)
                     : MatrixXd(coords * model.eigenvectors().transpose());
    ds.provenance.setting = Setting::OneFactor;
    ds.provenance.n = n;
    ds.provenance.model = model;
    ds.provenance.factor.spikes = spikes;
    ds.provenance.seed = seed;
    ds.trial = trial;
    return ds;
}

/// Population covariance of the spiked factor model.
inline SpectrumModel spiked_population(const SpikedFactorSpec& spec, double grouping_tol = 1e-8) {
    const int d = static_cast<int>(spec.base.rows());
    const int k = static_cast<int>(spec.weights.size());
    if (spec.base.cols() != d) throw ModelError("base covariance must be square");
    if (spec.directions.rows() != d || spec.directions.cols() != k)
        throw ModelError("directions must be d x k");
    MatrixXd sigma = spec.base;
    for (int a = 0; a < k; ++a)
        sigma += spec.weights[a] * spec.weights[a] * spec.directions.col(a) *
                 spec.directions.col(a).transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    VectorXd lam = es.eigenvalues().reverse();
    MatrixXd u(d, d);
    for (int j = 0; j < d; ++j) u.col(j) = es.eigenvectors().col(d - 1 - j);
    return SpectrumModel::build(std::move(lam), std::move(u), grouping_tol);
}

/// Spiked factor samples X = sum_k weights_k F_k f_k + base^{1/2} Y with
/// independent unit-variance loadings (a martingale-difference special
/// case). Draws use the given coefficient family for both loadings.
inline Dataset sample_spiked_factor(const SpikedFactorSpec& spec, CoeffFamily family, double df,
                                    int n, std::uint64_t seed, std::uint64_t trial,
                                    double grouping_tol = 1e-8) {
    if (n < 1) throw ConfigError("sample count must be positive");
    detail::validate_family(family, df);
    const int d = static_cast<int>(spec.base.rows());
    const int k = static_cast<int>(spec.weights.size());
    if (spec.base.cols() != d) throw ModelError("base covariance must be square");
    if (spec.directions.rows() != d || spec.directions.cols() != k)
        throw ModelError("directions must be d x k");
    if (k > 0) {
        const MatrixXd gram = spec.directions.transpose() * spec.directions;
        if ((gram - MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > 1e-8)
            throw ModelError("spike directions must be orthonormal");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(spec.base);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw ModelError("base covariance must be positive definite");
    const MatrixXd root = es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
                          es.eigenvectors().transpose();

    RngStream factor(seed, trial, Role::Factor);
    RngStream noise(seed, trial, Role::Noise);
    const MatrixXd loadings = detail::draw_matrix(n, k, factor, family, df);
    const MatrixXd y = detail::draw_matrix(n, d, noise, family, df);

    Dataset ds;
    ds.samples = y * root;  // root symmetric
    for (int a = 0; a < k; ++a)
        ds.samples += spec.weights[a] * loadings.col(a) * spec.directions.col(a).transpose();
    ds.provenance.setting = Setting::SpikedFactor;
    ds.provenance.n = n;
    ds.provenance.model = spiked_population(spec, grouping_tol);
    ds.provenance.family = family;
    ds.provenance.student_df = df;
    ds.provenance.factor.spiked = spec;
    ds.provenance.seed = seed;
    ds.trial = trial;
    return ds;
}

/// Dispatch on the configured setting.
inline Dataset sample_dataset(const GeneratorConfig& cfg, std::uint64_t trial) {
    switch (cfg.setting) {
        case Setting::IID:
            return sample_iid(cfg, trial);
        case Setting::WeakDependence:
            return sample_weak_dependence(cfg, trial);
        case Setting::LongMemory:
            return sample_long_memory(cfg, trial);
        case Setting::OneFactor:
            return sample_one_factor(cfg.model, cfg.factor.spikes, cfg.n, cfg.seed, trial);
        case Setting::SpikedFactor: {
            Dataset ds = sample_spiked_factor(cfg.factor.spiked, cfg.family, cfg.student_df,
                                              cfg.n, cfg.seed, trial);
            return ds;
        }
    }
    throw ConfigError("unknown generator setting");
}

/// Surrogate moment order of a coefficient family, used when comparing
/// measured tail frequencies against moment-based rate shapes.
inline double surrogate_moment_order(CoeffFamily family, double df) {
    if (family == CoeffFamily::StudentT) return df - 1.0;
    return 8.0;
}

}  // namespace relperturb
