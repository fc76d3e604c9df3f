#pragma once

#include <cstdint>
#include <random>

#include "relperturb/errors.hpp"

namespace relperturb {

/// splitmix64 finalizer; used to derive independent stream keys.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream roles keep draws for different purposes statistically and
/// reproducibly disjoint, so e.g. turning volatility on or off never
/// shifts the coefficient draws of the same trial.
enum class Role : std::uint64_t {
    Coefficients = 1,
    Innovations = 2,
    Volatility = 3,
    Factor = 4,
    Noise = 5,
    Goe = 6,
    Direction = 7,
    Model = 8,
};

/// Counter-based random stream keyed by (seed, trial, role).
///
/// Distinct trials get disjoint streams, so trials can run on any thread
/// in any order and still produce bit-identical results.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t trial, Role role)
        : engine_(mix64(mix64(mix64(seed) ^ trial) ^ static_cast<std::uint64_t>(role))) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return uniform_(engine_); }

    /// Standard normal.
    double gaussian() { return normal_(engine_); }

    /// Student-t with df degrees of freedom, scaled to unit variance.
    /// Requires df > 4 so that fourth moments exist with room to spare.
    double student_t_unit(double df) {
        if (!(df > 4.0)) throw MomentError("student_t_unit: df must exceed 4");
        std::student_t_distribution<double> t(df);
        return t(engine_) * std::sqrt((df - 2.0) / df);
    }

    /// Rademacher sign, already unit variance.
    double rademacher() { return (engine_() & 1u) ? 1.0 : -1.0; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace relperturb
