#ifndef CBBO_COMMON_HPP
#define CBBO_COMMON_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace cbbo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class ErrorKind {
    invalid_argument,
    insufficient_data,
    ill_conditioned,
    dimension_mismatch,
    empty_candidates,
    no_feasible_point,
    io,
    session_state,
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::insufficient_data: return "insufficient data";
    case ErrorKind::ill_conditioned: return "ill-conditioned kernel";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::empty_candidates: return "empty candidate set";
    case ErrorKind::no_feasible_point: return "no feasible grid point";
    case ErrorKind::io: return "i/o error";
    case ErrorKind::session_state: return "session state error";
    }
    return "error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// log of the standard normal CDF, finite far into the lower tail.
inline double log_normal_cdf(double z)
{
    if (z > -30.0)
        return std::log(normal_cdf(z));
    // Asymptotic expansion: phi(z)/|z| * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8)
    const double z2 = z * z;
    const double series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
    return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * M_PI) + std::log(series);
}

/// log(exp(a) - exp(b)) for a > b.
inline double log_diff_exp(double a, double b)
{
    if (!(a > b))
        return -std::numeric_limits<double>::infinity();
    return a + std::log1p(-std::exp(b - a));
}

namespace rng {

    /// SplitMix64 finalizer; used as a stateless hash for counter-based streams.
    constexpr std::uint64_t mix(std::uint64_t z) noexcept
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t combine(std::uint64_t h) noexcept { return h; }

    template <typename... Rest>
    constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t next, Rest... rest) noexcept
    {
        return combine(mix(h ^ mix(next)), static_cast<std::uint64_t>(rest)...);
    }

    /// Uniform in the open interval (0, 1) from 64 random bits.
    constexpr double to_unit(std::uint64_t bits) noexcept
    {
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal draw addressed by a key (Box-Muller on two hashed uniforms).
    inline double normal_at(std::uint64_t key) noexcept
    {
        const double u1 = to_unit(mix(key ^ 0x5851f42d4c957f2dULL));
        const double u2 = to_unit(mix(key ^ 0x14057b7ef767814fULL));
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Small sequential generator with platform-independent output.
    class SplitMix {
    public:
        explicit SplitMix(std::uint64_t seed) : state_(seed) {}

        std::uint64_t next() noexcept
        {
            state_ += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = state_;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            return z ^ (z >> 31);
        }

        double uniform() noexcept { return to_unit(next()); }
        double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

        /// Uniform integer in [0, n) by rejection, free of modulo bias.
        std::uint64_t below(std::uint64_t n)
        {
            if (n == 0)
                throw Error(ErrorKind::invalid_argument, "SplitMix::below(0)");
            const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
            std::uint64_t r;
            do {
                r = next();
            } while (r >= limit);
            return r % n;
        }

    private:
        std::uint64_t state_;
    };

} // namespace rng

} // namespace cbbo

#endif
