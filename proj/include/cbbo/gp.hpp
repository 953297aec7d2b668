#ifndef CBBO_GP_HPP
#define CBBO_GP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cbbo/bfgs.hpp>
#include <cbbo/common.hpp>
#include <cbbo/dataset.hpp>

namespace cbbo {

/// Squared-exponential ARD hyperparameters. All values live in the model's
/// normalized space: inputs mapped to the unit cube, outputs standardized.
struct KernelParams {
    Vector lengthscales;
    double signal_variance = 1.0;
    double noise_variance = 0.0;

    static KernelParams defaults(std::size_t dims)
    {
        return {Vector::Ones(static_cast<Eigen::Index>(dims)), 1.0, 0.0};
    }

    void validate() const
    {
        if (lengthscales.size() == 0 || (lengthscales.array() <= 0).any() || !lengthscales.allFinite())
            throw Error(ErrorKind::invalid_argument, "lengthscales must be positive");
        if (!(signal_variance > 0) || !std::isfinite(signal_variance))
            throw Error(ErrorKind::invalid_argument, "signal variance must be positive");
        if (!(noise_variance >= 0) || !std::isfinite(noise_variance))
            throw Error(ErrorKind::invalid_argument, "noise variance must be non-negative");
    }
};

struct PosteriorPrediction {
    double mean = 0.0;
    double variance = 0.0;

    double stddev() const { return std::sqrt(variance); }
};

/// Affine maps between original units and the model's working space.
struct Normalization {
    Vector lower;
    Vector width;
    double y_mean = 0.0;
    double y_scale = 1.0;

    template <typename Derived>
    Vector to_unit(const Eigen::MatrixBase<Derived>& x) const
    {
        return ((x - lower).array() / width.array()).matrix();
    }
};

enum class NoiseMode { fixed, learned };

struct FitConfig {
    // Bounds in normalized space.
    double lengthscale_min = 0.02;
    double lengthscale_max = 5.0;
    double signal_variance_min = 0.05;
    double signal_variance_max = 20.0;

    NoiseMode noise_mode = NoiseMode::fixed;
    /// Fixed noise variance in original output units (tau^2).
    double noise_variance = 0.0;
    /// Learned-noise bounds, standardized units.
    double noise_variance_min = 1e-6;
    double noise_variance_max = 1.0;

    int restarts = 8;
    std::uint64_t seed = 0;
    std::optional<KernelParams> warm_start;

    double jitter = 1e-8;
    double max_jitter = 1e-2;
    double variance_floor = 1e-12;

    /// Domain bounds used to scale inputs; the training-data range when absent.
    std::optional<std::pair<Vector, Vector>> input_bounds;
    bool standardize_outputs = true;

    BfgsOptions optimizer;
};

namespace detail {

    /// Cholesky of K + (noise + jitter) I with x10 jitter escalation.
    /// Returns false when even `max_jitter` fails.
    inline bool factorize(Matrix& kernel, double noise, double jitter, double max_jitter, Eigen::LLT<Matrix>& llt, double& used_jitter)
    {
        const Eigen::Index n = kernel.rows();
        for (double j = jitter; j <= max_jitter * (1 + 1e-9); j *= 10.0) {
            Matrix k = kernel;
            k.diagonal().array() += noise + j;
            llt.compute(k);
            if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0).all()) {
                used_jitter = j;
                return true;
            }
            if (j == 0)
                break;
        }
        (void)n;
        return false;
    }

    /// Noise-free SE-ARD Gram matrix of the rows of `x` (already in unit space).
    inline Matrix gram(const Matrix& x, const Vector& lengthscales, double signal_variance)
    {
        const Eigen::Index n = x.rows();
        const Matrix z = x.array().rowwise() / lengthscales.transpose().array();
        Matrix k(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            k(i, i) = signal_variance;
            for (Eigen::Index j = 0; j < i; ++j) {
                const double r2 = (z.row(i) - z.row(j)).squaredNorm();
                k(i, j) = k(j, i) = signal_variance * std::exp(-0.5 * r2);
            }
        }
        return k;
    }

    inline Normalization make_normalization(const Dataset& data, std::size_t constraint, const FitConfig& config)
    {
        const auto d = static_cast<Eigen::Index>(data.dims());
        Normalization norm;
        if (config.input_bounds) {
            norm.lower = config.input_bounds->first;
            norm.width = config.input_bounds->second - config.input_bounds->first;
            if (norm.lower.size() != d || norm.width.size() != d)
                throw Error(ErrorKind::dimension_mismatch, "input bounds do not match dataset dimension");
        }
        else {
            norm.lower = Vector::Constant(d, std::numeric_limits<double>::infinity());
            Vector upper = Vector::Constant(d, -std::numeric_limits<double>::infinity());
            for (const auto& x : data.inputs()) {
                norm.lower = norm.lower.cwiseMin(x);
                upper = upper.cwiseMax(x);
            }
            norm.width = upper - norm.lower;
        }
        for (Eigen::Index j = 0; j < d; ++j)
            if (!(norm.width(j) > 0))
                norm.width(j) = 1.0;

        const auto& y = data.observations(constraint);
        double mean = 0;
        for (double v : y)
            mean += v;
        mean /= static_cast<double>(y.size());
        double var = 0;
        for (double v : y)
            var += (v - mean) * (v - mean);
        var /= static_cast<double>(y.size());
        norm.y_mean = mean;
        norm.y_scale = 1.0;
        if (config.standardize_outputs && var > 1e-24 * std::max(1.0, mean * mean))
            norm.y_scale = std::sqrt(var);
        return norm;
    }

    struct Prepared {
        Normalization norm;
        Matrix x_unit;
        Vector y_std;
    };

    inline Prepared prepare(const Dataset& data, std::size_t constraint, const FitConfig& config)
    {
        if (constraint >= data.constraint_count())
            throw Error(ErrorKind::invalid_argument, "constraint index out of range");
        if (data.size() < 2)
            throw Error(ErrorKind::insufficient_data, "need at least 2 points, have " + std::to_string(data.size()));
        Prepared p;
        p.norm = make_normalization(data, constraint, config);
        const auto n = static_cast<Eigen::Index>(data.size());
        p.x_unit.resize(n, static_cast<Eigen::Index>(data.dims()));
        p.y_std.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p.x_unit.row(i) = p.norm.to_unit(data.input(static_cast<std::size_t>(i))).transpose();
            p.y_std(i) = (data.observation(constraint, static_cast<std::size_t>(i)) - p.norm.y_mean) / p.norm.y_scale;
        }
        return p;
    }

} // namespace detail

/// Gaussian log marginal likelihood of `y` (already centered) given inputs
/// `x` (rows, unit space) and hyperparameters. If `gradient` is non-null it
/// receives d/d[log lengthscales..., log signal variance, log noise variance].
/// Returns -inf when the kernel cannot be factorized.
inline double log_marginal_likelihood(const Matrix& x, const Vector& y, const KernelParams& params, double jitter = 1e-8,
    double max_jitter = 1e-2, Vector* gradient = nullptr)
{
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    Matrix kf = detail::gram(x, params.lengthscales, params.signal_variance);
    Eigen::LLT<Matrix> llt;
    double used = 0;
    if (!detail::factorize(kf, params.noise_variance, jitter, max_jitter, llt, used))
        return -std::numeric_limits<double>::infinity();
    const Vector alpha = llt.solve(y);
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const double value = -0.5 * y.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

    if (gradient) {
        gradient->resize(d + 2);
        Matrix w = llt.solve(Matrix::Identity(n, n));
        w = alpha * alpha.transpose() - w;
        const Matrix wk = w.cwiseProduct(kf);
        for (Eigen::Index j = 0; j < d; ++j) {
            const double inv = 1.0 / params.lengthscales(j);
            double g = 0;
            for (Eigen::Index a = 0; a < n; ++a)
                for (Eigen::Index b = 0; b < a; ++b) {
                    const double diff = (x(a, j) - x(b, j)) * inv;
                    g += wk(a, b) * diff * diff;
                }
            (*gradient)(j) = g; // symmetric: 2 * 0.5 * sum over a > b
        }
        (*gradient)(d) = 0.5 * wk.sum();
        (*gradient)(d + 1) = 0.5 * params.noise_variance * w.trace();
    }
    return value;
}

/// Exact GP posterior for one constraint. Immutable once built.
class GpModel {
public:
    GpModel() = default;

    /// Factorizes the kernel for `x_unit`/`y_std` (normalized space).
    static GpModel build(Matrix x_unit, Vector y_std, KernelParams params, Normalization norm, double jitter = 1e-8,
        double max_jitter = 1e-2, double variance_floor = 1e-12)
    {
        params.validate();
        GpModel m;
        m.params_ = std::move(params);
        m.norm_ = std::move(norm);
        m.variance_floor_ = variance_floor;
        m.base_jitter_ = jitter;
        m.max_jitter_ = max_jitter;
        m.x_unit_ = std::move(x_unit);
        m.y_std_ = std::move(y_std);
        m.refactorize();
        return m;
    }

    std::size_t dims() const noexcept { return static_cast<std::size_t>(x_unit_.cols()); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(x_unit_.rows()); }
    const KernelParams& params() const noexcept { return params_; }
    const Normalization& normalization() const noexcept { return norm_; }
    double prior_mean() const noexcept { return norm_.y_mean; }
    double jitter() const noexcept { return jitter_; }
    double variance_floor() const noexcept { return variance_floor_; }
    const Vector& alpha() const noexcept { return alpha_; }
    const Matrix& training_inputs_unit() const noexcept { return x_unit_; }
    const Vector& training_targets_standardized() const noexcept { return y_std_; }

    /// Lower-triangular factor of (K + (noise + jitter) I), normalized space.
    Matrix factor() const { return llt_.matrixL(); }

    /// Observation noise variance in original output units.
    double noise_variance() const noexcept { return params_.noise_variance * norm_.y_scale * norm_.y_scale; }

    /// Signal variance in original output units (the prior variance far from data).
    double signal_variance() const noexcept { return params_.signal_variance * norm_.y_scale * norm_.y_scale; }

    /// Log marginal likelihood of the training data in normalized space.
    double log_marginal_likelihood() const
    {
        return -0.5 * y_std_.dot(alpha_) - llt_.matrixLLT().diagonal().array().log().sum()
            - 0.5 * static_cast<double>(size()) * std::log(2.0 * M_PI);
    }

    PosteriorPrediction predict(const Vector& query) const
    {
        if (static_cast<std::size_t>(query.size()) != dims())
            throw Error(ErrorKind::dimension_mismatch, "query has " + std::to_string(query.size()) + " entries, model expects " + std::to_string(dims()));
        Vector mean(1), var(1);
        Matrix q = query;
        predict_columns(q, mean, var);
        return {mean(0), var(0)};
    }

    /// Predicts at every column of `queries` (d x m, original units).
    void predict_columns(const Matrix& queries, Vector& mean, Vector& variance) const
    {
        const Eigen::Index m = queries.cols();
        mean.resize(m);
        variance.resize(m);
        std::vector<Eigen::Index> all(static_cast<std::size_t>(m));
        for (Eigen::Index j = 0; j < m; ++j)
            all[static_cast<std::size_t>(j)] = j;
        predict_subset(queries, all, mean, variance);
    }

    /// Predicts at the selected columns of `queries`; outputs are aligned with `columns`.
    void predict_subset(const Matrix& queries, std::span<const Eigen::Index> columns, Vector& mean, Vector& variance) const
    {
        if (static_cast<std::size_t>(queries.rows()) != dims())
            throw Error(ErrorKind::dimension_mismatch, "query dimension does not match model");
        const Eigen::Index n = x_unit_.rows();
        const auto m = static_cast<Eigen::Index>(columns.size());
        mean.resize(m);
        variance.resize(m);
        const Eigen::Index d = x_unit_.cols();
        const Vector scale = (norm_.width.array() * params_.lengthscales.array()).inverse();
        const Vector offset = norm_.lower.cwiseProduct(scale);
        constexpr Eigen::Index block = 512;
        Matrix ks(n, block);
        Vector q(d);
        for (Eigen::Index start = 0; start < m; start += block) {
            const Eigen::Index len = std::min(block, m - start);
            for (Eigen::Index c = 0; c < len; ++c) {
                q = queries.col(columns[static_cast<std::size_t>(start + c)]).cwiseProduct(scale) - offset;
                for (Eigen::Index i = 0; i < n; ++i) {
                    double r2 = 0;
                    for (Eigen::Index k = 0; k < d; ++k) {
                        const double diff = z_(k, i) - q(k);
                        r2 += diff * diff;
                    }
                    ks(i, c) = params_.signal_variance * std::exp(-0.5 * r2);
                }
            }
            auto kb = ks.leftCols(len);
            mean.segment(start, len) = (kb.transpose() * alpha_).array() * norm_.y_scale + norm_.y_mean;
            llt_.matrixL().solveInPlace(kb);
            const double s2 = norm_.y_scale * norm_.y_scale;
            for (Eigen::Index c = 0; c < len; ++c) {
                const double v = (params_.signal_variance - kb.col(c).squaredNorm()) * s2;
                variance(start + c) = std::max(v, variance_floor_);
            }
        }
    }

    /// Unclamped latent variance (original units); for invariant checks.
    double raw_variance(const Vector& query) const
    {
        const Vector q = norm_.to_unit(query);
        Vector k(x_unit_.rows());
        for (Eigen::Index i = 0; i < x_unit_.rows(); ++i)
            k(i) = params_.signal_variance * std::exp(-0.5 * ((x_unit_.row(i).transpose() - q).array() / params_.lengthscales.array()).square().sum());
        llt_.matrixL().solveInPlace(k);
        return (params_.signal_variance - k.squaredNorm()) * norm_.y_scale * norm_.y_scale;
    }

    /// Same hyperparameters and normalization, new training data (original units).
    GpModel condition(const std::vector<Vector>& inputs, const std::vector<double>& outputs) const
    {
        if (inputs.size() != outputs.size() || inputs.empty())
            throw Error(ErrorKind::invalid_argument, "condition needs matching, nonempty inputs and outputs");
        const auto n = static_cast<Eigen::Index>(inputs.size());
        Matrix xu(n, x_unit_.cols());
        Vector ys(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& x = inputs[static_cast<std::size_t>(i)];
            if (x.size() != x_unit_.cols())
                throw Error(ErrorKind::dimension_mismatch, "conditioning input has wrong dimension");
            xu.row(i) = norm_.to_unit(x).transpose();
            ys(i) = (outputs[static_cast<std::size_t>(i)] - norm_.y_mean) / norm_.y_scale;
        }
        return build(std::move(xu), std::move(ys), params_, norm_, base_jitter_, max_jitter_, variance_floor_);
    }

    GpModel condition(const Dataset& data, std::size_t constraint) const
    {
        return condition(data.inputs(), data.observations(constraint));
    }

private:
    void refactorize()
    {
        Matrix k = detail::gram(x_unit_, params_.lengthscales, params_.signal_variance);
        if (!detail::factorize(k, params_.noise_variance, base_jitter_, max_jitter_, llt_, jitter_))
            throw Error(ErrorKind::ill_conditioned, "Cholesky failed with jitter up to " + std::to_string(max_jitter_));
        alpha_ = llt_.solve(y_std_);
        z_ = (x_unit_.array().rowwise() / params_.lengthscales.transpose().array()).matrix().transpose();
    }

    KernelParams params_;
    Normalization norm_;
    Matrix x_unit_;
    Matrix z_; // d x n, unit inputs divided by lengthscales
    Vector y_std_;
    Vector alpha_;
    Eigen::LLT<Matrix> llt_;
    double jitter_ = 0.0;
    double base_jitter_ = 1e-8;
    double max_jitter_ = 1e-2;
    double variance_floor_ = 1e-12;
};

/// Log marginal likelihood of one constraint of `data` under `params`, using
/// the same normalization that `fit` applies.
inline double log_marginal_likelihood(const Dataset& data, std::size_t constraint, const KernelParams& params, const FitConfig& config = {})
{
    params.validate();
    const auto prep = detail::prepare(data, constraint, config);
    const double value = log_marginal_likelihood(prep.x_unit, prep.y_std, params, config.jitter, config.max_jitter);
    if (!std::isfinite(value))
        throw Error(ErrorKind::ill_conditioned, "kernel not positive definite after jitter escalation");
    return value;
}

/// Maximizes the log marginal likelihood by multi-start BFGS over
/// log-parameters squashed into the configured box, then factorizes.
inline GpModel fit(const Dataset& data, std::size_t constraint, const FitConfig& config = {})
{
    auto prep = detail::prepare(data, constraint, config);
    const auto d = static_cast<Eigen::Index>(data.dims());
    const bool learn_noise = config.noise_mode == NoiseMode::learned;
    const double fixed_noise = config.noise_variance / (prep.norm.y_scale * prep.norm.y_scale);
    const Eigen::Index p = d + 1 + (learn_noise ? 1 : 0);

    Vector lo(p), hi(p);
    lo.head(d).setConstant(std::log(config.lengthscale_min));
    hi.head(d).setConstant(std::log(config.lengthscale_max));
    lo(d) = std::log(config.signal_variance_min);
    hi(d) = std::log(config.signal_variance_max);
    if (learn_noise) {
        lo(d + 1) = std::log(config.noise_variance_min);
        hi(d + 1) = std::log(config.noise_variance_max);
    }

    auto to_params = [&](const Vector& log_theta) {
        KernelParams kp;
        kp.lengthscales = log_theta.head(d).array().exp();
        kp.signal_variance = std::exp(log_theta(d));
        kp.noise_variance = learn_noise ? std::exp(log_theta(d + 1)) : fixed_noise;
        return kp;
    };
    auto squash = [&](const Vector& u) {
        Vector s = (1.0 + (-u).array().exp()).inverse();
        return Vector(lo.array() + (hi - lo).array() * s.array());
    };
    auto unsquash = [&](Vector log_theta) {
        Vector u(p);
        for (Eigen::Index i = 0; i < p; ++i) {
            double t = (log_theta(i) - lo(i)) / (hi(i) - lo(i));
            t = std::clamp(t, 1e-6, 1.0 - 1e-6);
            u(i) = std::log(t / (1.0 - t));
        }
        return u;
    };

    auto objective = [&](const Vector& u, Vector& grad) {
        const Vector theta = squash(u);
        Vector g;
        const double value = log_marginal_likelihood(prep.x_unit, prep.y_std, to_params(theta), config.jitter, config.max_jitter, &g);
        if (!std::isfinite(value))
            return std::numeric_limits<double>::infinity();
        grad.resize(p);
        for (Eigen::Index i = 0; i < p; ++i) {
            const double s = (theta(i) - lo(i)) / (hi(i) - lo(i));
            grad(i) = -g(i) * (hi(i) - lo(i)) * s * (1.0 - s);
        }
        return -value;
    };

    std::vector<Vector> starts;
    auto log_of = [&](const KernelParams& kp) {
        Vector t(p);
        t.head(d) = kp.lengthscales.array().log();
        t(d) = std::log(kp.signal_variance);
        if (learn_noise)
            t(d + 1) = std::log(std::max(kp.noise_variance, config.noise_variance_min));
        return t;
    };
    if (config.warm_start && config.warm_start->lengthscales.size() == d)
        starts.push_back(log_of(*config.warm_start));
    {
        KernelParams def = KernelParams::defaults(data.dims());
        def.noise_variance = learn_noise ? 1e-2 : fixed_noise;
        starts.push_back(log_of(def));
    }
    rng::SplitMix gen(rng::combine(config.seed, 0x6770u, static_cast<std::uint64_t>(constraint)));
    while (static_cast<int>(starts.size()) < std::max(1, config.restarts)) {
        Vector t(p);
        for (Eigen::Index i = 0; i < p; ++i)
            t(i) = gen.uniform(lo(i), hi(i));
        starts.push_back(t);
    }

    Vector best_theta;
    double best_value = std::numeric_limits<double>::infinity();
    for (const auto& start : starts) {
        auto res = minimize_bfgs(objective, unsquash(start), config.optimizer);
        if (res.value < best_value) {
            best_value = res.value;
            best_theta = squash(res.x);
        }
    }
    if (!std::isfinite(best_value))
        throw Error(ErrorKind::ill_conditioned, "no hyperparameter setting admits a Cholesky factorization");

    return GpModel::build(std::move(prep.x_unit), std::move(prep.y_std), to_params(best_theta), std::move(prep.norm),
        config.jitter, config.max_jitter, config.variance_floor);
}

/// Builds a model with given hyperparameters (no search).
inline GpModel build_model(const Dataset& data, std::size_t constraint, const KernelParams& params, const FitConfig& config = {})
{
    auto prep = detail::prepare(data, constraint, config);
    return GpModel::build(std::move(prep.x_unit), std::move(prep.y_std), params, std::move(prep.norm), config.jitter,
        config.max_jitter, config.variance_floor);
}

} // namespace cbbo

#endif
