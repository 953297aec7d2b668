#ifndef CBBO_CAMPAIGN_SYNTHETIC_HPP
#define CBBO_CAMPAIGN_SYNTHETIC_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <cbbo/common.hpp>

namespace cbbo::campaign {

/// bias + linear . x + status_gain * (V - status_ref) + sum of Gaussian bumps.
struct Response {
    double bias = 0.0;
    Vector linear;
    double status_gain = 0.0;
    double status_ref = 0.0;
    struct Bump {
        Vector center;
        double width = 0.3;
        double weight = 0.0;
    };
    std::vector<Bump> bumps;

    double operator()(const Vector& x, double status = 0.0) const
    {
        double v = bias + status_gain * (status - status_ref);
        if (linear.size() == x.size())
            v += linear.dot(x);
        for (const auto& b : bumps)
            v += b.weight * std::exp(-(x - b.center).squaredNorm() / (2 * b.width * b.width));
        return v;
    }
};

struct Measurement {
    std::vector<double> constraints;
    double status = 0.0;
};

/// Stand-in process: controllable inputs -> constraint outputs plus one
/// status measurement carrying an additive per-session drift. Noise is
/// addressed by (seed, session, evaluation, output), so a measurement never
/// depends on call order.
struct SyntheticProcessOracle {
    std::string name;
    std::size_t dims = 0;
    std::vector<std::string> output_names;
    std::vector<Response> outputs;
    std::vector<double> output_noise;
    bool has_status = false;
    Response status;
    double status_noise = 0.0;
    std::uint64_t seed = 0;

    double true_status(const Vector& x, double drift) const { return status(x) + drift; }

    std::vector<double> true_outputs(const Vector& x, double drift) const
    {
        const double v = has_status ? true_status(x, drift) : 0.0;
        std::vector<double> out;
        for (const auto& r : outputs)
            out.push_back(r(x, v));
        return out;
    }

    Measurement measure(const Vector& x, double drift, std::uint64_t session, std::uint64_t evaluation) const
    {
        if (static_cast<std::size_t>(x.size()) != dims)
            throw Error(ErrorKind::dimension_mismatch, name + " expects " + std::to_string(dims) + " inputs");
        Measurement m;
        m.constraints = true_outputs(x, drift);
        for (std::size_t k = 0; k < m.constraints.size(); ++k)
            if (k < output_noise.size() && output_noise[k] > 0)
                m.constraints[k] += output_noise[k] * rng::normal_at(rng::combine(seed, session, evaluation, k));
        if (has_status) {
            m.status = true_status(x, drift);
            if (status_noise > 0)
                m.status += status_noise * rng::normal_at(rng::combine(seed, session, evaluation, 0x5717u));
        }
        return m;
    }
};

/// Six-input coating-like process: a hardness-like output with window
/// [635, 675], a porosity-like output with window [6, 8.2] and a gun
/// voltage-like status output around 60.
inline SyntheticProcessOracle aps_like_oracle(std::uint64_t seed = 7)
{
    SyntheticProcessOracle o;
    o.name = "synthetic-aps";
    o.dims = 6;
    o.seed = seed;
    o.output_names = {"hardness", "porosity"};

    o.has_status = true;
    o.status.bias = 55.0;
    o.status.linear = (Vector(6) << 8.0, 4.0, -3.0, 0.0, 0.0, 0.0).finished();
    o.status.bumps = {{(Vector(6) << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5).finished(), 0.4, 2.0}};
    o.status_noise = 0.05;

    Response hardness;
    hardness.bias = 570.0;
    hardness.linear = (Vector(6) << 110.0, 30.0, -20.0, -45.0, 35.0, 0.0).finished();
    hardness.status_gain = 2.5;
    hardness.status_ref = 60.0;
    hardness.bumps = {{(Vector(6) << 0.7, 0.3, 0.6, 0.4, 0.8, 0.5).finished(), 0.35, 35.0}};

    Response porosity;
    porosity.bias = 11.0;
    porosity.linear = (Vector(6) << -4.0, -1.5, 2.0, 0.0, -2.5, 1.5).finished();
    porosity.status_gain = -0.05;
    porosity.status_ref = 60.0;
    porosity.bumps = {{(Vector(6) << 0.6, 0.5, 0.3, 0.5, 0.7, 0.4).finished(), 0.3, -1.5}};

    o.outputs = {hardness, porosity};
    o.output_noise = {1.5, 0.08};
    return o;
}

/// Two-input printing-like process (layer height, print speed, both scaled
/// to [0, 1]); surface roughness grows with both.
inline SyntheticProcessOracle fdm_like_oracle(std::uint64_t seed = 11)
{
    SyntheticProcessOracle o;
    o.name = "synthetic-fdm";
    o.dims = 2;
    o.seed = seed;
    o.output_names = {"roughness"};
    Response roughness;
    roughness.bias = 4.0;
    roughness.linear = (Vector(2) << 6.0, 5.0).finished();
    roughness.bumps = {{(Vector(2) << 0.8, 0.8).finished(), 0.25, 4.0}, {(Vector(2) << 0.3, 0.7).finished(), 0.15, -2.5}};
    o.outputs = {roughness};
    o.output_noise = {0.3};
    return o;
}

} // namespace cbbo::campaign

#endif
