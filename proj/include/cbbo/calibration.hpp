#ifndef CBBO_CALIBRATION_HPP
#define CBBO_CALIBRATION_HPP

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/dataset.hpp>
#include <cbbo/gp.hpp>

namespace cbbo {

/// GP from controllable inputs x_c to the status-dependent measurement V.
struct StatusModel {
    GpModel model;

    std::size_t dims() const noexcept { return model.dims(); }
    PosteriorPrediction predict(const Vector& xc) const { return model.predict(xc); }
};

/// delta = V^b - M_V(x_c^b) for the current session.
struct SessionOffset {
    Vector baseline_input;
    double baseline_measured = 0.0;
    double predicted = 0.0;
    double predicted_variance = 0.0;
    double delta = 0.0;
};

struct GridAxis {
    double lower = 0.0;
    double upper = 1.0;
    std::size_t count = 2;
};

struct GridSpec {
    std::vector<GridAxis> axes;
    std::size_t cap = 200000;

    std::size_t dims() const noexcept { return axes.size(); }

    std::size_t total() const
    {
        std::size_t t = 1;
        for (const auto& a : axes) {
            if (a.count != 0 && t > std::numeric_limits<std::size_t>::max() / a.count)
                return std::numeric_limits<std::size_t>::max();
            t *= a.count;
        }
        return t;
    }

    void validate() const
    {
        if (axes.empty())
            throw Error(ErrorKind::invalid_argument, "grid needs at least one axis");
        for (std::size_t j = 0; j < axes.size(); ++j) {
            const auto& a = axes[j];
            if (!std::isfinite(a.lower) || !std::isfinite(a.upper) || !(a.lower < a.upper))
                throw Error(ErrorKind::invalid_argument, "grid axis " + std::to_string(j) + " needs finite bounds with lower < upper");
            if (a.count < 2)
                throw Error(ErrorKind::invalid_argument, "grid axis " + std::to_string(j) + " needs at least 2 points");
        }
        if (total() > cap)
            throw Error(ErrorKind::invalid_argument,
                "grid has " + std::to_string(total()) + " points, above the cap of " + std::to_string(cap) + "; raise the cap to at least "
                    + std::to_string(total()));
    }

    double value(std::size_t axis, std::size_t i) const
    {
        const auto& a = axes[axis];
        if (i + 1 == a.count)
            return a.upper;
        return a.lower + (a.upper - a.lower) * static_cast<double>(i) / static_cast<double>(a.count - 1);
    }

    /// Cartesian product, first axis slowest; one column per point.
    Matrix points() const
    {
        validate();
        const std::size_t n = total();
        const std::size_t d = dims();
        Matrix out(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
        std::vector<std::size_t> idx(d, 0);
        for (std::size_t c = 0; c < n; ++c) {
            for (std::size_t j = 0; j < d; ++j)
                out(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = value(j, idx[j]);
            for (std::size_t j = d; j-- > 0;) {
                if (++idx[j] < axes[j].count)
                    break;
                idx[j] = 0;
            }
        }
        return out;
    }
};

/// Fits M_V on (x_c, V) pairs; `status` holds V for every row of `inputs`.
inline StatusModel fit_status_model(const std::vector<Vector>& inputs, std::span<const double> status, const FitConfig& config = {})
{
    if (inputs.size() != status.size())
        throw Error(ErrorKind::dimension_mismatch, "one status measurement per input required");
    if (inputs.empty())
        throw Error(ErrorKind::insufficient_data, "status model needs data");
    Dataset data(static_cast<std::size_t>(inputs.front().size()), 1);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (!std::isfinite(status[i]))
            throw Error(ErrorKind::invalid_argument, "non-finite status measurement");
        const double v = status[i];
        data.add(inputs[i], std::span<const double>(&v, 1));
    }
    return StatusModel{fit(data, 0, config)};
}

/// Status model from the first `status_column` of a dataset whose first
/// `controllable` inputs are x_c.
inline StatusModel fit_status_model(const Dataset& data, std::size_t controllable, std::size_t status_column, const FitConfig& config = {})
{
    if (controllable == 0 || controllable > data.dims())
        throw Error(ErrorKind::dimension_mismatch, "controllable dimension out of range");
    if (status_column >= data.dims())
        throw Error(ErrorKind::dimension_mismatch, "status column out of range");
    std::vector<Vector> xs;
    std::vector<double> vs;
    for (std::size_t i = 0; i < data.size(); ++i) {
        xs.push_back(data.input(i).head(static_cast<Eigen::Index>(controllable)));
        vs.push_back(data.input(i)(static_cast<Eigen::Index>(status_column)));
    }
    return fit_status_model(xs, vs, config);
}

inline SessionOffset compute_offset(const StatusModel& model, const Vector& baseline_input, double baseline_measured)
{
    if (static_cast<std::size_t>(baseline_input.size()) != model.dims())
        throw Error(ErrorKind::dimension_mismatch, "baseline input dimension differs from the status model");
    const auto p = model.predict(baseline_input);
    SessionOffset o;
    o.baseline_input = baseline_input;
    o.baseline_measured = baseline_measured;
    o.predicted = p.mean;
    o.predicted_variance = p.variance;
    o.delta = baseline_measured - p.mean;
    return o;
}

/// Full candidates (x_c, x_m) over the grid with x_m = M_V(x_c) + delta;
/// grid points whose x_c matches an entry of `exclude` are dropped.
inline CandidateSet generate_candidates(const GridSpec& grid, const StatusModel& model, const SessionOffset& offset,
    const CostFunction& cost, const std::vector<Vector>& exclude = {})
{
    if (grid.dims() != model.dims())
        throw Error(ErrorKind::dimension_mismatch, "grid and status model dimensions differ");
    const Matrix xc = grid.points();
    Vector mean, var;
    model.model.predict_columns(xc, mean, var);

    const auto d = static_cast<Eigen::Index>(grid.dims());
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(xc.cols()));
    for (Eigen::Index j = 0; j < xc.cols(); ++j) {
        bool seen = false;
        for (const auto& e : exclude)
            if (e.size() >= d && e.head(d) == xc.col(j)) {
                seen = true;
                break;
            }
        if (!seen)
            keep.push_back(j);
    }
    if (keep.empty())
        throw Error(ErrorKind::empty_candidates, "every grid point has already been evaluated");

    Matrix pts(d + 1, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        const auto col = static_cast<Eigen::Index>(c);
        pts.col(col).head(d) = xc.col(keep[c]);
        pts(d, col) = mean(keep[c]) + offset.delta;
    }
    return CandidateSet::from_function(std::move(pts), cost, "calibrated grid");
}

inline nlohmann::json to_json(const SessionOffset& o)
{
    nlohmann::json j;
    j["baseline_input"] = std::vector<double>(o.baseline_input.data(), o.baseline_input.data() + o.baseline_input.size());
    j["baseline_measured"] = o.baseline_measured;
    j["predicted"] = o.predicted;
    j["predicted_variance"] = o.predicted_variance;
    j["delta"] = o.delta;
    return j;
}

inline SessionOffset offset_from_json(const nlohmann::json& j)
{
    SessionOffset o;
    const auto v = j.at("baseline_input").get<std::vector<double>>();
    o.baseline_input = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
    o.baseline_measured = j.at("baseline_measured").get<double>();
    o.predicted = j.at("predicted").get<double>();
    o.predicted_variance = j.value("predicted_variance", 0.0);
    o.delta = j.at("delta").get<double>();
    return o;
}

inline nlohmann::json to_json(const GridSpec& g)
{
    nlohmann::json j;
    j["cap"] = g.cap;
    for (const auto& a : g.axes)
        j["axes"].push_back({{"lower", a.lower}, {"upper", a.upper}, {"count", a.count}});
    return j;
}

inline GridSpec grid_from_json(const nlohmann::json& j)
{
    GridSpec g;
    g.cap = j.value("cap", g.cap);
    for (const auto& a : j.at("axes"))
        g.axes.push_back({a.at("lower").get<double>(), a.at("upper").get<double>(), a.at("count").get<std::size_t>()});
    g.validate();
    return g;
}

} // namespace cbbo

#endif
