#ifndef CBBO_CAMPAIGN_CONFIG_HPP
#define CBBO_CAMPAIGN_CONFIG_HPP

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/batch.hpp>
#include <cbbo/calibration.hpp>
#include <cbbo/dataset.hpp>

namespace cbbo::campaign {

using cbbo::to_json;

/// Closed-form cost over controllable inputs: constant + sum coef * x_i^power.
struct Objective {
    std::string label;
    double constant = 0.0;
    struct Term {
        std::size_t input = 0;
        double power = 1.0;
        double coef = 1.0;
    };
    std::vector<Term> terms;

    double operator()(const Vector& x) const
    {
        double s = constant;
        for (const auto& t : terms)
            s += t.coef * (t.power == 1.0 ? x(static_cast<Eigen::Index>(t.input)) : std::pow(x(static_cast<Eigen::Index>(t.input)), t.power));
        return s;
    }

    std::string formula() const
    {
        std::ostringstream out;
        out << csv::format_double(constant);
        for (const auto& t : terms) {
            out << " + " << csv::format_double(t.coef) << "*x" << (t.input + 1);
            if (t.power != 1.0)
                out << "^" << csv::format_double(t.power);
        }
        return out.str();
    }
};

/// One initialization experiment: controllable inputs, optional status
/// measurement and constraint values.
struct InitRow {
    Vector x;
    std::optional<double> status;
    std::vector<double> constraints;
};

struct CampaignConfig {
    std::string name = "campaign";
    std::string note;
    std::vector<std::string> input_names;
    GridSpec grid;

    bool status_enabled = false;
    std::string status_name = "V";
    /// Add the calibration experiment to the dataset when its constraint
    /// values are supplied.
    bool append_baseline = true;

    std::vector<std::string> constraint_names;
    std::vector<ConstraintSpec> specs;
    Objective objective;
    BatchConfig batch;

    int restarts = 4;
    std::uint64_t seed = 0;
    std::vector<InitRow> init;

    std::size_t controllable() const noexcept { return grid.dims(); }
    std::size_t input_dims() const noexcept { return controllable() + (status_enabled ? 1 : 0); }

    double cost(const Vector& x) const { return objective(x); }

    Vector full_input(const InitRow& r) const
    {
        if (!status_enabled)
            return r.x;
        Vector v(static_cast<Eigen::Index>(input_dims()));
        v.head(r.x.size()) = r.x;
        v(v.size() - 1) = *r.status;
        return v;
    }

    void validate() const
    {
        grid.validate();
        if (input_names.size() != controllable())
            throw Error(ErrorKind::invalid_argument, "one name per controllable input required");
        if (specs.empty())
            throw Error(ErrorKind::invalid_argument, "at least one constraint required");
        if (constraint_names.size() != specs.size())
            throw Error(ErrorKind::invalid_argument, "one name per constraint required");
        batch.validate();
        if (restarts < 1)
            throw Error(ErrorKind::invalid_argument, "fit restarts must be at least 1");
        for (const auto& t : objective.terms)
            if (t.input >= controllable())
                throw Error(ErrorKind::invalid_argument, "objective term refers to input " + std::to_string(t.input + 1) + " which does not exist");
        for (std::size_t j = 0; j < controllable(); ++j)
            for (std::size_t i = 0; i < grid.axes[j].count; ++i) {
                Vector x = Vector::Constant(static_cast<Eigen::Index>(controllable()), 0.0);
                for (std::size_t m = 0; m < controllable(); ++m)
                    x(static_cast<Eigen::Index>(m)) = grid.axes[m].lower;
                x(static_cast<Eigen::Index>(j)) = grid.value(j, i);
                if (!std::isfinite(objective(x)))
                    throw Error(ErrorKind::invalid_argument, "objective is not finite over the grid (input " + std::to_string(j + 1) + ")");
            }
        for (std::size_t r = 0; r < init.size(); ++r) {
            const auto& row = init[r];
            const std::string where = "init row " + std::to_string(r + 1);
            if (static_cast<std::size_t>(row.x.size()) != controllable())
                throw Error(ErrorKind::dimension_mismatch, where + ": expected " + std::to_string(controllable()) + " inputs");
            if (row.constraints.size() != specs.size())
                throw Error(ErrorKind::dimension_mismatch, where + ": expected " + std::to_string(specs.size()) + " constraint values");
            if (status_enabled && !row.status)
                throw Error(ErrorKind::invalid_argument, where + ": missing " + status_name);
            for (double v : row.constraints)
                if (!std::isfinite(v))
                    throw Error(ErrorKind::invalid_argument, where + ": non-finite constraint value");
        }
    }
};

inline nlohmann::json to_json(const ConstraintSpec& s, const std::string& name)
{
    nlohmann::json j{{"name", name}, {"upper", s.upper}};
    if (s.kind == ConstraintKind::interval)
        j["lower"] = s.lower;
    return j;
}

inline nlohmann::json to_json(const CampaignConfig& c)
{
    nlohmann::json j;
    j["name"] = c.name;
    if (!c.note.empty())
        j["note"] = c.note;
    for (std::size_t i = 0; i < c.controllable(); ++i) {
        const auto& a = c.grid.axes[i];
        j["inputs"].push_back({{"name", c.input_names[i]}, {"lower", a.lower}, {"upper", a.upper}, {"count", a.count}});
    }
    j["grid_cap"] = c.grid.cap;
    if (c.status_enabled)
        j["status"] = {{"name", c.status_name}, {"append_baseline", c.append_baseline}};
    for (std::size_t k = 0; k < c.specs.size(); ++k)
        j["constraints"].push_back(to_json(c.specs[k], c.constraint_names[k]));
    nlohmann::json obj{{"kind", "separable"}, {"label", c.objective.label}, {"constant", c.objective.constant}};
    obj["terms"] = nlohmann::json::array();
    for (const auto& t : c.objective.terms)
        obj["terms"].push_back({{"input", t.input + 1}, {"power", t.power}, {"coef", t.coef}});
    j["objective"] = obj;
    j["batch"] = {{"n", c.batch.batch_size}, {"pi", c.batch.pi}, {"epsilon", c.batch.epsilon}};
    j["fit"] = {{"restarts", c.restarts}, {"seed", c.seed}};
    j["init"] = nlohmann::json::array();
    for (const auto& r : c.init) {
        nlohmann::json row{{"x", to_json(r.x)}, {"c", r.constraints}};
        if (r.status)
            row[c.status_name] = *r.status;
        j["init"].push_back(row);
    }
    return j;
}

inline CampaignConfig config_from_json(const nlohmann::json& j)
{
    try {
        CampaignConfig c;
        c.name = j.value("name", c.name);
        c.note = j.value("note", std::string());
        for (const auto& in : j.at("inputs")) {
            c.input_names.push_back(in.value("name", "x" + std::to_string(c.input_names.size() + 1)));
            c.grid.axes.push_back({in.at("lower").get<double>(), in.at("upper").get<double>(), in.at("count").get<std::size_t>()});
        }
        c.grid.cap = j.value("grid_cap", c.grid.cap);
        if (j.contains("status") && !j["status"].is_null()) {
            c.status_enabled = true;
            c.status_name = j["status"].value("name", c.status_name);
            c.append_baseline = j["status"].value("append_baseline", c.append_baseline);
        }
        for (const auto& s : j.at("constraints")) {
            c.constraint_names.push_back(s.value("name", "c" + std::to_string(c.constraint_names.size() + 1)));
            if (s.contains("lower"))
                c.specs.push_back(ConstraintSpec::between(s.at("lower").get<double>(), s.at("upper").get<double>()));
            else
                c.specs.push_back(ConstraintSpec::at_most(s.at("upper").get<double>()));
        }
        const auto& obj = j.at("objective");
        if (obj.value("kind", std::string("separable")) != "separable")
            throw Error(ErrorKind::invalid_argument, "unsupported objective kind '" + obj.value("kind", std::string()) + "'");
        c.objective.label = obj.value("label", std::string("cost"));
        c.objective.constant = obj.value("constant", 0.0);
        for (const auto& t : obj.value("terms", nlohmann::json::array())) {
            const auto input = t.at("input").get<std::size_t>();
            if (input < 1)
                throw Error(ErrorKind::invalid_argument, "objective inputs are numbered from 1");
            c.objective.terms.push_back({input - 1, t.value("power", 1.0), t.value("coef", 1.0)});
        }
        if (j.contains("batch")) {
            const auto& b = j["batch"];
            c.batch.batch_size = b.value("n", c.batch.batch_size);
            c.batch.pi = b.value("pi", c.batch.pi);
            c.batch.epsilon = b.value("epsilon", c.batch.epsilon);
        }
        if (j.contains("fit")) {
            c.restarts = j["fit"].value("restarts", c.restarts);
            c.seed = j["fit"].value("seed", c.seed);
        }
        for (const auto& r : j.value("init", nlohmann::json::array())) {
            InitRow row;
            row.x = vector_from_json(r.at("x"));
            row.constraints = r.at("c").get<std::vector<double>>();
            if (c.status_enabled && r.contains(c.status_name))
                row.status = r.at(c.status_name).get<double>();
            c.init.push_back(std::move(row));
        }
        c.validate();
        return c;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::invalid_argument, std::string("malformed campaign config: ") + e.what());
    }
}

/// Initialization rows from a dataset CSV (x1..xn[,status],c1..cK).
inline std::vector<InitRow> init_rows_from_dataset(const CampaignConfig& c, const Dataset& data)
{
    if (data.dims() != c.input_dims() || data.constraint_count() != c.specs.size())
        throw Error(ErrorKind::dimension_mismatch,
            "initialization data needs " + std::to_string(c.input_dims()) + " input and " + std::to_string(c.specs.size()) + " constraint columns");
    std::vector<InitRow> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        InitRow r;
        r.x = data.input(i).head(static_cast<Eigen::Index>(c.controllable()));
        if (c.status_enabled)
            r.status = data.input(i)(static_cast<Eigen::Index>(c.controllable()));
        r.constraints = data.measurements(i);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace cbbo::campaign

#endif
