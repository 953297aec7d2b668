#ifndef CBBO_PROBLEMS_HPP
#define CBBO_PROBLEMS_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/common.hpp>

namespace cbbo {

enum class ProblemId { p1 = 1, p2 = 2, p3 = 3 };

struct BenchmarkProblem {
    ProblemId id = ProblemId::p1;
    std::string name;
    Vector lower;
    Vector upper;
    std::string objective_formula;
    std::vector<std::string> constraint_formulas;
    std::vector<ConstraintSpec> specs;
    /// Input-space radius for the noisy-mode stopping rule.
    double tolerance_radius = 0.0;
    std::function<double(const Vector&)> objective;
    std::function<std::vector<double>(const Vector&)> constraints;

    std::size_t dims() const noexcept { return static_cast<std::size_t>(lower.size()); }
    std::size_t constraint_count() const noexcept { return specs.size(); }

    bool in_domain(const Vector& x) const
    {
        return x.size() == lower.size() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
    }
};

inline BenchmarkProblem make_problem(ProblemId id)
{
    BenchmarkProblem p;
    p.id = id;
    switch (id) {
    case ProblemId::p1:
        p.name = "p1";
        p.lower = Vector::Zero(2);
        p.upper = Vector::Constant(2, 6.0);
        p.objective_formula = "cos(2*x1)*cos(x2) + sin(x1)";
        p.constraint_formulas = {"cos(x1)*cos(x2) - sin(x1)*sin(x2)"};
        p.specs = {ConstraintSpec::at_most(-0.5)};
        p.tolerance_radius = 0.15;
        p.objective = [](const Vector& x) { return std::cos(2 * x(0)) * std::cos(x(1)) + std::sin(x(0)); };
        p.constraints = [](const Vector& x) {
            return std::vector<double>{std::cos(x(0)) * std::cos(x(1)) - std::sin(x(0)) * std::sin(x(1))};
        };
        break;
    case ProblemId::p2:
        p.name = "p2";
        p.lower = Vector::Zero(2);
        p.upper = Vector::Constant(2, 6.0);
        p.objective_formula = "sin(x1) + x2";
        p.constraint_formulas = {"sin(x1)*sin(x2)"};
        p.specs = {ConstraintSpec::at_most(-0.95)};
        p.tolerance_radius = 0.15;
        p.objective = [](const Vector& x) { return std::sin(x(0)) + x(1); };
        p.constraints = [](const Vector& x) { return std::vector<double>{std::sin(x(0)) * std::sin(x(1))}; };
        break;
    case ProblemId::p3:
        p.name = "p3";
        p.lower = Vector::Zero(2);
        p.upper = Vector::Ones(2);
        p.objective_formula = "x1 + x2";
        p.constraint_formulas = {"1.5 - x1 - 2*x2 - 0.5*sin(2*pi*(x1^2 - 2*x2))", "x1^2 + x2^2 - 1.5"};
        p.specs = {ConstraintSpec::at_most(0.0), ConstraintSpec::at_most(0.0)};
        p.tolerance_radius = 0.0125;
        p.objective = [](const Vector& x) { return x(0) + x(1); };
        p.constraints = [](const Vector& x) {
            const double a = x(0), b = x(1);
            return std::vector<double>{1.5 - a - 2 * b - 0.5 * std::sin(2 * M_PI * (a * a - 2 * b)), a * a + b * b - 1.5};
        };
        break;
    }
    return p;
}

inline ProblemId parse_problem(const std::string& name)
{
    if (name == "p1" || name == "P1")
        return ProblemId::p1;
    if (name == "p2" || name == "P2")
        return ProblemId::p2;
    if (name == "p3" || name == "P3")
        return ProblemId::p3;
    throw Error(ErrorKind::invalid_argument, "unknown problem '" + name + "'");
}

struct Evaluation {
    double objective = 0.0;
    std::vector<double> constraints;
};

inline Evaluation evaluate(const BenchmarkProblem& problem, const Vector& x)
{
    if (!problem.in_domain(x))
        throw Error(ErrorKind::invalid_argument, "point outside the domain of " + problem.name);
    return {problem.objective(x), problem.constraints(x)};
}

inline bool truly_feasible(const BenchmarkProblem& problem, const Vector& x)
{
    const auto c = problem.constraints(x);
    return all_satisfied(problem.specs, c);
}

/// Grid layout: k points per dimension with k the smallest integer such that
/// k^d >= count; row-major (first coordinate slowest), truncated to `count`.
struct GridLayout {
    std::size_t per_dim = 0;
    std::size_t count = 0;
};

inline GridLayout grid_layout(std::size_t dims, std::size_t count)
{
    std::size_t k = 2;
    auto total = [&](std::size_t kk) {
        std::size_t t = 1;
        for (std::size_t d = 0; d < dims; ++d)
            t *= kk;
        return t;
    };
    while (total(k) < count)
        ++k;
    return {k, count};
}

inline Matrix grid_points(const Vector& lower, const Vector& upper, std::size_t count)
{
    if (count < 4)
        throw Error(ErrorKind::invalid_argument, "grid needs at least 4 points");
    const auto d = static_cast<std::size_t>(lower.size());
    const auto layout = grid_layout(d, count);
    Matrix pts(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(count));
    std::vector<std::size_t> idx(d, 0);
    const double steps = static_cast<double>(layout.per_dim - 1);
    for (std::size_t c = 0; c < count; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            const auto e = static_cast<Eigen::Index>(j);
            pts(e, static_cast<Eigen::Index>(c)) = idx[j] + 1 == layout.per_dim
                ? upper(e)
                : lower(e) + (upper(e) - lower(e)) * static_cast<double>(idx[j]) / steps;
        }
        for (std::size_t j = d; j-- > 0;) {
            if (++idx[j] < layout.per_dim)
                break;
            idx[j] = 0;
        }
    }
    return pts;
}

inline CandidateSet make_grid(const BenchmarkProblem& problem, std::size_t count = 20000)
{
    return CandidateSet::from_function(grid_points(problem.lower, problem.upper, count), problem.objective, problem.name + ": " + problem.objective_formula);
}

/// Counter-addressed Gaussian noise: the draw for a given
/// (seed, problem, repetition, evaluation, constraint) never changes.
struct NoiseConfig {
    double tau = 0.0;
    std::uint64_t seed = 0;
};

struct NoiseStream {
    NoiseConfig config;
    std::uint64_t problem = 0;
    std::uint64_t repetition = 0;
    std::uint64_t counter = 0;

    double draw(std::uint64_t evaluation, std::uint64_t constraint) const
    {
        return config.tau * rng::normal_at(rng::combine(config.seed, problem, repetition, evaluation, constraint));
    }
};

/// Objective exact, each constraint perturbed by an independent N(0, tau^2)
/// draw; advances the stream counter by one evaluation.
inline Evaluation noisy_evaluate(const BenchmarkProblem& problem, const Vector& x, NoiseStream& stream)
{
    if (!(stream.config.tau >= 0))
        throw Error(ErrorKind::invalid_argument, "tau must be non-negative");
    Evaluation e = evaluate(problem, x);
    if (stream.config.tau > 0)
        for (std::size_t k = 0; k < e.constraints.size(); ++k)
            e.constraints[k] += stream.draw(stream.counter, k);
    ++stream.counter;
    return e;
}

struct OptimizerOracle {
    std::size_t index = 0;
    Vector point;
    double objective = 0.0;
    double tolerance_radius = 0.0;
};

/// Brute-force scan for the truly feasible grid point of lowest objective.
inline OptimizerOracle find_grid_optimum(const BenchmarkProblem& problem, const CandidateSet& grid)
{
    if (grid.size() == 0)
        throw Error(ErrorKind::empty_candidates, "empty grid");
    bool found = false;
    OptimizerOracle best;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Vector x = grid.point(i);
        if (!truly_feasible(problem, x))
            continue;
        const double f = grid.cost(i);
        if (!found || f < best.objective) {
            found = true;
            best.index = i;
            best.point = x;
            best.objective = f;
        }
    }
    if (!found)
        throw Error(ErrorKind::no_feasible_point, "no feasible point on the " + std::to_string(grid.size()) + "-point grid of " + problem.name);
    best.tolerance_radius = problem.tolerance_radius;
    return best;
}

inline nlohmann::json to_json(const BenchmarkProblem& p)
{
    nlohmann::json j;
    j["name"] = p.name;
    j["lower"] = std::vector<double>(p.lower.data(), p.lower.data() + p.lower.size());
    j["upper"] = std::vector<double>(p.upper.data(), p.upper.data() + p.upper.size());
    j["objective"] = p.objective_formula;
    j["tolerance_radius"] = p.tolerance_radius;
    for (std::size_t k = 0; k < p.specs.size(); ++k) {
        nlohmann::json c;
        c["formula"] = p.constraint_formulas[k];
        c["kind"] = p.specs[k].kind == ConstraintKind::upper ? "upper" : "interval";
        c["lambda"] = p.specs[k].upper;
        if (p.specs[k].kind == ConstraintKind::interval)
            c["lambda_lower"] = p.specs[k].lower;
        j["constraints"].push_back(c);
    }
    return j;
}

} // namespace cbbo

#endif
