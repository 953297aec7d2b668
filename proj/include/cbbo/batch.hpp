#ifndef CBBO_BATCH_HPP
#define CBBO_BATCH_HPP

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/dataset.hpp>
#include <cbbo/gp.hpp>

namespace cbbo {

struct BatchConfig {
    std::size_t batch_size = 1;
    double pi = 0.6;
    double epsilon = 0.05;
    AcquisitionKind acquisition = AcquisitionKind::alg1;
    std::size_t max_batches = 50;
    /// Re-optimize hyperparameters after every fantasy instead of re-conditioning.
    bool refit_in_fantasy_loop = false;

    void validate() const
    {
        if (batch_size < 1)
            throw Error(ErrorKind::invalid_argument, "batch size must be at least 1");
        if (!(pi >= 0 && pi <= 1))
            throw Error(ErrorKind::invalid_argument, "pi must lie in [0, 1]");
        if (!(epsilon >= 0 && epsilon <= 1))
            throw Error(ErrorKind::invalid_argument, "epsilon must lie in [0, 1]");
        if (max_batches < 1)
            throw Error(ErrorKind::invalid_argument, "max_batches must be at least 1");
    }
};

struct ProposedBatch {
    std::vector<std::size_t> candidates;
    std::vector<Vector> points;
    std::vector<double> costs;
    std::vector<double> improvements;
    std::vector<double> fps;
    std::vector<double> selection_fips;
    std::vector<double> alphas;
    std::vector<Branch> selection_branches;
    std::vector<std::vector<double>> fantasy_means;
    /// Set when the candidate pool ran out before the requested size.
    bool exhausted = false;

    std::size_t size() const noexcept { return candidates.size(); }
    bool empty() const noexcept { return candidates.empty(); }
};

/// Real data followed by fantasy observations at the posterior means.
class VirtualDataset {
public:
    explicit VirtualDataset(const Dataset& real) : data_(real) {}

    void add_fantasy(const Vector& x, std::span<const double> means)
    {
        data_.add(x, means);
        ++fantasy_count_;
    }

    const Dataset& data() const noexcept { return data_; }
    std::size_t fantasy_count() const noexcept { return fantasy_count_; }

    Dataset real() const
    {
        Dataset out = data_;
        out.truncate(fantasy_count_);
        return out;
    }

private:
    Dataset data_;
    std::size_t fantasy_count_ = 0;
};

/// One independently fitted model per constraint. `warm` supplies previous
/// hyperparameters as extra starting points.
inline std::vector<GpModel> fit_models(const Dataset& data, const FitConfig& config, const std::vector<GpModel>* warm = nullptr)
{
    std::vector<GpModel> models;
    models.reserve(data.constraint_count());
    for (std::size_t k = 0; k < data.constraint_count(); ++k) {
        FitConfig c = config;
        if (warm && k < warm->size())
            c.warm_start = (*warm)[k].params();
        models.push_back(fit(data, k, c));
    }
    return models;
}

inline std::vector<double> evaluated_costs(const Dataset& data, const CostFunction& cost)
{
    std::vector<double> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        out[i] = cost(data.input(i));
    return out;
}

/// Sequential fantasy batching: select, remove from the pool, append the
/// posterior means as a virtual observation, re-condition, repeat.
/// Improvement and the feasible set are taken from the real data once.
/// `fitted` reuses already trained models for the real data.
inline ProposedBatch propose_batch(const Dataset& data, CandidateSet& candidates, std::span<const ConstraintSpec> specs,
    const CostFunction& cost, const BatchConfig& config, const FitConfig& fit_config = {},
    const std::vector<GpModel>* fitted = nullptr)
{
    config.validate();
    if (specs.size() != data.constraint_count())
        throw Error(ErrorKind::dimension_mismatch, "one spec per constraint required");
    if (candidates.empty())
        throw Error(ErrorKind::empty_candidates, "candidate set is empty");
    if (candidates.dims() != data.dims())
        throw Error(ErrorKind::dimension_mismatch, "candidate and dataset dimensions differ");

    std::vector<GpModel> models = fitted ? *fitted : fit_models(data, fit_config);
    const auto costs = evaluated_costs(data, cost);
    const Incumbent incumbent = compute_incumbent(data, specs, cost, fallback_cost(candidates, costs));

    ProposedBatch batch;
    VirtualDataset virt(data);
    std::vector<double> means(specs.size());
    for (std::size_t i = 0; i < config.batch_size; ++i) {
        if (candidates.empty()) {
            batch.exhausted = true;
            break;
        }
        if (i > 0) {
            if (config.refit_in_fantasy_loop)
                models = fit_models(virt.data(), fit_config, &models);
            else
                for (std::size_t k = 0; k < models.size(); ++k)
                    models[k] = models[k].condition(virt.data(), k);
        }
        const auto subset = scoring_subset(candidates, incumbent);
        const auto scores = score_candidates(models, specs, candidates, subset, incumbent, config.pi);
        const auto sel = select(scores, config.acquisition, incumbent.has_feasible(), config.pi);

        const Vector x = candidates.point(sel.candidate);
        candidates.deactivate(sel.candidate);
        for (std::size_t k = 0; k < models.size(); ++k)
            means[k] = models[k].predict(x).mean;

        batch.candidates.push_back(sel.candidate);
        batch.points.push_back(x);
        batch.costs.push_back(scores.cost[sel.position]);
        batch.improvements.push_back(scores.improvement[sel.position]);
        batch.fps.push_back(scores.fp[sel.position]);
        batch.selection_fips.push_back(scores.fip[sel.position]);
        batch.alphas.push_back(sel.alpha);
        batch.selection_branches.push_back(sel.branch);
        batch.fantasy_means.push_back(means);
        if (i + 1 < config.batch_size)
            virt.add_fantasy(x, means);
    }
    return batch;
}

/// True when at least half (rounded up) of the batch has FIP below epsilon.
inline bool check_termination(const ProposedBatch& batch, double epsilon)
{
    if (batch.empty())
        throw Error(ErrorKind::invalid_argument, "termination check on an empty batch");
    std::size_t below = 0;
    for (double f : batch.selection_fips)
        if (f < epsilon)
            ++below;
    return below >= (batch.size() + 1) / 2;
}

/// Real dataset extended with the measured batch; fantasies never enter.
inline Dataset incorporate_results(const Dataset& data, const ProposedBatch& batch, const std::vector<std::vector<double>>& measurements)
{
    if (measurements.size() != batch.size())
        throw Error(ErrorKind::dimension_mismatch,
            "expected " + std::to_string(batch.size()) + " measurement vectors, got " + std::to_string(measurements.size()));
    Dataset out = data;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (double v : measurements[i])
            if (!std::isfinite(v))
                throw Error(ErrorKind::invalid_argument, "non-finite measurement");
        out.add(batch.points[i], measurements[i]);
    }
    return out;
}

using ConstraintOracle = std::function<std::vector<double>(const Vector&)>;

enum class StopReason { terminated, batch_cap, candidates_exhausted };

inline const char* to_string(StopReason r)
{
    switch (r) {
    case StopReason::terminated: return "terminated";
    case StopReason::batch_cap: return "batch_cap";
    case StopReason::candidates_exhausted: return "candidates_exhausted";
    }
    return "?";
}

struct BatchRecord {
    ProposedBatch batch;
    bool evaluated = false;
    std::vector<std::vector<double>> measurements;
    /// Incumbent cost after this batch (fallback cost while nothing is feasible).
    double incumbent_cost = 0.0;
    bool has_feasible = false;
};

struct WorkflowResult {
    Dataset dataset;
    std::vector<BatchRecord> batches;
    StopReason stop_reason = StopReason::batch_cap;
    std::optional<Vector> minimizer;
    double minimizer_cost = std::numeric_limits<double>::infinity();

    bool has_feasible_minimizer() const noexcept { return minimizer.has_value(); }
    std::string status() const { return minimizer ? std::string("ok") : std::string("no feasible minimizer"); }
};

/// Propose, evaluate, incorporate until the termination test fires on a
/// freshly proposed batch (that batch is not evaluated) or the cap is hit.
inline WorkflowResult run_to_termination(const Dataset& initial, CandidateSet& candidates, std::span<const ConstraintSpec> specs,
    const CostFunction& cost, const BatchConfig& config, const ConstraintOracle& oracle, const FitConfig& fit_config = {})
{
    config.validate();
    WorkflowResult result;
    result.dataset = initial;
    std::vector<GpModel> models;
    for (std::size_t b = 0; b < config.max_batches; ++b) {
        if (candidates.empty()) {
            result.stop_reason = StopReason::candidates_exhausted;
            break;
        }
        FitConfig fc = fit_config;
        fc.seed = rng::combine(fit_config.seed, b);
        models = fit_models(result.dataset, fc, models.empty() ? nullptr : &models);
        BatchRecord rec;
        rec.batch = propose_batch(result.dataset, candidates, specs, cost, config, fc, &models);
        if (rec.batch.empty()) {
            result.stop_reason = StopReason::candidates_exhausted;
            break;
        }
        const bool stop = check_termination(rec.batch, config.epsilon);
        if (!stop) {
            for (const auto& x : rec.batch.points)
                rec.measurements.push_back(oracle(x));
            result.dataset = incorporate_results(result.dataset, rec.batch, rec.measurements);
            rec.evaluated = true;
        }
        const auto inc = compute_incumbent(result.dataset, specs, cost, fallback_cost(candidates, evaluated_costs(result.dataset, cost)));
        rec.incumbent_cost = inc.best_feasible_cost;
        rec.has_feasible = inc.has_feasible();
        result.batches.push_back(std::move(rec));
        if (stop) {
            result.stop_reason = StopReason::terminated;
            break;
        }
        if (b + 1 == config.max_batches)
            result.stop_reason = StopReason::batch_cap;
    }
    const auto inc = compute_incumbent(result.dataset, specs, cost, 0.0);
    if (inc.has_feasible()) {
        result.minimizer = inc.best_feasible_input;
        result.minimizer_cost = inc.best_feasible_cost;
    }
    return result;
}

inline nlohmann::json to_json(const Vector& v)
{
    nlohmann::json j = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        j.push_back(v(i));
    return j;
}

inline Vector vector_from_json(const nlohmann::json& j)
{
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    return v;
}

/// One JSON record per selected candidate of `batch`.
inline std::vector<nlohmann::json> trace_records(std::size_t batch_index, const ProposedBatch& batch,
    const std::vector<std::vector<double>>* measurements = nullptr)
{
    std::vector<nlohmann::json> out;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        nlohmann::json r;
        r["batch_index"] = batch_index;
        r["inner_index"] = i;
        r["candidate"] = batch.candidates[i];
        r["x"] = to_json(batch.points[i]);
        r["S"] = batch.costs[i];
        r["I"] = batch.improvements[i];
        r["FP"] = batch.fps[i];
        r["alpha_fip"] = batch.selection_fips[i];
        r["alpha"] = batch.alphas[i];
        r["branch"] = to_string(batch.selection_branches[i]);
        r["fantasy_means"] = batch.fantasy_means[i];
        if (measurements && i < measurements->size())
            r["measured_values"] = (*measurements)[i];
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_trace_jsonl(std::ostream& out, const WorkflowResult& result)
{
    for (std::size_t b = 0; b < result.batches.size(); ++b) {
        const auto& rec = result.batches[b];
        for (const auto& r : trace_records(b, rec.batch, rec.evaluated ? &rec.measurements : nullptr))
            out << r.dump() << '\n';
    }
}

} // namespace cbbo

#endif
