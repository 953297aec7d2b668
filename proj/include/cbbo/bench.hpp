#ifndef CBBO_BENCH_HPP
#define CBBO_BENCH_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/batch.hpp>
#include <cbbo/gp.hpp>
#include <cbbo/problems.hpp>

namespace cbbo {

inline const char* to_string(AcquisitionKind k) { return k == AcquisitionKind::alg1 ? "alg1" : "eic"; }

inline AcquisitionKind parse_acquisition(const std::string& s)
{
    if (s == "alg1")
        return AcquisitionKind::alg1;
    if (s == "eic")
        return AcquisitionKind::eic;
    throw Error(ErrorKind::invalid_argument, "unknown acquisition '" + s + "'");
}

/// Hyperparameter search settings used by the benchmark loop.
inline FitConfig default_bench_fit()
{
    FitConfig f;
    f.restarts = 3;
    f.optimizer.max_iterations = 60;
    return f;
}

struct RunConfig {
    ProblemId problem = ProblemId::p1;
    AcquisitionKind acquisition = AcquisitionKind::alg1;
    double pi = 0.6;
    double tau = 0.0;
    std::size_t max_iterations = 100;
    std::size_t init_count = 2;
    std::size_t repetitions = 100;
    /// Noisy mode: repetitions are laid out as initializations x realizations.
    std::size_t noise_realizations = 5;
    std::uint64_t seed = 2022;
    std::size_t grid_count = 20000;
    FitConfig fit = default_bench_fit();
    std::size_t threads = 0; ///< 0 = hardware concurrency

    bool noisy() const noexcept { return tau > 0; }

    void validate() const
    {
        if (repetitions < 1)
            throw Error(ErrorKind::invalid_argument, "repetitions must be at least 1");
        if (init_count < 1)
            throw Error(ErrorKind::invalid_argument, "init_count must be at least 1");
        if (!(pi >= 0 && pi <= 1))
            throw Error(ErrorKind::invalid_argument, "pi must lie in [0, 1]");
        if (!(tau >= 0))
            throw Error(ErrorKind::invalid_argument, "tau must be non-negative");
        if (noisy() && noise_realizations < 1)
            throw Error(ErrorKind::invalid_argument, "noise_realizations must be at least 1");
    }

    std::size_t initialization_index(std::size_t rep) const { return noisy() ? rep / noise_realizations : rep; }
};

/// Problem, its candidate grid and the grid optimum; shared by all repetitions.
struct BenchContext {
    BenchmarkProblem problem;
    CandidateSet grid;
    OptimizerOracle optimum;

    static BenchContext make(ProblemId id, std::size_t grid_count = 20000)
    {
        BenchContext c;
        c.problem = make_problem(id);
        c.grid = make_grid(c.problem, grid_count);
        c.optimum = find_grid_optimum(c.problem, c.grid);
        return c;
    }
};

enum class RunStop { optimum_found, max_iterations, model_failure };

inline const char* to_string(RunStop s)
{
    switch (s) {
    case RunStop::optimum_found: return "optimum-found";
    case RunStop::max_iterations: return "max-iterations";
    case RunStop::model_failure: return "model-failure";
    }
    return "?";
}

struct TraceEntry {
    std::size_t iteration = 0; ///< 0 for initialization samples
    bool initialization = false;
    std::size_t candidate = 0;
    Vector x;
    double objective = 0.0;
    std::vector<double> measured;
    bool feasible = false;       ///< measured values respect every constraint
    bool truly_feasible = false; ///< noise-free values respect every constraint
    Branch branch = Branch::no_feasible_fip;
    double improvement = 0.0;
    double fp = 0.0;
    double fip = 0.0;
    double alpha = 0.0;
};

struct RunTrace {
    std::size_t repetition = 0;
    AcquisitionKind acquisition = AcquisitionKind::alg1;
    std::vector<TraceEntry> entries;
    RunStop stop = RunStop::max_iterations;
    std::size_t required_iterations = 0;
    std::string error;
    /// Best measured-feasible objective after each iteration 0..max_iterations;
    /// absent until the first feasible sample.
    std::vector<std::optional<double>> best_feasible;

    std::size_t optimization_samples() const
    {
        return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const TraceEntry& e) { return !e.initialization; }));
    }
};

namespace detail {
    inline std::vector<std::size_t> draw_initialization(const RunConfig& config, std::size_t grid_size, std::size_t rep)
    {
        rng::SplitMix gen(rng::combine(config.seed, static_cast<std::uint64_t>(config.problem), 0x1417u, config.initialization_index(rep)));
        std::vector<std::size_t> picks;
        while (picks.size() < std::min(config.init_count, grid_size)) {
            const auto i = static_cast<std::size_t>(gen.below(grid_size));
            if (std::find(picks.begin(), picks.end(), i) == picks.end())
                picks.push_back(i);
        }
        return picks;
    }

    inline bool reached_optimum(const BenchContext& ctx, const RunConfig& config, std::size_t index, const Vector& x)
    {
        if (!config.noisy()) {
            // Cost ties on the grid: every truly feasible point at the optimal cost counts.
            const double tol = 1e-9 * std::max(1.0, std::abs(ctx.optimum.objective));
            return index == ctx.optimum.index || (ctx.grid.cost(index) <= ctx.optimum.objective + tol && truly_feasible(ctx.problem, x));
        }
        return (x - ctx.optimum.point).norm() <= ctx.optimum.tolerance_radius && truly_feasible(ctx.problem, x);
    }
} // namespace detail

/// One sequential optimization: shared random initialization, then one
/// acquisition-selected evaluation per iteration until the stopping rule.
inline RunTrace run_single(const BenchContext& ctx, const RunConfig& config, std::size_t rep)
{
    config.validate();
    RunTrace trace;
    trace.repetition = rep;
    trace.acquisition = config.acquisition;
    CandidateSet pool = ctx.grid;
    const auto& problem = ctx.problem;
    NoiseStream noise{{config.tau, config.seed}, static_cast<std::uint64_t>(problem.id), rep, 0};
    Dataset data(problem.dims(), problem.constraint_count());
    std::optional<double> best;
    bool done = false;

    auto record = [&](std::size_t index, std::size_t iteration, TraceEntry entry) {
        const Vector x = pool.point(index);
        pool.deactivate(index);
        const auto e = noisy_evaluate(problem, x, noise);
        entry.iteration = iteration;
        entry.candidate = index;
        entry.x = x;
        entry.objective = e.objective;
        entry.measured = e.constraints;
        entry.feasible = all_satisfied(problem.specs, e.constraints);
        entry.truly_feasible = truly_feasible(problem, x);
        data.add(x, e.constraints);
        if (entry.feasible && (!best || e.objective < *best))
            best = e.objective;
        if (detail::reached_optimum(ctx, config, index, x))
            done = true;
        trace.entries.push_back(std::move(entry));
    };

    for (std::size_t idx : detail::draw_initialization(config, pool.size(), rep)) {
        TraceEntry e;
        e.initialization = true;
        record(idx, 0, std::move(e));
    }
    trace.best_feasible.push_back(best);

    FitConfig fit_config = config.fit;
    fit_config.noise_mode = NoiseMode::fixed;
    fit_config.noise_variance = config.tau * config.tau;
    fit_config.input_bounds = std::make_pair(problem.lower, problem.upper);
    const double fallback = pool.max_cost() + 1.0;

    std::vector<GpModel> models;
    std::size_t iteration = 0;
    while (!done && iteration < config.max_iterations && !pool.empty()) {
        ++iteration;
        try {
            FitConfig fc = fit_config;
            fc.seed = rng::combine(config.seed, rep, iteration);
            models = fit_models(data, fc, models.empty() ? nullptr : &models);
        }
        catch (const Error& err) {
            trace.stop = RunStop::model_failure;
            trace.error = err.what();
            trace.required_iterations = config.max_iterations;
            break;
        }
        const auto incumbent = compute_incumbent(data, problem.specs, problem.objective, fallback);
        const auto subset = scoring_subset(pool, incumbent);
        const auto scores = score_candidates(models, problem.specs, pool, subset, incumbent, config.pi);
        const auto sel = select(scores, config.acquisition, incumbent.has_feasible(), config.pi);
        TraceEntry e;
        e.branch = sel.branch;
        e.improvement = scores.improvement[sel.position];
        e.fp = scores.fp[sel.position];
        e.fip = scores.fip[sel.position];
        e.alpha = sel.alpha;
        record(sel.candidate, iteration, std::move(e));
        trace.best_feasible.push_back(best);
    }
    if (trace.stop != RunStop::model_failure) {
        trace.stop = done ? RunStop::optimum_found : RunStop::max_iterations;
        trace.required_iterations = done ? iteration : config.max_iterations;
    }
    while (trace.best_feasible.size() < config.max_iterations + 1)
        trace.best_feasible.push_back(trace.best_feasible.back());
    return trace;
}

struct AggregateMetrics {
    std::size_t repetitions = 0;
    double mean_required_iterations = 0.0;
    /// Pooled over optimization-selected samples.
    double feasible_fraction = 0.0;
    /// Pooled over all samples including initialization.
    double feasible_fraction_with_init = 0.0;
    std::size_t feasible_samples = 0;
    std::size_t optimization_samples = 0;
    std::size_t optimum_found = 0;
    std::size_t model_failures = 0;
    std::vector<std::optional<double>> mean_best_feasible;
    std::vector<RunTrace> traces;
};

inline AggregateMetrics aggregate(std::vector<RunTrace> traces)
{
    AggregateMetrics m;
    m.repetitions = traces.size();
    std::size_t all_feasible = 0, all_samples = 0;
    double iters = 0;
    std::size_t horizon = 0;
    for (const auto& t : traces) {
        iters += static_cast<double>(t.required_iterations);
        for (const auto& e : t.entries) {
            ++all_samples;
            all_feasible += e.feasible ? 1 : 0;
            if (!e.initialization) {
                ++m.optimization_samples;
                m.feasible_samples += e.feasible ? 1 : 0;
            }
        }
        m.optimum_found += t.stop == RunStop::optimum_found ? 1 : 0;
        m.model_failures += t.stop == RunStop::model_failure ? 1 : 0;
        horizon = std::max(horizon, t.best_feasible.size());
    }
    if (!traces.empty())
        m.mean_required_iterations = iters / static_cast<double>(traces.size());
    m.feasible_fraction = m.optimization_samples ? static_cast<double>(m.feasible_samples) / static_cast<double>(m.optimization_samples) : 0.0;
    m.feasible_fraction_with_init = all_samples ? static_cast<double>(all_feasible) / static_cast<double>(all_samples) : 0.0;
    m.mean_best_feasible.resize(horizon);
    for (std::size_t i = 0; i < horizon; ++i) {
        double sum = 0;
        std::size_t n = 0;
        for (const auto& t : traces)
            if (i < t.best_feasible.size() && t.best_feasible[i]) {
                sum += *t.best_feasible[i];
                ++n;
            }
        if (n)
            m.mean_best_feasible[i] = sum / static_cast<double>(n);
    }
    m.traces = std::move(traces);
    return m;
}

/// Runs fn(i) for i in [0, count) on `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn)
{
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = next++; i < count; i = next++)
                    fn(i);
            }
            catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

inline AggregateMetrics run_monte_carlo(const BenchContext& ctx, const RunConfig& config)
{
    config.validate();
    std::vector<RunTrace> traces(config.repetitions);
    parallel_for(config.repetitions, config.threads, [&](std::size_t rep) { traces[rep] = run_single(ctx, config, rep); });
    return aggregate(std::move(traces));
}

inline AggregateMetrics run_monte_carlo(const RunConfig& config)
{
    const auto ctx = BenchContext::make(config.problem, config.grid_count);
    return run_monte_carlo(ctx, config);
}

struct SweepResult {
    std::vector<double> pis;
    std::vector<AggregateMetrics> alg1;
    AggregateMetrics eic;
};

inline std::vector<double> default_pi_grid()
{
    std::vector<double> pis;
    for (int i = 0; i <= 10; ++i)
        pis.push_back(i / 10.0);
    return pis;
}

/// Noiseless protocol per threshold, with initializations shared across
/// thresholds and with the constrained-improvement baseline.
inline SweepResult pi_sweep(const BenchContext& ctx, const std::vector<double>& pis, const RunConfig& base)
{
    SweepResult out;
    out.pis = pis;
    for (double pi : pis) {
        if (!(pi >= 0 && pi <= 1))
            throw Error(ErrorKind::invalid_argument, "pi values must lie in [0, 1]");
        RunConfig c = base;
        c.acquisition = AcquisitionKind::alg1;
        c.pi = pi;
        out.alg1.push_back(run_monte_carlo(ctx, c));
    }
    RunConfig c = base;
    c.acquisition = AcquisitionKind::eic;
    out.eic = run_monte_carlo(ctx, c);
    return out;
}

/// True when both traces evaluate the same candidates in the same order.
inline bool same_evaluations(const RunTrace& a, const RunTrace& b)
{
    if (a.entries.size() != b.entries.size())
        return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i)
        if (a.entries[i].candidate != b.entries[i].candidate || a.entries[i].measured != b.entries[i].measured)
            return false;
    return true;
}

struct TimingSample {
    std::size_t dataset_size = 0;
    std::size_t candidates = 0;
    double iteration_ms = 0.0; ///< condition + score all candidates + select, median
    double fit_ms = 0.0;       ///< hyperparameter search, median
};

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Wall-clock of one full iteration at several dataset sizes (median of `repeats`).
inline std::vector<TimingSample> timing_probe(ProblemId id, std::size_t grid_count, const std::vector<std::size_t>& sizes,
    std::size_t repeats = 5, std::uint64_t seed = 7)
{
    if (grid_count == 0)
        throw Error(ErrorKind::empty_candidates, "timing probe needs candidates");
    const auto problem = make_problem(id);
    const auto grid = make_grid(problem, grid_count);
    const auto big = make_grid(problem, std::max<std::size_t>(grid_count, 400));
    std::vector<TimingSample> out;
    using clock = std::chrono::steady_clock;
    for (std::size_t n : sizes) {
        rng::SplitMix gen(rng::combine(seed, n));
        Dataset data(problem.dims(), problem.constraint_count());
        while (data.size() < n) {
            const Vector x = big.point(static_cast<std::size_t>(gen.below(big.size())));
            if (!data.contains(x))
                data.add(x, problem.constraints(x));
        }
        FitConfig fc = default_bench_fit();
        fc.input_bounds = std::make_pair(problem.lower, problem.upper);
        std::vector<double> iter_ms, fit_ms;
        std::vector<GpModel> models;
        for (std::size_t r = 0; r < repeats; ++r) {
            const auto t0 = clock::now();
            models = fit_models(data, fc);
            const auto t1 = clock::now();
            std::vector<GpModel> conditioned;
            for (std::size_t k = 0; k < models.size(); ++k)
                conditioned.push_back(build_model(data, k, models[k].params(), fc));
            CandidateSet pool = grid;
            const auto incumbent = compute_incumbent(data, problem.specs, problem.objective, pool.max_cost() + 1.0);
            const auto subset = pool.active_indices();
            const auto scores = score_candidates(conditioned, problem.specs, pool, subset, incumbent, 0.6);
            const auto sel = select_candidate(scores, incumbent.has_feasible(), 0.6);
            (void)sel;
            const auto t2 = clock::now();
            fit_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
            iter_ms.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
        }
        out.push_back({n, grid_count, median(iter_ms), median(fit_ms)});
    }
    return out;
}

inline nlohmann::json to_json(const TraceEntry& e, AcquisitionKind acq)
{
    nlohmann::json j;
    j["acquisition"] = to_string(acq);
    j["iteration"] = e.iteration;
    j["initialization"] = e.initialization;
    j["candidate"] = e.candidate;
    j["x"] = to_json(e.x);
    j["objective"] = e.objective;
    j["measured"] = e.measured;
    j["feasible"] = e.feasible;
    j["truly_feasible"] = e.truly_feasible;
    if (!e.initialization) {
        j["branch"] = to_string(e.branch);
        j["I"] = e.improvement;
        j["FP"] = e.fp;
        j["alpha_fip"] = e.fip;
        j["alpha"] = e.alpha;
    }
    return j;
}

inline nlohmann::json summary_json(const AggregateMetrics& m)
{
    nlohmann::json j;
    j["repetitions"] = m.repetitions;
    j["mean_required_iterations"] = m.mean_required_iterations;
    j["feasible_fraction"] = m.feasible_fraction;
    j["feasible_fraction_with_init"] = m.feasible_fraction_with_init;
    j["feasible_samples"] = m.feasible_samples;
    j["optimization_samples"] = m.optimization_samples;
    j["optimum_found"] = m.optimum_found;
    j["model_failures"] = m.model_failures;
    nlohmann::json per_rep = nlohmann::json::array();
    for (const auto& t : m.traces)
        per_rep.push_back({{"repetition", t.repetition}, {"required_iterations", t.required_iterations}, {"stop", to_string(t.stop)}});
    j["per_repetition"] = per_rep;
    return j;
}

/// Writes metrics.json, table.csv, convergence.csv and traces/rep_####.jsonl.
inline void write_run_outputs(const std::filesystem::path& dir, const RunConfig& config,
    const std::vector<std::pair<AcquisitionKind, const AggregateMetrics*>>& results)
{
    namespace fs = std::filesystem;
    fs::create_directories(dir / "traces");
    nlohmann::json metrics;
    metrics["problem"] = make_problem(config.problem).name;
    metrics["pi"] = config.pi;
    metrics["tau"] = config.tau;
    metrics["seed"] = config.seed;
    metrics["max_iterations"] = config.max_iterations;
    metrics["init_count"] = config.init_count;
    metrics["grid_count"] = config.grid_count;
    if (config.noisy())
        metrics["layout"] = {{"initializations", (config.repetitions + config.noise_realizations - 1) / config.noise_realizations},
            {"noise_realizations", config.noise_realizations}};
    for (const auto& [acq, m] : results)
        metrics["results"][to_string(acq)] = summary_json(*m);
    std::ofstream(dir / "metrics.json") << metrics.dump(2) << '\n';

    std::ofstream table(dir / "table.csv");
    table << "metric";
    for (const auto& [acq, m] : results)
        table << ',' << to_string(acq);
    table << "\nrequired_iterations";
    for (const auto& [acq, m] : results)
        table << ',' << csv::format_double(m->mean_required_iterations);
    table << "\nfeasible_fraction";
    for (const auto& [acq, m] : results)
        table << ',' << csv::format_double(m->feasible_fraction);
    table << "\nfeasible_fraction_with_init";
    for (const auto& [acq, m] : results)
        table << ',' << csv::format_double(m->feasible_fraction_with_init);
    table << '\n';

    std::ofstream conv(dir / "convergence.csv");
    conv << "iteration";
    std::size_t horizon = 0;
    for (const auto& [acq, m] : results) {
        conv << ',' << to_string(acq) << "_mean";
        for (const auto& t : m->traces) {
            conv << ',' << to_string(acq) << "_rep_" << std::setw(4) << std::setfill('0') << t.repetition;
            horizon = std::max(horizon, t.best_feasible.size());
        }
    }
    conv << '\n';
    for (std::size_t i = 0; i < horizon; ++i) {
        conv << i;
        for (const auto& [acq, m] : results) {
            conv << ',';
            if (i < m->mean_best_feasible.size() && m->mean_best_feasible[i])
                conv << csv::format_double(*m->mean_best_feasible[i]);
            for (const auto& t : m->traces) {
                conv << ',';
                if (i < t.best_feasible.size() && t.best_feasible[i])
                    conv << csv::format_double(*t.best_feasible[i]);
            }
        }
        conv << '\n';
    }

    std::size_t reps = 0;
    for (const auto& [acq, m] : results)
        reps = std::max(reps, m->traces.size());
    for (std::size_t r = 0; r < reps; ++r) {
        std::ostringstream name;
        name << "rep_" << std::setw(4) << std::setfill('0') << r << ".jsonl";
        std::ofstream out(dir / "traces" / name.str());
        for (const auto& [acq, m] : results)
            if (r < m->traces.size())
                for (const auto& e : m->traces[r].entries)
                    out << to_json(e, acq).dump() << '\n';
    }
}

} // namespace cbbo

#endif
