#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cbbo/bench.hpp>

namespace {

using namespace cbbo;

struct Common {
    std::string problem = "p1";
    std::size_t reps = 100;
    std::uint64_t seed = 2022;
    std::size_t max_iter = 100;
    std::size_t grid = 20000;
    std::size_t threads = 0;
    int restarts = default_bench_fit().restarts;
    std::string out = "bench_out";
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("--problem", c.problem, "p1, p2 or p3")->capture_default_str();
    cmd->add_option("--reps", c.reps, "repetitions")->capture_default_str();
    cmd->add_option("--seed", c.seed, "master seed")->capture_default_str();
    cmd->add_option("--max-iter", c.max_iter, "iteration cap per repetition")->capture_default_str();
    cmd->add_option("--grid", c.grid, "candidate grid size")->capture_default_str();
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)")->capture_default_str();
    cmd->add_option("--restarts", c.restarts, "hyperparameter search starts")->capture_default_str();
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

RunConfig make_config(const Common& c)
{
    RunConfig rc;
    rc.problem = parse_problem(c.problem);
    rc.repetitions = c.reps;
    rc.seed = c.seed;
    rc.max_iterations = c.max_iter;
    rc.grid_count = c.grid;
    rc.threads = c.threads;
    rc.fit.restarts = c.restarts;
    return rc;
}

void print_metrics(const char* label, const AggregateMetrics& m)
{
    std::cout << label << ": required_iterations=" << m.mean_required_iterations << " feasible_fraction=" << m.feasible_fraction
              << " (with init " << m.feasible_fraction_with_init << ") optimum_found=" << m.optimum_found << "/" << m.repetitions;
    if (m.model_failures)
        std::cout << " model_failures=" << m.model_failures;
    std::cout << '\n';
}

int cmd_run(const Common& c, const std::string& acq, double pi, double tau)
{
    RunConfig rc = make_config(c);
    rc.pi = pi;
    rc.tau = tau;
    rc.validate();
    const auto ctx = BenchContext::make(rc.problem, rc.grid_count);
    std::vector<AcquisitionKind> kinds;
    if (acq == "both")
        kinds = {AcquisitionKind::alg1, AcquisitionKind::eic};
    else
        kinds = {parse_acquisition(acq)};
    std::vector<AggregateMetrics> results;
    for (auto k : kinds) {
        RunConfig r = rc;
        r.acquisition = k;
        results.push_back(run_monte_carlo(ctx, r));
        print_metrics(to_string(k), results.back());
    }
    std::vector<std::pair<AcquisitionKind, const AggregateMetrics*>> view;
    for (std::size_t i = 0; i < kinds.size(); ++i)
        view.emplace_back(kinds[i], &results[i]);
    write_run_outputs(c.out, rc, view);
    std::cout << "wrote " << c.out << '\n';
    return 0;
}

int cmd_sweep(const Common& c, const std::string& pis_text)
{
    RunConfig rc = make_config(c);
    std::vector<double> pis;
    if (pis_text.empty())
        pis = default_pi_grid();
    else
        for (const auto& tok : csv::split(pis_text, ','))
            pis.push_back(csv::parse_double(tok));
    const auto ctx = BenchContext::make(rc.problem, rc.grid_count);
    const auto sweep = pi_sweep(ctx, pis, rc);

    namespace fs = std::filesystem;
    fs::create_directories(c.out);
    std::ofstream table(fs::path(c.out) / "sweep.csv");
    table << "acquisition,pi,required_iterations,feasible_fraction,feasible_fraction_with_init\n";
    nlohmann::json metrics;
    metrics["problem"] = ctx.problem.name;
    metrics["seed"] = rc.seed;
    metrics["repetitions"] = rc.repetitions;
    for (std::size_t i = 0; i < pis.size(); ++i) {
        const auto& m = sweep.alg1[i];
        table << "alg1," << csv::format_double(pis[i]) << ',' << csv::format_double(m.mean_required_iterations) << ','
              << csv::format_double(m.feasible_fraction) << ',' << csv::format_double(m.feasible_fraction_with_init) << '\n';
        auto s = summary_json(m);
        s["pi"] = pis[i];
        s["identical_to_eic"] = true;
        for (std::size_t r = 0; r < m.traces.size(); ++r)
            if (!same_evaluations(m.traces[r], sweep.eic.traces[r])) {
                s["identical_to_eic"] = false;
                break;
            }
        metrics["alg1"].push_back(s);
        std::cout << "pi=" << pis[i] << ' ';
        print_metrics("alg1", m);
    }
    table << "eic,," << csv::format_double(sweep.eic.mean_required_iterations) << ',' << csv::format_double(sweep.eic.feasible_fraction) << ','
          << csv::format_double(sweep.eic.feasible_fraction_with_init) << '\n';
    metrics["eic"] = summary_json(sweep.eic);
    print_metrics("eic", sweep.eic);
    std::ofstream(fs::path(c.out) / "metrics.json") << metrics.dump(2) << '\n';
    std::cout << "wrote " << c.out << '\n';
    return 0;
}

int cmd_timing(const std::string& problem, std::size_t grid, const std::vector<std::size_t>& sizes, std::size_t repeats)
{
    const auto samples = timing_probe(parse_problem(problem), grid, sizes, repeats);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : samples) {
        std::cout << "n=" << s.dataset_size << " candidates=" << s.candidates << " iteration_ms=" << s.iteration_ms << " fit_ms=" << s.fit_ms << '\n';
        out.push_back({{"dataset_size", s.dataset_size}, {"candidates", s.candidates}, {"iteration_ms", s.iteration_ms}, {"fit_ms", s.fit_ms}});
    }
    std::cout << out.dump() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Constrained Bayesian optimization benchmarks"};
    app.require_subcommand(1);

    Common run_opts;
    std::string acq = "both";
    double pi = 0.6, tau = 0.0;
    auto* run = app.add_subcommand("run", "Monte Carlo comparison on one problem");
    add_common(run, run_opts);
    run->add_option("--acq", acq, "alg1, eic or both")->capture_default_str();
    run->add_option("--pi", pi, "confidence threshold")->capture_default_str();
    run->add_option("--tau", tau, "constraint noise standard deviation")->capture_default_str();

    Common sweep_opts;
    sweep_opts.problem = "p3";
    std::string pis;
    auto* sweep = app.add_subcommand("sweep-pi", "Threshold sweep");
    add_common(sweep, sweep_opts);
    sweep->add_option("--pis", pis, "comma-separated thresholds (default 0,0.1,...,1)");

    std::string timing_problem = "p1";
    std::size_t timing_grid = 20000, repeats = 5;
    std::vector<std::size_t> sizes{10, 50, 100};
    auto* timing = app.add_subcommand("timing", "Per-iteration wall clock");
    timing->add_option("--problem", timing_problem)->capture_default_str();
    timing->add_option("--grid", timing_grid)->capture_default_str();
    timing->add_option("--sizes", sizes, "dataset sizes")->delimiter(',');
    timing->add_option("--repeats", repeats)->capture_default_str();

    std::string show_problem = "p1";
    auto* problem = app.add_subcommand("problem", "Print a benchmark problem as JSON");
    problem->add_option("--problem", show_problem)->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run)
            return cmd_run(run_opts, acq, pi, tau);
        if (*sweep)
            return cmd_sweep(sweep_opts, pis);
        if (*timing)
            return cmd_timing(timing_problem, timing_grid, sizes, repeats);
        if (*problem) {
            std::cout << to_json(make_problem(parse_problem(show_problem))).dump(2) << '\n';
            return 0;
        }
    }
    catch (const std::exception& e) {
        std::cerr << "bench: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
