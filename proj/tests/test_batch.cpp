#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include <cbbo/batch.hpp>
#include <cbbo/problems.hpp>

#include "oracles.hpp"

using namespace cbbo;

namespace {

FitConfig small_fit(const BenchmarkProblem& p)
{
    FitConfig f;
    f.restarts = 2;
    f.optimizer.max_iterations = 40;
    f.input_bounds = std::make_pair(p.lower, p.upper);
    return f;
}

Dataset initial_data(const BenchmarkProblem& p, const CandidateSet& grid, std::vector<std::size_t> idx)
{
    Dataset d(p.dims(), p.constraint_count());
    for (auto i : idx)
        d.add(grid.point(i), evaluate(p, grid.point(i)).constraints);
    return d;
}

ConstraintOracle truth(const BenchmarkProblem& p)
{
    return [p](const Vector& x) { return evaluate(p, x).constraints; };
}

} // namespace

TEST(CheckTermination, Cases)
{
    ProposedBatch b;
    b.candidates = {0, 1, 2, 3, 4};
    b.selection_fips = {0.01, 0.02, 0.04, 0.9, 0.9};
    EXPECT_TRUE(check_termination(b, 0.05));
    b.selection_fips = {0.9, 0.9, 0.9, 0.9, 0.01};
    EXPECT_FALSE(check_termination(b, 0.05));
    b.selection_fips = {0.0, 0.0, 0.0, 0.0, 0.0};
    EXPECT_FALSE(check_termination(b, 0.0));
    b.candidates = {0, 1, 2, 3};
    b.selection_fips = {0.01, 0.01, 0.9, 0.9};
    EXPECT_TRUE(check_termination(b, 0.05));
    b.selection_fips = {0.01, 0.9, 0.9, 0.9};
    EXPECT_FALSE(check_termination(b, 0.05));
    EXPECT_THROW(check_termination(ProposedBatch{}, 0.05), Error);
}

TEST(IncorporateResults, ExtendsRealDataOnly)
{
    const auto p = make_problem(ProblemId::p1);
    auto grid = make_grid(p, 400);
    const Dataset d = initial_data(p, grid, {3, 150, 333});
    EXPECT_TRUE(incorporate_results(d, ProposedBatch{}, {}) == d);

    BatchConfig cfg;
    cfg.batch_size = 2;
    const auto batch = propose_batch(d, grid, p.specs, p.objective, cfg, small_fit(p));
    ASSERT_EQ(batch.size(), 2u);
    EXPECT_THROW(incorporate_results(d, batch, {{0.0}}), Error);
    EXPECT_THROW(incorporate_results(d, batch, {{0.0}, {std::nan("")}}), Error);
    const std::vector<std::vector<double>> meas{{batch.fantasy_means[0][0] + 1.5}, {batch.fantasy_means[1][0] - 1.5}};
    const Dataset out = incorporate_results(d, batch, meas);
    ASSERT_EQ(out.size(), d.size() + 2);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(out.observation(0, d.size() + i), meas[i][0]);
        EXPECT_TRUE((out.input(d.size() + i).array() == batch.points[i].array()).all());
    }

    // Re-predicting after incorporation reflects measurements, not fantasies.
    KernelParams kp;
    kp.lengthscales = Vector::Constant(2, 0.3);
    kp.noise_variance = 1e-6;
    const auto f = small_fit(p);
    const GpModel fresh = build_model(out, 0, kp, f);
    const GpModel via_condition = build_model(d, 0, kp, f).condition(out, 0);
    oracle::DenseGp dense;
    dense.x.resize(static_cast<Eigen::Index>(out.size()), 2);
    dense.y.resize(static_cast<Eigen::Index>(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) {
        dense.x.row(static_cast<Eigen::Index>(i)) = out.input(i).transpose();
        dense.y(static_cast<Eigen::Index>(i)) = out.observation(0, i);
    }
    const auto& nf = fresh.normalization();
    dense.lengthscales = kp.lengthscales.cwiseProduct(nf.width);
    dense.signal = fresh.signal_variance();
    dense.noise = (kp.noise_variance + fresh.jitter()) * nf.y_scale * nf.y_scale;
    dense.mean = nf.y_mean;
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_NEAR(fresh.predict(batch.points[i]).mean, dense.predict(batch.points[i]).first, 1e-8);
        EXPECT_NEAR(fresh.predict(batch.points[i]).mean, meas[i][0], 1e-3);
        EXPECT_GT(std::abs(fresh.predict(batch.points[i]).mean - batch.fantasy_means[i][0]), 1e-3);
    }
    (void)via_condition;
}

TEST(ProposeBatch, SingleElementEqualsOneSelection)
{
    const auto p = make_problem(ProblemId::p3);
    auto grid = make_grid(p, 900);
    auto grid2 = grid;
    const Dataset d = initial_data(p, grid, {10, 450, 700, 890});
    const auto f = small_fit(p);
    BatchConfig cfg;
    cfg.batch_size = 1;
    const auto batch = propose_batch(d, grid, p.specs, p.objective, cfg, f);

    const auto models = fit_models(d, f);
    const auto inc = compute_incumbent(d, p.specs, p.objective, fallback_cost(grid2, evaluated_costs(d, p.objective)));
    const auto subset = scoring_subset(grid2, inc);
    const auto sc = score_candidates(models, p.specs, grid2, subset, inc, cfg.pi);
    const auto sel = select_candidate(sc, feasibility_mask(d, p.specs), cfg.pi);
    ASSERT_EQ(batch.size(), 1u);
    EXPECT_EQ(batch.candidates[0], sel.candidate);
    EXPECT_EQ(batch.selection_branches[0], sel.branch);
    EXPECT_FALSE(grid.is_active(sel.candidate));
}

TEST(ProposeBatch, FantasiesChangeLaterSelections)
{
    const auto p = make_problem(ProblemId::p1);
    Matrix pts(2, 3);
    pts << 1.0, 1.1, 5.0, 1.0, 1.1, 5.0;
    CandidateSet cs = CandidateSet::from_function(pts, p.objective, "three");
    Dataset d(2, 1);
    for (auto x : {Vector((Vector(2) << 0.5, 3.0).finished()), Vector((Vector(2) << 3.0, 0.5).finished()), Vector((Vector(2) << 4.5, 4.5).finished())})
        d.add(x, evaluate(p, x).constraints);
    BatchConfig cfg;
    cfg.batch_size = 2;
    const auto b = propose_batch(d, cs, p.specs, p.objective, cfg, small_fit(p));
    ASSERT_EQ(b.size(), 2u);
    EXPECT_NE(b.candidates[0], b.candidates[1]);
    EXPECT_EQ(cs.active_count(), 1u);
}

TEST(ProposeBatch, ExhaustionFlag)
{
    const auto p = make_problem(ProblemId::p1);
    Matrix pts(2, 2);
    pts << 1.0, 2.0, 1.0, 2.0;
    CandidateSet cs = CandidateSet::from_function(pts, p.objective, "two");
    const Dataset d = initial_data(p, make_grid(p, 100), {0, 55});
    BatchConfig cfg;
    cfg.batch_size = 4;
    const auto b = propose_batch(d, cs, p.specs, p.objective, cfg, small_fit(p));
    EXPECT_EQ(b.size(), 2u);
    EXPECT_TRUE(b.exhausted);
    EXPECT_THROW(propose_batch(d, cs, p.specs, p.objective, cfg, small_fit(p)), Error);
}

TEST(ProposeBatch, HygieneOverThousandCalls)
{
    const auto p = make_problem(ProblemId::p1);
    const auto base = make_grid(p, 256);
    std::mt19937 gen(12);
    std::uniform_int_distribution<std::size_t> pick(0, base.size() - 1), nb(1, 6);
    std::uniform_real_distribution<double> u(0, 1);
    int calls = 0;
    for (int ds = 0; ds < 20; ++ds) {
        std::set<std::size_t> init;
        while (init.size() < 6)
            init.insert(pick(gen));
        const Dataset d = initial_data(p, base, {init.begin(), init.end()});
        const auto f = small_fit(p);
        const auto models = fit_models(d, f);
        for (int r = 0; r < 50; ++r, ++calls) {
            CandidateSet cs = base;
            for (auto i : init)
                cs.deactivate(i);
            const std::size_t before = cs.active_count();
            BatchConfig cfg;
            cfg.batch_size = nb(gen);
            cfg.pi = u(gen);
            const auto b = propose_batch(d, cs, p.specs, p.objective, cfg, f, &models);
            const std::set<std::size_t> uniq(b.candidates.begin(), b.candidates.end());
            EXPECT_EQ(uniq.size(), b.size());
            EXPECT_EQ(cs.active_count(), before - b.size());
            for (auto c : b.candidates)
                EXPECT_EQ(init.count(c), 0u);
            std::vector<std::vector<double>> meas;
            for (const auto& x : b.points)
                meas.push_back(evaluate(p, x).constraints);
            const Dataset out = incorporate_results(d, b, meas);
            EXPECT_EQ(out.size(), d.size() + b.size());
            VirtualDataset v(out);
            EXPECT_EQ(v.fantasy_count(), 0u);
            EXPECT_TRUE(v.real() == out);
        }
    }
    EXPECT_EQ(calls, 1000);
}

TEST(VirtualDatasetTest, RealDropsFantasies)
{
    Dataset d(1, 1);
    d.add((Vector(1) << 0.0).finished(), {1.0});
    VirtualDataset v(d);
    const double m = 0.5;
    v.add_fantasy((Vector(1) << 1.0).finished(), std::span(&m, 1));
    EXPECT_EQ(v.fantasy_count(), 1u);
    EXPECT_EQ(v.data().size(), 2u);
    EXPECT_TRUE(v.real() == d);
}

TEST(RunToTermination, BatchOfOneEqualsSequentialLoop)
{
    const auto p = make_problem(ProblemId::p1);
    const auto grid0 = make_grid(p, 400);
    const Dataset init = initial_data(p, grid0, {17, 301});
    BatchConfig cfg;
    cfg.batch_size = 1;
    cfg.max_batches = 12;
    cfg.epsilon = 0.0;
    FitConfig f = small_fit(p);
    f.seed = 4;
    CandidateSet g1 = grid0;
    for (auto i : {17u, 301u})
        g1.deactivate(i);
    CandidateSet g2 = g1;
    const auto res = run_to_termination(init, g1, p.specs, p.objective, cfg, truth(p), f);

    Dataset data = init;
    std::vector<GpModel> models;
    std::vector<std::size_t> seq;
    for (std::size_t b = 0; b < cfg.max_batches; ++b) {
        FitConfig fc = f;
        fc.seed = rng::combine(f.seed, b);
        models = fit_models(data, fc, models.empty() ? nullptr : &models);
        const auto inc = compute_incumbent(data, p.specs, p.objective, fallback_cost(g2, evaluated_costs(data, p.objective)));
        const auto sc = score_candidates(models, p.specs, g2, scoring_subset(g2, inc), inc, cfg.pi);
        const auto sel = select_candidate(sc, feasibility_mask(data, p.specs), cfg.pi);
        g2.deactivate(sel.candidate);
        seq.push_back(sel.candidate);
        const Vector x = g2.point(sel.candidate);
        const auto c = evaluate(p, x).constraints;
        data.add(x, c);
    }
    ASSERT_EQ(res.batches.size(), seq.size());
    for (std::size_t b = 0; b < seq.size(); ++b)
        EXPECT_EQ(res.batches[b].batch.candidates.at(0), seq[b]) << "batch " << b;
    EXPECT_TRUE(res.dataset == data);
}

TEST(RunToTermination, AllInfeasibleReportsNoMinimizer)
{
    const auto p = make_problem(ProblemId::p1);
    CandidateSet grid = make_grid(p, 225);
    const Dataset init = initial_data(p, grid, {0, 224});
    BatchConfig cfg;
    cfg.batch_size = 3;
    cfg.max_batches = 2;
    const ConstraintOracle never = [](const Vector&) { return std::vector<double>{5.0}; };
    Dataset bad(2, 1);
    for (std::size_t i = 0; i < init.size(); ++i)
        bad.add(init.input(i), {5.0});
    const auto res = run_to_termination(bad, grid, p.specs, p.objective, cfg, never, small_fit(p));
    EXPECT_FALSE(res.has_feasible_minimizer());
    EXPECT_EQ(res.status(), "no feasible minimizer");
    EXPECT_LE(res.batches.size(), 2u);
    for (const auto& rec : res.batches)
        for (auto br : rec.batch.selection_branches)
            EXPECT_EQ(br, Branch::no_feasible_fip);
}

TEST(RunToTermination, OptimalIncumbentTerminatesImmediately)
{
    // Quadratic bowl, constraint always satisfied, incumbent sits at the minimum.
    Matrix pts(1, 21);
    for (int i = 0; i < 21; ++i)
        pts(0, i) = -1.0 + 0.1 * i;
    const CostFunction cost = [](const Vector& x) { return x(0) * x(0); };
    CandidateSet cs = CandidateSet::from_function(pts, cost, "x^2");
    const std::vector<ConstraintSpec> specs{ConstraintSpec::at_most(1.0)};
    Dataset d(1, 1);
    d.add((Vector(1) << 0.0).finished(), {0.0});
    d.add((Vector(1) << 0.8).finished(), {0.1});
    cs.deactivate(10);
    BatchConfig cfg;
    cfg.batch_size = 3;
    const auto res = run_to_termination(d, cs, specs, cost, cfg, [](const Vector&) { return std::vector<double>{0.0}; });
    ASSERT_EQ(res.batches.size(), 1u);
    EXPECT_EQ(res.stop_reason, StopReason::terminated);
    EXPECT_FALSE(res.batches[0].evaluated);
    for (double f : res.batches[0].batch.selection_fips)
        EXPECT_EQ(f, 0.0);
    ASSERT_TRUE(res.has_feasible_minimizer());
    EXPECT_EQ(res.minimizer_cost, 0.0);
}

TEST(RunToTermination, IncumbentNonIncreasingAndTraceFormat)
{
    const auto p = make_problem(ProblemId::p2);
    CandidateSet grid = make_grid(p, 625);
    const Dataset init = initial_data(p, grid, {40, 200, 410, 600});
    BatchConfig cfg;
    cfg.batch_size = 3;
    cfg.max_batches = 6;
    const auto res = run_to_termination(init, grid, p.specs, p.objective, cfg, truth(p), small_fit(p));
    for (std::size_t b = 1; b < res.batches.size(); ++b)
        EXPECT_LE(res.batches[b].incumbent_cost, res.batches[b - 1].incumbent_cost);
    std::ostringstream out;
    write_trace_jsonl(out, res);
    std::istringstream in(out.str());
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        for (const char* key : {"batch_index", "inner_index", "candidate", "S", "I", "FP", "alpha", "branch", "fantasy_means"})
            EXPECT_TRUE(j.contains(key)) << key;
        EXPECT_TRUE(!j.contains("measured_values") || j["measured_values"].is_array()) << line;
        ++rows;
    }
    std::size_t expected = 0;
    for (const auto& rec : res.batches)
        expected += rec.batch.size();
    EXPECT_EQ(rows, expected);
}
