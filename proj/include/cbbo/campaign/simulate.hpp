#ifndef CBBO_CAMPAIGN_SIMULATE_HPP
#define CBBO_CAMPAIGN_SIMULATE_HPP

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <cbbo/campaign/config.hpp>
#include <cbbo/campaign/session.hpp>
#include <cbbo/campaign/synthetic.hpp>

namespace cbbo::campaign {

/// Random grid points of `config`, measured by `oracle` in session 0.
inline std::vector<InitRow> measured_init(const CampaignConfig& config, const SyntheticProcessOracle& oracle, std::size_t count,
    std::uint64_t seed, double drift = 0.0)
{
    const Matrix grid = config.grid.points();
    rng::SplitMix gen(rng::combine(seed, 0x1417u));
    std::vector<Eigen::Index> picks;
    while (picks.size() < std::min<std::size_t>(count, static_cast<std::size_t>(grid.cols()))) {
        const auto j = static_cast<Eigen::Index>(gen.below(static_cast<std::uint64_t>(grid.cols())));
        if (std::find(picks.begin(), picks.end(), j) == picks.end())
            picks.push_back(j);
    }
    std::vector<InitRow> rows;
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const Vector x = grid.col(picks[i]);
        const auto m = oracle.measure(x, drift, 0, i);
        InitRow r;
        r.x = x;
        r.constraints = m.constraints;
        if (oracle.has_status)
            r.status = m.status;
        rows.push_back(std::move(r));
    }
    return rows;
}

/// Coating-like study: six inputs, hardness and porosity windows, gun
/// voltage as status, stress-index-like cost on three inputs.
inline CampaignConfig aps_like_config(const SyntheticProcessOracle& oracle, std::size_t init_count = 12, std::uint64_t seed = 1)
{
    CampaignConfig c;
    c.name = "synthetic-aps";
    c.note = "synthetic stand-in process; not physical data";
    for (std::size_t j = 0; j < 6; ++j) {
        c.input_names.push_back("x" + std::to_string(j + 1));
        c.grid.axes.push_back({0.0, 1.0, 5});
    }
    c.status_enabled = true;
    c.status_name = "V";
    c.constraint_names = oracle.output_names;
    c.specs = {ConstraintSpec::between(635.0, 675.0), ConstraintSpec::between(6.0, 8.2)};
    c.objective.label = "stress index (synthetic)";
    c.objective.constant = 80.0;
    c.objective.terms = {{0, 1.0, 60.0}, {1, 1.0, 25.0}, {3, 2.0, 40.0}};
    c.batch.batch_size = 5;
    c.batch.pi = 0.4;
    c.batch.epsilon = 0.05;
    c.seed = seed;
    c.init = measured_init(c, oracle, init_count, seed);
    c.validate();
    return c;
}

/// Printing-like study: layer height and speed, roughness at most 10,
/// print-time-like cost falling with both inputs.
inline CampaignConfig fdm_like_config(const SyntheticProcessOracle& oracle, std::size_t init_count = 7, std::uint64_t seed = 1)
{
    CampaignConfig c;
    c.name = "synthetic-fdm";
    c.note = "synthetic stand-in process; not physical data";
    c.input_names = {"layer_height", "speed"};
    c.grid.axes = {{0.1, 1.0, 31}, {0.1, 1.0, 31}};
    c.constraint_names = oracle.output_names;
    c.specs = {ConstraintSpec::at_most(10.0)};
    c.objective.label = "print time (synthetic)";
    c.objective.constant = 0.0;
    c.objective.terms = {{0, -1.0, 2.0}, {1, -1.0, 3.0}};
    c.batch.batch_size = 1;
    c.batch.pi = 0.4;
    c.batch.epsilon = 0.05;
    c.seed = seed;
    c.init = measured_init(c, oracle, init_count, seed);
    c.validate();
    return c;
}

struct SimulationOptions {
    std::size_t max_batches = 50;
    /// Status drift of each experimental session (one session per batch), cycled.
    std::vector<double> drifts = {2.0, -0.8};
    /// Initialization row re-run as the calibration baseline.
    std::size_t baseline_row = 0;
    /// (first batch, pi) pairs; the latest entry not after the batch applies.
    std::vector<std::pair<std::size_t, double>> pi_schedule;
    /// Stop without evaluating when a proposed batch meets the termination test.
    bool stop_on_termination = true;
};

struct SimulatedSelection {
    std::size_t batch = 0;
    double pi = 0.0;
    double fp = 0.0;
    bool truly_feasible = false;
};

struct SimulationResult {
    std::size_t batches = 0;
    bool terminated = false;
    std::vector<double> incumbent_costs;
    std::vector<bool> has_feasible;
    std::vector<SimulatedSelection> selections;
    std::size_t evaluations = 0;
    std::size_t feasible_evaluations = 0;
};

/// Runs calibrate / suggest / measure / record cycles against `oracle`.
/// `after_step` sees the session after every command.
inline SimulationResult simulate(Session& session, const SyntheticProcessOracle& oracle, const SimulationOptions& options = {},
    const std::function<void(const Session&)>& after_step = {})
{
    const auto& cfg = session.config();
    const auto d = static_cast<Eigen::Index>(cfg.controllable());
    SimulationResult res;
    auto step = [&] {
        if (after_step)
            after_step(session);
    };
    for (std::size_t b = 0; b < options.max_batches; ++b) {
        const std::uint64_t sess = session.batches_recorded() + b + 1;
        const double drift = options.drifts.empty() ? 0.0 : options.drifts[b % options.drifts.size()];
        if (cfg.status_enabled) {
            const Vector base = cfg.init.at(options.baseline_row).x;
            const auto m = oracle.measure(base, drift, sess, 0);
            session.calibrate(base, m.status, m.constraints);
            step();
        }
        std::optional<double> pi;
        for (const auto& [from, value] : options.pi_schedule)
            if (from <= b)
                pi = value;
        const auto& pending = session.suggest(std::nullopt, pi);
        step();
        if (pending.batch.empty() || (options.stop_on_termination && pending.termination_recommended)) {
            res.terminated = pending.termination_recommended;
            session.abandon(pending.termination_recommended ? "terminated" : "no candidates");
            step();
            break;
        }
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < pending.batch.size(); ++i) {
            const Vector xc = pending.batch.points[i].head(d);
            const auto m = oracle.measure(xc, drift, sess, i + 1);
            auto row = m.constraints;
            if (cfg.status_enabled)
                row.push_back(m.status);
            rows.push_back(row);
            res.selections.push_back({b, pending.pi, pending.batch.fps[i], all_satisfied(cfg.specs, oracle.true_outputs(xc, drift))});
            res.feasible_evaluations += all_satisfied(cfg.specs, m.constraints) ? 1 : 0;
            ++res.evaluations;
        }
        session.record(rows);
        step();
        ++res.batches;
        const auto inc = session.incumbent();
        res.incumbent_costs.push_back(inc.best_feasible_cost);
        res.has_feasible.push_back(inc.has_feasible());
    }
    return res;
}

} // namespace cbbo::campaign

#endif
