#ifndef CBBO_CAMPAIGN_SESSION_HPP
#define CBBO_CAMPAIGN_SESSION_HPP

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <cbbo/acquisition.hpp>
#include <cbbo/batch.hpp>
#include <cbbo/calibration.hpp>
#include <cbbo/campaign/config.hpp>
#include <cbbo/dataset.hpp>
#include <cbbo/gp.hpp>

namespace cbbo::campaign {

using cbbo::to_json;

struct PendingBatch {
    ProposedBatch batch;
    double pi = 0.0;
    bool termination_recommended = false;
};

namespace detail {
    inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

    inline double number_or_nan(const nlohmann::json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

    inline std::vector<double> numbers_or_nan(const nlohmann::json& j)
    {
        std::vector<double> out;
        for (const auto& v : j)
            out.push_back(number_or_nan(v));
        return out;
    }

    inline nlohmann::json numbers_or_null(const std::vector<double>& v)
    {
        nlohmann::json out = nlohmann::json::array();
        for (double x : v)
            out.push_back(number_or_null(x));
        return out;
    }
} // namespace detail

inline nlohmann::json to_json(const ProposedBatch& b)
{
    nlohmann::json j;
    j["points"] = nlohmann::json::array();
    for (const auto& p : b.points)
        j["points"].push_back(to_json(p));
    j["S"] = b.costs;
    j["I"] = b.improvements;
    j["FP"] = detail::numbers_or_null(b.fps);
    j["alpha_fip"] = detail::numbers_or_null(b.selection_fips);
    j["alpha"] = detail::numbers_or_null(b.alphas);
    j["branch"] = nlohmann::json::array();
    for (auto br : b.selection_branches)
        j["branch"].push_back(to_string(br));
    j["fantasy_means"] = nlohmann::json::array();
    for (const auto& m : b.fantasy_means)
        j["fantasy_means"].push_back(detail::numbers_or_null(m));
    j["exhausted"] = b.exhausted;
    return j;
}

inline ProposedBatch batch_from_json(const nlohmann::json& j)
{
    ProposedBatch b;
    for (const auto& p : j.at("points"))
        b.points.push_back(vector_from_json(p));
    b.candidates.resize(b.points.size());
    for (std::size_t i = 0; i < b.candidates.size(); ++i)
        b.candidates[i] = i;
    b.costs = j.at("S").get<std::vector<double>>();
    b.improvements = j.at("I").get<std::vector<double>>();
    b.fps = detail::numbers_or_nan(j.at("FP"));
    b.selection_fips = detail::numbers_or_nan(j.at("alpha_fip"));
    b.alphas = detail::numbers_or_nan(j.at("alpha"));
    for (const auto& br : j.at("branch"))
        b.selection_branches.push_back(branch_from_string(br.get<std::string>()));
    for (const auto& m : j.at("fantasy_means"))
        b.fantasy_means.push_back(detail::numbers_or_nan(m));
    b.exhausted = j.value("exhausted", false);
    return b;
}

inline nlohmann::json to_json(const Dataset& d)
{
    nlohmann::json j;
    j["dims"] = d.dims();
    j["constraints"] = d.constraint_count();
    j["rows"] = nlohmann::json::array();
    for (std::size_t i = 0; i < d.size(); ++i)
        j["rows"].push_back({{"x", to_json(d.input(i))}, {"c", d.measurements(i)}});
    return j;
}

inline Dataset dataset_from_json(const nlohmann::json& j)
{
    Dataset d(j.at("dims").get<std::size_t>(), j.at("constraints").get<std::size_t>(), true);
    for (const auto& r : j.at("rows")) {
        const auto c = r.at("c").get<std::vector<double>>();
        d.add(vector_from_json(r.at("x")), c);
    }
    return d;
}

struct RecordOutcome {
    std::size_t recorded = 0;
    bool has_feasible = false;
    double incumbent_cost = 0.0;
    bool termination_recommended = false;
};

/// Persistent campaign state. Every mutation is expressed as one history
/// event and applied through `apply`, so replaying the history from the
/// config rebuilds the same state.
class Session {
public:
    Session() = default;

    static Session create(CampaignConfig config)
    {
        config.validate();
        Session s;
        s.config_ = std::move(config);
        s.reset();
        nlohmann::json e{{"type", "init"}, {"init_rows", s.config_.init.size()}};
        s.apply(e);
        return s;
    }

    const CampaignConfig& config() const noexcept { return config_; }
    const Dataset& dataset() const noexcept { return dataset_; }
    const std::optional<SessionOffset>& offset() const noexcept { return offset_; }
    const std::optional<PendingBatch>& pending() const noexcept { return pending_; }
    const nlohmann::json& history() const noexcept { return history_; }
    double current_pi() const noexcept { return pi_; }
    std::size_t suggest_count() const noexcept { return suggests_; }
    std::size_t batches_recorded() const noexcept { return records_; }

    double cost(const Vector& x) const { return config_.cost(x.head(static_cast<Eigen::Index>(config_.controllable()))); }

    CostFunction cost_function() const
    {
        return [this](const Vector& x) { return cost(x); };
    }

    /// Status model trained on the initialization rows only.
    StatusModel status_model() const
    {
        if (!config_.status_enabled)
            throw Error(ErrorKind::session_state, "status modeling is not enabled for this campaign");
        std::vector<Vector> xs;
        std::vector<double> vs;
        for (const auto& r : config_.init) {
            xs.push_back(r.x);
            vs.push_back(*r.status);
        }
        if (xs.size() < 2)
            throw Error(ErrorKind::insufficient_data, "status model needs at least 2 initialization experiments");
        return fit_status_model(xs, vs, model_fit(0x5747u));
    }

    /// Offset from a baseline experiment; `constraints` are its quality
    /// measurements, appended to the dataset when configured.
    const SessionOffset& calibrate(const Vector& baseline_input, double measured, const std::optional<std::vector<double>>& constraints = std::nullopt,
        bool allow_outside_init = false)
    {
        if (!config_.status_enabled)
            throw Error(ErrorKind::session_state, "status column absent: this campaign has no status measurement");
        if (pending_)
            throw Error(ErrorKind::session_state, "a batch is pending; record or abandon it before calibrating");
        if (static_cast<std::size_t>(baseline_input.size()) != config_.controllable())
            throw Error(ErrorKind::dimension_mismatch, "baseline needs " + std::to_string(config_.controllable()) + " controllable inputs");
        if (!std::isfinite(measured))
            throw Error(ErrorKind::invalid_argument, "non-finite status measurement");
        bool in_init = false;
        for (const auto& r : config_.init)
            in_init = in_init || r.x == baseline_input;
        if (!in_init && !allow_outside_init)
            throw Error(ErrorKind::invalid_argument, "baseline input is not one of the initialization experiments");
        if (constraints) {
            if (constraints->size() != config_.specs.size())
                throw Error(ErrorKind::dimension_mismatch, "expected " + std::to_string(config_.specs.size()) + " constraint values");
            for (double v : *constraints)
                if (!std::isfinite(v))
                    throw Error(ErrorKind::invalid_argument, "non-finite measurement");
        }
        const auto off = compute_offset(status_model(), baseline_input, measured);
        nlohmann::json e{{"type", "calibrate"}, {"offset", to_json(off)}, {"in_init", in_init}};
        if (constraints && config_.append_baseline)
            e["constraints"] = *constraints;
        apply(e);
        return *offset_;
    }

    /// Candidate pool for the next suggestion: the controllable grid minus
    /// evaluated inputs, with the calibrated status prediction appended.
    CandidateSet candidates() const
    {
        const auto d = static_cast<Eigen::Index>(config_.controllable());
        std::vector<Vector> exclude;
        for (std::size_t i = 0; i < dataset_.size(); ++i)
            exclude.push_back(dataset_.input(i).head(d));
        if (pending_)
            for (const auto& p : pending_->batch.points)
                exclude.push_back(p.head(d));
        if (config_.status_enabled) {
            if (!offset_)
                throw Error(ErrorKind::session_state, "calibrate the session before requesting suggestions");
            return generate_candidates(config_.grid, status_model(), *offset_, cost_function(), exclude);
        }
        const Matrix grid = config_.grid.points();
        std::vector<Eigen::Index> keep;
        for (Eigen::Index j = 0; j < grid.cols(); ++j) {
            bool seen = false;
            for (const auto& e : exclude)
                if (e == grid.col(j)) {
                    seen = true;
                    break;
                }
            if (!seen)
                keep.push_back(j);
        }
        if (keep.empty())
            throw Error(ErrorKind::empty_candidates, "every grid point has already been evaluated");
        Matrix pts(d, static_cast<Eigen::Index>(keep.size()));
        for (std::size_t c = 0; c < keep.size(); ++c)
            pts.col(static_cast<Eigen::Index>(c)) = grid.col(keep[c]);
        return CandidateSet::from_function(std::move(pts), cost_function(), config_.objective.label);
    }

    const PendingBatch& suggest(std::optional<std::size_t> n = std::nullopt, std::optional<double> pi = std::nullopt)
    {
        if (pending_)
            throw Error(ErrorKind::session_state, "a batch is already pending; record its results or abandon it first");
        BatchConfig bc = config_.batch;
        bc.batch_size = n.value_or(n_);
        bc.pi = pi.value_or(pi_);
        bc.validate();

        CandidateSet pool = candidates();
        ProposedBatch batch;
        if (dataset_.size() < 2)
            batch = space_filling(pool, bc.batch_size);
        else
            batch = propose_batch(dataset_, pool, config_.specs, cost_function(), bc, model_fit(suggests_));

        nlohmann::json e{{"type", "suggest"}, {"n", bc.batch_size}, {"pi", bc.pi}, {"pi_override", pi.has_value() && *pi != pi_},
            {"batch", to_json(batch)}, {"termination_recommended", !batch.empty() && check_termination(batch, bc.epsilon)}};
        apply(e);
        return *pending_;
    }

    /// Scores of every remaining candidate against the real dataset, as seen
    /// by the first selection of the next suggestion. Read-only.
    std::pair<AcquisitionScores, Selection> scores(std::optional<double> pi = std::nullopt) const
    {
        if (dataset_.size() < 2)
            throw Error(ErrorKind::insufficient_data, "scoring needs at least 2 evaluated experiments");
        const double p = pi.value_or(pi_);
        if (!(p >= 0 && p <= 1))
            throw Error(ErrorKind::invalid_argument, "pi must lie in [0, 1]");
        const CandidateSet pool = candidates();
        const auto models = fit_models(dataset_, model_fit(suggests_));
        const auto cost = cost_function();
        const auto inc = compute_incumbent(dataset_, config_.specs, cost, fallback_cost(pool, evaluated_costs(dataset_, cost)));
        auto sc = score_candidates(models, config_.specs, pool, scoring_subset(pool, inc), inc, p);
        const auto sel = select_candidate(sc, feasibility_mask(dataset_, config_.specs), p);
        return {std::move(sc), sel};
    }

    /// One measurement vector per pending candidate: constraint values, then
    /// the status measurement when status modeling is enabled.
    RecordOutcome record(const std::vector<std::vector<double>>& measurements)
    {
        if (!pending_)
            throw Error(ErrorKind::session_state, "no pending batch to record");
        const std::size_t width = config_.specs.size() + (config_.status_enabled ? 1 : 0);
        if (measurements.size() != pending_->batch.size())
            throw Error(ErrorKind::dimension_mismatch,
                "expected " + std::to_string(pending_->batch.size()) + " measurement rows, got " + std::to_string(measurements.size()));
        for (const auto& row : measurements) {
            if (row.size() != width)
                throw Error(ErrorKind::dimension_mismatch, "expected " + std::to_string(width) + " values per row, got " + std::to_string(row.size()));
            for (double v : row)
                if (!std::isfinite(v))
                    throw Error(ErrorKind::invalid_argument, "non-finite measurement");
        }
        const bool terminate = check_termination(pending_->batch, config_.batch.epsilon);
        nlohmann::json e{{"type", "record"}, {"measurements", measurements}, {"termination_recommended", terminate}};
        apply(e);

        RecordOutcome out;
        out.recorded = measurements.size();
        const auto inc = incumbent();
        out.has_feasible = inc.has_feasible();
        out.incumbent_cost = inc.best_feasible_cost;
        out.termination_recommended = terminate;
        return out;
    }

    void abandon(const std::string& reason = {})
    {
        if (!pending_)
            throw Error(ErrorKind::session_state, "no pending batch to abandon");
        apply({{"type", "abandon"}, {"reason", reason}, {"discarded", pending_->batch.size()}});
    }

    /// Fallback: max objective over the grid and the evaluated points, plus one.
    double fallback() const
    {
        double m = -std::numeric_limits<double>::infinity();
        const Matrix grid = config_.grid.points();
        for (Eigen::Index j = 0; j < grid.cols(); ++j)
            m = std::max(m, config_.cost(grid.col(j)));
        for (std::size_t i = 0; i < dataset_.size(); ++i)
            m = std::max(m, cost(dataset_.input(i)));
        return m + 1.0;
    }

    Incumbent incumbent() const { return compute_incumbent(dataset_, config_.specs, cost_function(), fallback()); }

    /// Read-only summary.
    nlohmann::json status() const
    {
        nlohmann::json j;
        j["name"] = config_.name;
        if (!config_.note.empty())
            j["note"] = config_.note;
        j["evaluations"] = dataset_.size();
        j["initialization_evaluations"] = config_.init.size();
        const auto mask = feasibility_mask(dataset_, config_.specs);
        const auto feasible = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
        j["feasible"] = feasible;
        j["feasible_fraction"] = dataset_.size() ? static_cast<double>(feasible) / static_cast<double>(dataset_.size()) : 0.0;
        const auto inc = incumbent();
        j["has_feasible"] = inc.has_feasible();
        j["incumbent_cost"] = inc.best_feasible_cost;
        j["incumbent_input"] = inc.has_feasible() ? to_json(*inc.best_feasible_input) : nlohmann::json();
        j["batches_suggested"] = suggests_;
        j["batches_recorded"] = records_;
        j["pending"] = pending_ ? pending_->batch.size() : 0;
        j["pi"] = pi_;
        j["n"] = n_;
        j["epsilon"] = config_.batch.epsilon;
        j["last_batch_fips"] = detail::numbers_or_null(last_fips_);
        j["termination_recommended"] = last_termination_;
        j["offset"] = offset_ ? to_json(*offset_) : nlohmann::json();
        return j;
    }

    /// Applies one history event; the only place state changes.
    void apply(nlohmann::json event)
    {
        const auto type = event.at("type").get<std::string>();
        if (type == "init") {
            if (!history_.empty())
                throw Error(ErrorKind::session_state, "init event must come first");
            for (const auto& r : config_.init)
                dataset_.add(config_.full_input(r), r.constraints);
        }
        else if (history_.empty())
            throw Error(ErrorKind::session_state, "history must start with an init event");
        else if (type == "calibrate") {
            offset_ = offset_from_json(event.at("offset"));
            if (event.contains("constraints")) {
                Vector x(static_cast<Eigen::Index>(config_.input_dims()));
                x.head(offset_->baseline_input.size()) = offset_->baseline_input;
                x(x.size() - 1) = offset_->baseline_measured;
                dataset_.add(x, event["constraints"].get<std::vector<double>>());
            }
        }
        else if (type == "suggest") {
            if (pending_)
                throw Error(ErrorKind::session_state, "two suggestions without a record or abandon in between");
            PendingBatch p;
            p.batch = batch_from_json(event.at("batch"));
            p.pi = event.at("pi").get<double>();
            p.termination_recommended = event.value("termination_recommended", false);
            pi_ = p.pi;
            n_ = event.at("n").get<std::size_t>();
            pending_ = std::move(p);
            ++suggests_;
        }
        else if (type == "record") {
            if (!pending_)
                throw Error(ErrorKind::session_state, "record without a pending batch");
            const auto rows = event.at("measurements").get<std::vector<std::vector<double>>>();
            const auto K = config_.specs.size();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                Vector x = pending_->batch.points.at(i);
                if (config_.status_enabled)
                    x(x.size() - 1) = rows[i].at(K);
                dataset_.add(x, std::span<const double>(rows[i].data(), K));
            }
            last_fips_ = pending_->batch.selection_fips;
            last_termination_ = event.value("termination_recommended", false);
            pending_.reset();
            ++records_;
        }
        else if (type == "abandon") {
            if (!pending_)
                throw Error(ErrorKind::session_state, "abandon without a pending batch");
            pending_.reset();
        }
        else
            throw Error(ErrorKind::session_state, "unknown history event '" + type + "'");
        event["seq"] = history_.size();
        history_.push_back(std::move(event));
    }

    /// Rebuilds a session from its config and event log.
    static Session replay(CampaignConfig config, const nlohmann::json& history)
    {
        config.validate();
        Session s;
        s.config_ = std::move(config);
        s.reset();
        for (const auto& e : history) {
            nlohmann::json copy = e;
            copy.erase("seq");
            s.apply(std::move(copy));
        }
        return s;
    }

private:
    void reset()
    {
        dataset_ = Dataset(config_.input_dims(), config_.specs.size(), true);
        offset_.reset();
        pending_.reset();
        history_ = nlohmann::json::array();
        pi_ = config_.batch.pi;
        n_ = config_.batch.batch_size;
        suggests_ = 0;
        records_ = 0;
        last_fips_.clear();
        last_termination_ = false;
    }

    FitConfig model_fit(std::uint64_t salt) const
    {
        FitConfig f;
        f.noise_mode = NoiseMode::learned;
        f.restarts = config_.restarts;
        f.seed = rng::combine(config_.seed, salt);
        return f;
    }

    /// Seeded picks used while fewer than two evaluations exist and no
    /// model can be fitted; reported under the no-feasible branch.
    ProposedBatch space_filling(const CandidateSet& pool, std::size_t n) const
    {
        ProposedBatch b;
        rng::SplitMix gen(rng::combine(config_.seed, 0x5f11u, suggests_));
        auto active = pool.active_indices();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        const double fb = fallback();
        while (b.size() < n && !active.empty()) {
            const auto pick = static_cast<std::size_t>(gen.below(active.size()));
            const auto idx = active[pick];
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(pick));
            b.candidates.push_back(idx);
            b.points.push_back(pool.point(idx));
            b.costs.push_back(pool.cost(idx));
            b.improvements.push_back(std::max(0.0, fb - pool.cost(idx)));
            b.fps.push_back(nan);
            b.selection_fips.push_back(nan);
            b.alphas.push_back(nan);
            b.selection_branches.push_back(Branch::no_feasible_fip);
            b.fantasy_means.push_back(std::vector<double>(config_.specs.size(), nan));
        }
        b.exhausted = b.size() < n;
        return b;
    }

    CampaignConfig config_;
    Dataset dataset_;
    std::optional<SessionOffset> offset_;
    std::optional<PendingBatch> pending_;
    nlohmann::json history_ = nlohmann::json::array();
    double pi_ = 0.0;
    std::size_t n_ = 1;
    std::size_t suggests_ = 0;
    std::size_t records_ = 0;
    std::vector<double> last_fips_;
    bool last_termination_ = false;
};

inline nlohmann::json to_json(const Session& s)
{
    nlohmann::json j;
    j["format"] = 1;
    j["config"] = to_json(s.config());
    j["dataset"] = to_json(s.dataset());
    j["offset"] = s.offset() ? to_json(*s.offset()) : nlohmann::json();
    if (s.pending()) {
        j["pending"] = to_json(s.pending()->batch);
        j["pending"]["pi"] = s.pending()->pi;
        j["pending"]["termination_recommended"] = s.pending()->termination_recommended;
    }
    else
        j["pending"] = nlohmann::json();
    j["history"] = s.history();
    return j;
}

/// Session from its file form; the state is rebuilt from the history and
/// checked against the stored dataset.
inline Session session_from_json(const nlohmann::json& j)
{
    try {
        Session s = Session::replay(config_from_json(j.at("config")), j.at("history"));
        if (!(dataset_from_json(j.at("dataset")) == s.dataset()))
            throw Error(ErrorKind::session_state, "stored dataset disagrees with the event history");
        return s;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::io, std::string("malformed session file: ") + e.what());
    }
}

} // namespace cbbo::campaign

#endif
