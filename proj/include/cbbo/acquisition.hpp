#ifndef CBBO_ACQUISITION_HPP
#define CBBO_ACQUISITION_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <cbbo/common.hpp>
#include <cbbo/dataset.hpp>
#include <cbbo/gp.hpp>

namespace cbbo {

enum class ConstraintKind { upper, interval };

/// c(x) <= upper, or lower <= c(x) <= upper.
struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::upper;
    double upper = 0.0;
    double lower = -std::numeric_limits<double>::infinity();

    static ConstraintSpec at_most(double upper) { return {ConstraintKind::upper, upper, -std::numeric_limits<double>::infinity()}; }

    static ConstraintSpec between(double lower, double upper)
    {
        if (!(lower < upper))
            throw Error(ErrorKind::invalid_argument, "interval constraint needs lower < upper");
        return {ConstraintKind::interval, upper, lower};
    }

    bool satisfied(double value) const
    {
        return kind == ConstraintKind::upper ? value <= upper : (value >= lower && value <= upper);
    }

    /// Pr[lower <= c <= upper] for c ~ N(mean, sd^2).
    double probability(double mean, double sd) const
    {
        const double hi = normal_cdf((upper - mean) / sd);
        if (kind == ConstraintKind::upper)
            return hi;
        return std::clamp(hi - normal_cdf((lower - mean) / sd), 0.0, 1.0);
    }

    /// log of `probability`, accurate where the probability underflows.
    double log_probability(double mean, double sd) const
    {
        const double b = (upper - mean) / sd;
        if (kind == ConstraintKind::upper)
            return log_normal_cdf(b);
        const double a = (lower - mean) / sd;
        if (b < 0)
            return log_diff_exp(log_normal_cdf(b), log_normal_cdf(a));
        if (a > 0)
            return log_diff_exp(log_normal_cdf(-a), log_normal_cdf(-b));
        return std::log(std::max(normal_cdf(b) - normal_cdf(a), std::numeric_limits<double>::min()));
    }
};

inline bool all_satisfied(std::span<const ConstraintSpec> specs, std::span<const double> values)
{
    if (specs.size() != values.size())
        throw Error(ErrorKind::dimension_mismatch, "one value per constraint required");
    for (std::size_t k = 0; k < specs.size(); ++k)
        if (!specs[k].satisfied(values[k]))
            return false;
    return true;
}

/// Deterministic objective values over a candidate set.
struct ObjectiveTable {
    std::vector<double> values;
    std::string provenance;
};

using CostFunction = std::function<double(const Vector&)>;

/// Finite pool of candidate inputs (one column each) with known costs.
/// Selected candidates are deactivated, never erased, so indices stay stable.
class CandidateSet {
public:
    CandidateSet() = default;
    CandidateSet(Matrix points, ObjectiveTable objective) : points_(std::move(points)), objective_(std::move(objective))
    {
        if (static_cast<std::size_t>(points_.cols()) != objective_.values.size())
            throw Error(ErrorKind::dimension_mismatch, "one objective value per candidate required");
        for (double v : objective_.values)
            if (!std::isfinite(v))
                throw Error(ErrorKind::invalid_argument, "objective values must be finite");
        active_.assign(objective_.values.size(), 1);
        active_count_ = objective_.values.size();
    }

    static CandidateSet from_function(Matrix points, const CostFunction& cost, std::string provenance)
    {
        ObjectiveTable table{std::vector<double>(static_cast<std::size_t>(points.cols())), std::move(provenance)};
        for (Eigen::Index j = 0; j < points.cols(); ++j)
            table.values[static_cast<std::size_t>(j)] = cost(points.col(j));
        return CandidateSet(std::move(points), std::move(table));
    }

    std::size_t size() const noexcept { return objective_.values.size(); }
    std::size_t dims() const noexcept { return static_cast<std::size_t>(points_.rows()); }
    std::size_t active_count() const noexcept { return active_count_; }
    bool empty() const noexcept { return active_count_ == 0; }
    bool is_active(std::size_t i) const { return active_.at(i) != 0; }
    Vector point(std::size_t i) const { return points_.col(static_cast<Eigen::Index>(i)); }
    double cost(std::size_t i) const { return objective_.values.at(i); }
    const Matrix& points() const noexcept { return points_; }
    const ObjectiveTable& objective() const noexcept { return objective_; }

    void deactivate(std::size_t i)
    {
        if (active_.at(i)) {
            active_[i] = 0;
            --active_count_;
        }
    }

    std::vector<std::size_t> active_indices() const
    {
        std::vector<std::size_t> out;
        out.reserve(active_count_);
        for (std::size_t i = 0; i < active_.size(); ++i)
            if (active_[i])
                out.push_back(i);
        return out;
    }

    double max_cost() const
    {
        return objective_.values.empty() ? -std::numeric_limits<double>::infinity()
                                         : *std::max_element(objective_.values.begin(), objective_.values.end());
    }

private:
    Matrix points_;
    ObjectiveTable objective_;
    std::vector<char> active_;
    std::size_t active_count_ = 0;
};

struct Incumbent {
    double best_feasible_cost = 0.0;
    std::optional<Vector> best_feasible_input;
    std::optional<std::size_t> best_feasible_index;
    double fallback_cost = 0.0;

    bool has_feasible() const noexcept { return best_feasible_input.has_value(); }
};

/// max S over the candidate set and the evaluated points, plus one.
inline double fallback_cost(const CandidateSet& candidates, std::span<const double> evaluated_costs)
{
    double m = candidates.max_cost();
    for (double c : evaluated_costs)
        m = std::max(m, c);
    if (!std::isfinite(m))
        throw Error(ErrorKind::empty_candidates, "fallback cost needs at least one cost value");
    return m + 1.0;
}

/// Per-point feasibility of the dataset, judged on the measured values.
inline std::vector<bool> feasibility_mask(const Dataset& data, std::span<const ConstraintSpec> specs)
{
    if (specs.size() != data.constraint_count())
        throw Error(ErrorKind::dimension_mismatch, "one spec per constraint required");
    std::vector<bool> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        bool ok = true;
        for (std::size_t k = 0; ok && k < specs.size(); ++k)
            ok = specs[k].satisfied(data.observation(k, i));
        out[i] = ok;
    }
    return out;
}

/// Lowest-cost measured-feasible point; ties go to the earliest point.
inline Incumbent compute_incumbent(const Dataset& data, std::span<const ConstraintSpec> specs, const CostFunction& cost, double fallback)
{
    Incumbent inc;
    inc.fallback_cost = fallback;
    inc.best_feasible_cost = fallback;
    const auto feasible = feasibility_mask(data, specs);
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!feasible[i])
            continue;
        const double c = cost(data.input(i));
        if (!inc.has_feasible() || c < inc.best_feasible_cost) {
            inc.best_feasible_cost = c;
            inc.best_feasible_input = data.input(i);
            inc.best_feasible_index = i;
        }
    }
    return inc;
}

inline double improvement(double candidate_cost, const Incumbent& incumbent)
{
    return std::max(0.0, incumbent.best_feasible_cost - candidate_cost);
}

/// Product over independent constraints of the latent-posterior probability
/// of satisfying each spec.
inline double feasibility_probability(std::span<const PosteriorPrediction> predictions, std::span<const ConstraintSpec> specs)
{
    if (predictions.size() != specs.size())
        throw Error(ErrorKind::dimension_mismatch, "one prediction per constraint required");
    double fp = 1.0;
    for (std::size_t k = 0; k < specs.size(); ++k)
        fp *= specs[k].probability(predictions[k].mean, std::sqrt(predictions[k].variance));
    return std::clamp(fp, 0.0, 1.0);
}

inline double alpha_fip(double fp, double improvement) { return improvement > 0 ? fp : 0.0; }
inline double alpha_hfi(double fp, double improvement, double pi) { return (fp - pi) * improvement; }
inline double alpha_eic(double fp, double improvement) { return fp * improvement; }

enum class AcquisitionKind { alg1, eic };

enum class Branch {
    no_feasible_fip,  ///< nothing feasible evaluated yet
    hfi,              ///< some candidate has FIP above the threshold
    low_confidence_fip,
    eic,
};

inline const char* to_string(Branch b)
{
    switch (b) {
    case Branch::no_feasible_fip: return "fip_no_feasible";
    case Branch::hfi: return "hfi";
    case Branch::low_confidence_fip: return "fip_low_confidence";
    case Branch::eic: return "eic";
    }
    return "?";
}

inline Branch branch_from_string(const std::string& s)
{
    for (Branch b : {Branch::no_feasible_fip, Branch::hfi, Branch::low_confidence_fip, Branch::eic})
        if (s == to_string(b))
            return b;
    throw Error(ErrorKind::invalid_argument, "unknown branch '" + s + "'");
}

/// Scores for a subset of the candidate pool; every array is aligned with `candidate`.
struct AcquisitionScores {
    std::vector<std::size_t> candidate;
    std::vector<double> cost;
    std::vector<double> improvement;
    std::vector<double> fp;
    std::vector<double> log_fp; ///< log FP, finite even where FP underflows to 0
    std::vector<double> fip;
    std::vector<double> hfi;
    std::vector<double> eic;
    double pi = 0.0;

    std::size_t size() const noexcept { return candidate.size(); }

    void push(std::size_t id, double s, double imp, double prob, double pi_value)
    {
        push(id, s, imp, prob, std::log(prob), pi_value);
    }

    void push(std::size_t id, double s, double imp, double prob, double log_prob, double pi_value)
    {
        candidate.push_back(id);
        cost.push_back(s);
        improvement.push_back(imp);
        fp.push_back(prob);
        log_fp.push_back(log_prob);
        fip.push_back(alpha_fip(prob, imp));
        hfi.push_back(alpha_hfi(prob, imp, pi_value));
        eic.push_back(alpha_eic(prob, imp));
    }
};

/// Builds scores from per-candidate FP and improvement values.
inline AcquisitionScores make_scores(std::span<const double> fp, std::span<const double> improvement, double pi,
    std::span<const double> costs = {})
{
    if (fp.size() != improvement.size())
        throw Error(ErrorKind::dimension_mismatch, "FP and improvement arrays differ in length");
    AcquisitionScores s;
    s.pi = pi;
    for (std::size_t i = 0; i < fp.size(); ++i)
        s.push(i, costs.empty() ? 0.0 : costs[i], improvement[i], fp[i], pi);
    return s;
}

struct Selection {
    std::size_t position = 0;  ///< index into the scores arrays
    std::size_t candidate = 0; ///< candidate id
    Branch branch = Branch::no_feasible_fip;
    double alpha = 0.0;
};

namespace detail {
    /// First maximum; strictly greater replaces, so ties keep the lowest position.
    template <typename Key>
    std::size_t argmax(std::size_t n, Key&& key)
    {
        std::size_t best = 0;
        double best_key = key(0);
        for (std::size_t i = 1; i < n; ++i) {
            const double k = key(i);
            if (k > best_key) {
                best = i;
                best_key = k;
            }
        }
        return best;
    }

    // Candidates are ranked by the logarithm of their (positive) acquisition
    // value, which preserves the argmax while keeping feasibility
    // probabilities below the double range ordered. Non-positive values rank
    // last.
    constexpr double never = -std::numeric_limits<double>::infinity();

    inline double fip_key(const AcquisitionScores& s, std::size_t i) { return s.improvement[i] > 0 ? s.log_fp[i] : never; }

    inline double eic_key(const AcquisitionScores& s, std::size_t i)
    {
        return s.improvement[i] > 0 ? s.log_fp[i] + std::log(s.improvement[i]) : never;
    }

    inline double hfi_key(const AcquisitionScores& s, std::size_t i, double pi)
    {
        if (pi == 0)
            return eic_key(s, i);
        const double margin = s.fp[i] - pi;
        return margin > 0 && s.improvement[i] > 0 ? std::log(margin) + std::log(s.improvement[i]) : never;
    }

    /// FIP > pi; at pi = 0 every improving candidate qualifies since FP > 0
    /// holds exactly even where it underflows.
    inline bool exceeds_threshold(const AcquisitionScores& s, std::size_t i, double pi)
    {
        return pi > 0 ? s.fip[i] > pi : s.improvement[i] > 0 && s.log_fp[i] > never;
    }
} // namespace detail

/// The switching rule: FIP until something feasible is known, then HFI when
/// some candidate's FIP exceeds `pi`, else FIP again.
inline Selection select_candidate(const AcquisitionScores& scores, bool any_feasible, double pi)
{
    if (scores.size() == 0)
        throw Error(ErrorKind::empty_candidates, "no candidates to select from");
    const std::size_t n = scores.size();
    Selection sel;
    if (!any_feasible)
        sel.branch = Branch::no_feasible_fip;
    else {
        bool any = false;
        for (std::size_t i = 0; i < n && !any; ++i)
            any = detail::exceeds_threshold(scores, i, pi);
        sel.branch = any ? Branch::hfi : Branch::low_confidence_fip;
    }

    if (sel.branch == Branch::hfi) {
        sel.position = detail::argmax(n, [&](std::size_t i) { return detail::hfi_key(scores, i, pi); });
        sel.alpha = alpha_hfi(scores.fp[sel.position], scores.improvement[sel.position], pi);
    }
    else {
        sel.position = detail::argmax(n, [&](std::size_t i) { return detail::fip_key(scores, i); });
        sel.alpha = scores.fip[sel.position];
    }
    sel.candidate = scores.candidate[sel.position];
    return sel;
}

inline Selection select_candidate(const AcquisitionScores& scores, const std::vector<bool>& dataset_feasibility, double pi)
{
    return select_candidate(scores, std::find(dataset_feasibility.begin(), dataset_feasibility.end(), true) != dataset_feasibility.end(), pi);
}

/// Constrained-improvement baseline: argmax FP * I, or argmax FP while no
/// feasible point is known.
inline Selection select_eic(const AcquisitionScores& scores, bool any_feasible = true)
{
    if (scores.size() == 0)
        throw Error(ErrorKind::empty_candidates, "no candidates to select from");
    Selection sel;
    sel.branch = Branch::eic;
    if (any_feasible)
        sel.position = detail::argmax(scores.size(), [&](std::size_t i) { return detail::eic_key(scores, i); });
    else
        sel.position = detail::argmax(scores.size(), [&](std::size_t i) { return detail::fip_key(scores, i); });
    sel.alpha = scores.eic[sel.position];
    sel.candidate = scores.candidate[sel.position];
    return sel;
}

inline Selection select(const AcquisitionScores& scores, AcquisitionKind kind, bool any_feasible, double pi)
{
    return kind == AcquisitionKind::eic ? select_eic(scores, any_feasible) : select_candidate(scores, any_feasible, pi);
}

/// Candidates worth scoring: the active ones that improve on the incumbent,
/// or every active one when none improves (all acquisition values are then zero).
inline std::vector<std::size_t> scoring_subset(const CandidateSet& candidates, const Incumbent& incumbent)
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (candidates.is_active(i) && improvement(candidates.cost(i), incumbent) > 0)
            out.push_back(i);
    if (out.empty())
        out = candidates.active_indices();
    return out;
}

/// Computes I, FP and all acquisition values for `subset` under `models`.
inline AcquisitionScores score_candidates(const std::vector<GpModel>& models, std::span<const ConstraintSpec> specs,
    const CandidateSet& candidates, std::span<const std::size_t> subset, const Incumbent& incumbent, double pi)
{
    if (models.size() != specs.size())
        throw Error(ErrorKind::dimension_mismatch, "one model per constraint required");
    const auto m = subset.size();
    std::vector<Eigen::Index> cols(m);
    for (std::size_t i = 0; i < m; ++i)
        cols[i] = static_cast<Eigen::Index>(subset[i]);
    std::vector<double> fp(m, 1.0), log_fp(m, 0.0);
    Vector mean, var;
    for (std::size_t k = 0; k < models.size(); ++k) {
        models[k].predict_subset(candidates.points(), cols, mean, var);
        for (std::size_t i = 0; i < m; ++i) {
            const auto e = static_cast<Eigen::Index>(i);
            const double sd = std::sqrt(var(e));
            fp[i] *= specs[k].probability(mean(e), sd);
            log_fp[i] += specs[k].log_probability(mean(e), sd);
        }
    }
    AcquisitionScores scores;
    scores.pi = pi;
    scores.candidate.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double s = candidates.cost(subset[i]);
        scores.push(subset[i], s, improvement(s, incumbent), std::clamp(fp[i], 0.0, 1.0), std::min(log_fp[i], 0.0), pi);
    }
    return scores;
}

/// `candidate_id,S,I,FP,alpha_fip,alpha_hfi,alpha_eic,branch`
inline void write_scores_csv(std::ostream& out, const AcquisitionScores& scores, Branch branch)
{
    out << "candidate_id,S,I,FP,alpha_fip,alpha_hfi,alpha_eic,branch\n";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out << scores.candidate[i] << ',' << csv::format_double(scores.cost[i]) << ',' << csv::format_double(scores.improvement[i]) << ','
            << csv::format_double(scores.fp[i]) << ',' << csv::format_double(scores.fip[i]) << ',' << csv::format_double(scores.hfi[i])
            << ',' << csv::format_double(scores.eic[i]) << ',' << to_string(branch) << '\n';
    }
}

} // namespace cbbo

#endif
