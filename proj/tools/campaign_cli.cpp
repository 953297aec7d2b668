#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <cbbo/batch.hpp>
#include <cbbo/campaign/session.hpp>
#include <cbbo/campaign/simulate.hpp>
#include <cbbo/campaign/store.hpp>
#include <cbbo/campaign/synthetic.hpp>

namespace {

using namespace cbbo;
using namespace cbbo::campaign;
namespace fs = std::filesystem;

std::vector<double> parse_list(const std::string& text)
{
    std::vector<double> out;
    for (const auto& tok : csv::split(text, ','))
        out.push_back(csv::parse_double(tok));
    return out;
}

Vector parse_vector(const std::string& text)
{
    const auto v = parse_list(text);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Rows separated by ';', values by ','.
std::vector<std::vector<double>> parse_rows(const std::string& text)
{
    std::vector<std::vector<double>> rows;
    for (const auto& row : csv::split(text, ';'))
        if (!row.empty())
            rows.push_back(parse_list(row));
    return rows;
}

/// CSV with a header line; one row per pending candidate.
std::vector<std::vector<double>> read_rows_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!line.empty())
            rows.push_back(parse_list(line));
    }
    return rows;
}

SyntheticProcessOracle oracle_named(const std::string& name)
{
    if (name == "aps")
        return aps_like_oracle();
    if (name == "fdm")
        return fdm_like_oracle();
    throw Error(ErrorKind::invalid_argument, "unknown synthetic process '" + name + "' (aps or fdm)");
}

void print_pending(const Session& s)
{
    const auto& cfg = s.config();
    const auto& p = *s.pending();
    std::cout << "candidate";
    for (const auto& n : cfg.input_names)
        std::cout << ',' << n;
    if (cfg.status_enabled)
        std::cout << ',' << cfg.status_name << "_predicted";
    std::cout << ",S,I,FP,alpha_fip,alpha,branch\n";
    for (std::size_t i = 0; i < p.batch.size(); ++i) {
        std::cout << i;
        for (Eigen::Index j = 0; j < p.batch.points[i].size(); ++j)
            std::cout << ',' << csv::format_double(p.batch.points[i](j));
        std::cout << ',' << csv::format_double(p.batch.costs[i]) << ',' << csv::format_double(p.batch.improvements[i]) << ','
                  << csv::format_double(p.batch.fps[i]) << ',' << csv::format_double(p.batch.selection_fips[i]) << ','
                  << csv::format_double(p.batch.alphas[i]) << ',' << to_string(p.batch.selection_branches[i]) << '\n';
    }
    if (p.batch.exhausted)
        std::cout << "# candidate pool exhausted before the requested batch size\n";
    if (p.termination_recommended)
        std::cout << "# termination recommended: at least half of the batch has FIP below epsilon\n";
}

void print_status(const nlohmann::json& st)
{
    std::cout << "campaign " << st["name"].get<std::string>() << '\n';
    if (st.contains("note"))
        std::cout << "  note: " << st["note"].get<std::string>() << '\n';
    std::cout << "  evaluations: " << st["evaluations"] << " (" << st["initialization_evaluations"] << " initial), feasible "
              << st["feasible"] << " (" << st["feasible_fraction"].get<double>() * 100 << "%)\n";
    if (st["has_feasible"].get<bool>())
        std::cout << "  incumbent cost: " << st["incumbent_cost"] << " at " << st["incumbent_input"].dump() << '\n';
    else
        std::cout << "  incumbent: none (fallback cost " << st["incumbent_cost"] << ")\n";
    std::cout << "  batches: " << st["batches_suggested"] << " suggested, " << st["batches_recorded"] << " recorded, pending " << st["pending"]
              << '\n';
    std::cout << "  pi " << st["pi"] << ", n " << st["n"] << ", epsilon " << st["epsilon"] << '\n';
    if (!st["offset"].is_null())
        std::cout << "  offset delta: " << st["offset"]["delta"] << '\n';
    if (!st["last_batch_fips"].empty())
        std::cout << "  last batch FIPs: " << st["last_batch_fips"].dump() << '\n';
    std::cout << "  termination recommended: " << (st["termination_recommended"].get<bool>() ? "yes" : "no") << '\n';
}

/// JSONL trace of every suggested batch, with measurements where recorded.
void write_trace(std::ostream& out, const Session& s)
{
    const auto& hist = s.history();
    std::size_t batch_index = 0;
    for (std::size_t i = 0; i < hist.size(); ++i) {
        if (hist[i]["type"] != "suggest")
            continue;
        const auto batch = batch_from_json(hist[i]["batch"]);
        std::vector<std::vector<double>> measured;
        bool has_measured = false;
        if (i + 1 < hist.size() && hist[i + 1]["type"] == "record") {
            measured = hist[i + 1]["measurements"].get<std::vector<std::vector<double>>>();
            has_measured = true;
        }
        for (auto& r : trace_records(batch_index, batch, has_measured ? &measured : nullptr)) {
            r["pi"] = hist[i]["pi"];
            out << r.dump() << '\n';
        }
        ++batch_index;
    }
}

template <typename Fn>
int mutate(const std::string& path, Fn&& fn)
{
    SessionLock lock(path);
    Session s = load_session(path);
    fn(s);
    save_session(path, s);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Human-in-the-loop constrained optimization campaigns"};
    app.require_subcommand(1);
    std::string session;

    auto* init = app.add_subcommand("init", "Create a session from a config file");
    std::string config_path, init_csv, synthetic;
    std::size_t synthetic_init = 12;
    std::uint64_t synthetic_seed = 1;
    bool force = false;
    init->add_option("--session", session, "session file")->required();
    init->add_option("--config", config_path, "campaign config (JSON)");
    init->add_option("--init-csv", init_csv, "initialization experiments (x1..xn[,status],c1..cK)");
    init->add_option("--synthetic", synthetic, "built-in synthetic study instead of a config: aps or fdm");
    init->add_option("--synthetic-init", synthetic_init, "initial experiments for --synthetic")->capture_default_str();
    init->add_option("--synthetic-seed", synthetic_seed, "seed for --synthetic")->capture_default_str();
    init->add_flag("--force", force, "overwrite an existing session");

    auto* calibrate = app.add_subcommand("calibrate", "Record a baseline experiment and compute the session offset");
    std::string baseline, constraints;
    double measured = 0;
    bool allow_outside = false;
    calibrate->add_option("--session", session)->required();
    calibrate->add_option("--baseline", baseline, "controllable inputs of the baseline, comma-separated")->required();
    calibrate->add_option("--measured", measured, "measured status value")->required();
    calibrate->add_option("--constraints", constraints, "measured constraint values of the baseline, comma-separated");
    calibrate->add_flag("--allow-outside-init", allow_outside, "accept a baseline that is not an initialization experiment");

    auto* suggest = app.add_subcommand("suggest", "Propose the next batch");
    std::optional<std::size_t> n;
    std::optional<double> pi;
    suggest->add_option("--session", session)->required();
    suggest->add_option("--n", n, "batch size");
    suggest->add_option("--pi", pi, "confidence threshold (persists for later suggestions)");

    auto* record = app.add_subcommand("record", "Record measurements for the pending batch");
    std::string values, rows_csv;
    record->add_option("--session", session)->required();
    record->add_option("--values", values, "rows separated by ';', values by ','");
    record->add_option("--csv", rows_csv, "CSV with a header and one row per candidate");

    auto* abandon = app.add_subcommand("abandon", "Discard the pending batch");
    std::string reason;
    abandon->add_option("--session", session)->required();
    abandon->add_option("--reason", reason);

    auto* status = app.add_subcommand("status", "Summarize a session");
    bool as_json = false;
    status->add_option("--session", session)->required();
    status->add_flag("--json", as_json);

    auto* trace = app.add_subcommand("trace", "Print suggested batches as JSON lines");
    trace->add_option("--session", session)->required();

    auto* scores_cmd = app.add_subcommand("scores", "Write acquisition scores of the remaining candidates as CSV");
    std::string scores_path;
    std::optional<double> scores_pi;
    scores_cmd->add_option("--session", session)->required();
    scores_cmd->add_option("--out", scores_path, "output file (stdout when omitted)");
    scores_cmd->add_option("--pi", scores_pi, "confidence threshold (session value when omitted)");

    auto* export_cmd = app.add_subcommand("export", "Write the dataset as CSV");
    std::string export_path;
    export_cmd->add_option("--session", session)->required();
    export_cmd->add_option("--out", export_path, "CSV path (stdout when absent)");

    auto* simulate_cmd = app.add_subcommand("simulate", "Drive a session with a built-in synthetic process");
    std::string process = "aps", drifts = "2,-0.8";
    std::size_t batches = 50;
    simulate_cmd->add_option("--session", session)->required();
    simulate_cmd->add_option("--process", process, "aps or fdm")->capture_default_str();
    simulate_cmd->add_option("--batches", batches)->capture_default_str();
    simulate_cmd->add_option("--drifts", drifts, "status drift per session, cycled")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*init) {
            if (fs::exists(session) && !force)
                throw Error(ErrorKind::session_state, "session file " + session + " exists; use --force to overwrite");
            CampaignConfig cfg;
            if (!synthetic.empty()) {
                const auto oracle = oracle_named(synthetic);
                cfg = synthetic == "aps" ? aps_like_config(oracle, synthetic_init, synthetic_seed) : fdm_like_config(oracle, synthetic_init, synthetic_seed);
            }
            else {
                if (config_path.empty())
                    throw Error(ErrorKind::invalid_argument, "either --config or --synthetic is required");
                std::ifstream in(config_path);
                if (!in)
                    throw Error(ErrorKind::io, "cannot open " + config_path);
                nlohmann::json j;
                try {
                    in >> j;
                }
                catch (const nlohmann::json::exception& e) {
                    throw Error(ErrorKind::invalid_argument, "malformed config " + config_path + ": " + e.what());
                }
                if (!init_csv.empty() && !j.contains("init"))
                    j["init"] = nlohmann::json::array();
                cfg = config_from_json(j);
            }
            if (!init_csv.empty()) {
                const auto rows = init_rows_from_dataset(cfg, read_csv_file(init_csv, true));
                cfg.init.insert(cfg.init.end(), rows.begin(), rows.end());
                cfg.validate();
            }
            SessionLock lock(session);
            const Session s = Session::create(cfg);
            save_session(session, s);
            std::cout << "created " << session << " with " << s.dataset().size() << " initial experiments\n";
            return 0;
        }
        if (*calibrate)
            return mutate(session, [&](Session& s) {
                std::optional<std::vector<double>> c;
                if (!constraints.empty())
                    c = parse_list(constraints);
                const auto& off = s.calibrate(parse_vector(baseline), measured, c, allow_outside);
                std::cout << "predicted " << off.predicted << ", measured " << off.baseline_measured << ", offset " << off.delta << '\n';
            });
        if (*suggest)
            return mutate(session, [&](Session& s) {
                s.suggest(n, pi);
                print_pending(s);
            });
        if (*record)
            return mutate(session, [&](Session& s) {
                if (values.empty() == rows_csv.empty())
                    throw Error(ErrorKind::invalid_argument, "give exactly one of --values or --csv");
                const auto rows = values.empty() ? read_rows_csv(rows_csv) : parse_rows(values);
                const auto out = s.record(rows);
                std::cout << "recorded " << out.recorded << " experiments; ";
                if (out.has_feasible)
                    std::cout << "incumbent cost " << out.incumbent_cost;
                else
                    std::cout << "no feasible experiment yet";
                std::cout << "; termination " << (out.termination_recommended ? "recommended" : "not recommended") << '\n';
            });
        if (*abandon)
            return mutate(session, [&](Session& s) {
                s.abandon(reason);
                std::cout << "pending batch abandoned\n";
            });
        if (*status) {
            const auto st = load_session(session).status();
            if (as_json)
                std::cout << st.dump(2) << '\n';
            else
                print_status(st);
            return 0;
        }
        if (*trace) {
            write_trace(std::cout, load_session(session));
            return 0;
        }
        if (*scores_cmd) {
            const auto [sc, sel] = load_session(session).scores(scores_pi);
            if (scores_path.empty())
                write_scores_csv(std::cout, sc, sel.branch);
            else {
                std::ofstream out(scores_path);
                if (!out)
                    throw Error(ErrorKind::io, "cannot write " + scores_path);
                write_scores_csv(out, sc, sel.branch);
            }
            return 0;
        }
        if (*export_cmd) {
            const auto s = load_session(session);
            if (export_path.empty())
                write_csv(std::cout, s.dataset());
            else
                write_csv_file(export_path, s.dataset());
            return 0;
        }
        if (*simulate_cmd)
            return mutate(session, [&](Session& s) {
                SimulationOptions opt;
                opt.max_batches = batches;
                opt.drifts = s.config().status_enabled ? parse_list(drifts) : std::vector<double>{0.0};
                const auto res = simulate(s, oracle_named(process), opt);
                std::cout << "batches " << res.batches << (res.terminated ? " (terminated)" : "") << ", evaluations " << res.evaluations
                          << ", feasible " << res.feasible_evaluations << '\n';
                if (!res.incumbent_costs.empty())
                    std::cout << "incumbent cost " << res.incumbent_costs.back() << (res.has_feasible.back() ? "" : " (fallback)") << '\n';
            });
    }
    catch (const std::exception& e) {
        std::cerr << "campaign: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
