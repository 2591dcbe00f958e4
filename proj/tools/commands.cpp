#include "commands.hpp"

#include "primegap/primes.hpp"
#include "primegap/statistics.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace primegap::cli {

namespace {

class usage_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files and small conversions
// ---------------------------------------------------------------------------

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot read '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw io_error("cannot write '" + path + "'");
    }
    out << text;
    if (!out) {
        throw io_error("write failed for '" + path + "'");
    }
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw config_error("'" + path + "' is not valid JSON: " + e.what());
    }
}

std::string rational_str(const Rational& q) {
    return boost::multiprecision::numerator(q).str() + "/" + boost::multiprecision::denominator(q).str();
}

double to_double(const Rational& q) { return static_cast<double>(q); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    while (!s.empty() && s.back() == ' ') {
        s.pop_back();
    }
    return s;
}

std::uint64_t require_unsigned(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number_unsigned()) {
        throw config_error(where + ": \"" + key + "\" must be a non-negative integer");
    }
    return j[key].get<std::uint64_t>();
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&key](const char* a) { return key == a; })) {
            throw config_error(where + ": unknown key \"" + key + "\"");
        }
    }
}

// ---------------------------------------------------------------------------
// Options
// ---------------------------------------------------------------------------

struct Opts {
    std::string format = "json";
    std::string output;

    // gaps
    std::uint64_t limit = 0;
    bool records = false;
    bool merits = false;

    // jacobsthal
    std::string n;
    std::optional<std::uint64_t> primorial_x;
    std::uint64_t trial_limit = 1'000'000;
    std::uint64_t max_period = 10'000'000'000ULL;

    // ycover
    std::uint64_t x = 0;
    std::string mode = "exact";
    std::string order = "increasing";
    std::uint64_t node_budget = 1'000'000'000ULL;
    unsigned threads = 0;
    std::string emit;

    // assemble / check
    std::string assignment_path;
    std::optional<std::uint64_t> y;
    std::string cert_out;
    std::string cert_path;

    // construct
    std::uint64_t r = 2;
    std::optional<std::uint64_t> z;
    double epsilon = 0.1;
    std::optional<std::uint64_t> seed;
    double band = 0.5;
    std::string report_path;

    // stats
    std::uint64_t cutoff = 0;
    std::string kind;
    std::uint64_t p = 0;
    std::int64_t m = 0;
    std::int64_t form_x = 0;
    std::uint64_t shift = 0;
    std::string side = "p";
    std::string relation = "forward";
    bool per_vertex = false;
    std::string target = "survivor_count";
    std::uint64_t trials = 1000;
    std::uint64_t mc_x = 100'000;
    std::uint64_t mc_y = 1'000'000;
    std::uint64_t mc_z = 1'000;
    std::string s2;
    std::uint64_t deg_y = 0;

    // batch
    std::string config;
    unsigned workers = 0;
};

void add_output_options(CLI::App* sub, Opts& o, bool with_format = true) {
    if (with_format) {
        sub->add_option("--format", o.format, "Output format")
            ->check(CLI::IsMember({"json", "csv", "table"}))
            ->capture_default_str();
    }
    sub->add_option("--output", o.output, "Write the output here instead of stdout");
}

void build_app(CLI::App& app, Opts& o) {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    auto* gaps = app.add_subcommand("gaps", "Record prime gaps between consecutive primes up to a limit");
    gaps->add_option("--limit", o.limit, "Upper bound X (both primes <= X)")->required();
    gaps->add_flag("--records", o.records, "List every record gap, not only the largest");
    gaps->add_flag("--merits", o.merits, "Add gap/log(start) and gap/log^2(start)");
    add_output_options(gaps, o);

    auto* jac = app.add_subcommand("jacobsthal", "Jacobsthal function j(n)");
    auto* n_opt = jac->add_option("--n", o.n, "n as a decimal integer");
    auto* prim_opt = jac->add_option("--primorial", o.primorial_x, "Use n = product of primes <= x");
    n_opt->excludes(prim_opt);
    jac->add_option("--trial-limit", o.trial_limit, "Trial division bound for factoring n")->capture_default_str();
    jac->add_option("--max-period", o.max_period, "Largest radical scanned")->capture_default_str();
    add_output_options(jac, o);

    auto* yc = app.add_subcommand("ycover", "Longest [1, y] covered by one class per prime <= x");
    yc->add_option("--x", o.x, "Prime cutoff")->required();
    yc->add_option("--mode", o.mode, "exact or greedy")->check(CLI::IsMember({"exact", "greedy"}))->capture_default_str();
    yc->add_option("--order", o.order, "Greedy prime order")
        ->check(CLI::IsMember({"increasing", "decreasing"}))
        ->capture_default_str();
    yc->add_option("--node-budget", o.node_budget, "Exact search node budget")->capture_default_str();
    yc->add_option("--threads", o.threads, "Exact search threads (0 = all cores)")->capture_default_str();
    yc->add_option("--emit", o.emit, "Write the witness assignment JSON here");
    add_output_options(yc, o);

    auto* as = app.add_subcommand("assemble", "CRT-assemble a composite-run certificate from a covering");
    as->add_option("--assignment", o.assignment_path, "Assignment JSON file")->required();
    as->add_option("--y", o.y, "Run length (default: the covered prefix)");
    as->add_option("--out", o.cert_out, "Write the certificate JSON here");
    add_output_options(as, o);

    auto* ck = app.add_subcommand("check", "Verify a composite-run certificate");
    ck->add_option("--cert", o.cert_path, "Certificate JSON file")->required();
    add_output_options(ck, o);

    auto* co = app.add_subcommand("construct", "Run the four-stage sieve construction");
    co->add_option("--r", o.r, "Progression length")->capture_default_str();
    co->add_option("--x", o.x, "Prime cutoff")->required();
    co->add_option("--y", o.y, "Interval length (default: formula in x)");
    co->add_option("--z", o.z, "Smoothness cutoff (default: formula in x)");
    co->add_option("--epsilon", o.epsilon, "Tolerance in (0, 1)")->capture_default_str();
    co->add_option("--seed", o.seed, "Random seed (default 0)");
    co->add_option("--band", o.band, "Relative band for degree diagnostics")->capture_default_str();
    co->add_option("--report", o.report_path, "Write the report JSON here");
    co->add_option("--emit", o.emit, "Write the final assignment JSON here");
    add_output_options(co, o);

    auto* stats = app.add_subcommand("stats", "Arithmetic constants and statistical checks");
    stats->require_subcommand(1);

    auto* alpha = stats->add_subcommand("alpha", "Singular series partial product");
    alpha->add_option("--r", o.r, "Tuple size")->required();
    alpha->add_option("--cutoff", o.cutoff, "Prime cutoff")->required();
    add_output_options(alpha, o);

    auto* beta = stats->add_subcommand("beta", "Local factor of a form system at a prime");
    beta->add_option("--kind", o.kind, "System kind")
        ->required()
        ->check(CLI::IsMember({"progression_pair_d3", "progression_d2", "shifted_d3", "shifted_d2"}));
    beta->add_option("--r", o.r, "Progression length")->required();
    beta->add_option("--p", o.p, "Prime")->required();
    beta->add_option("--m", o.m, "Block index m in the constant term mx")->capture_default_str();
    beta->add_option("--x", o.form_x, "x in the constant term mx")->capture_default_str();
    beta->add_option("--i", o.shift, "Shift for the shifted kinds")->capture_default_str();
    add_output_options(beta, o);

    auto* deg = stats->add_subcommand("degrees", "Degree counts of the progression relation");
    deg->add_option("--r", o.r, "Progression length")->required();
    deg->add_option("--x", o.x, "Prime cutoff")->required();
    deg->add_option("--y", o.deg_y, "Interval length")->required();
    deg->add_option("--side", o.side, "p or q")->check(CLI::IsMember({"p", "q"}))->capture_default_str();
    deg->add_option("--i", o.shift, "Shift")->capture_default_str();
    deg->add_option("--relation", o.relation, "forward or primed")
        ->check(CLI::IsMember({"forward", "primed"}))
        ->capture_default_str();
    deg->add_flag("--per-vertex", o.per_vertex, "Include every vertex count");
    add_output_options(deg, o);

    auto* mc = stats->add_subcommand("montecarlo", "Monte Carlo over random stage-2 residues");
    mc->add_option("--target", o.target, "survivor_count, pair_survival or ap_survival")
        ->check(CLI::IsMember({"survivor_count", "pair_survival", "ap_survival"}))
        ->capture_default_str();
    mc->add_option("--trials", o.trials, "Number of trials")->capture_default_str();
    mc->add_option("--seed", o.seed, "Random seed (default 0)");
    mc->add_option("--r", o.r, "Progression length")->capture_default_str();
    mc->add_option("--x", o.mc_x, "Prime cutoff")->capture_default_str();
    mc->add_option("--y", o.mc_y, "Interval length")->capture_default_str();
    mc->add_option("--z", o.mc_z, "Smoothness cutoff")->capture_default_str();
    mc->add_option("--s2", o.s2, "Comma-separated primes replacing (log x, z]");
    add_output_options(mc, o);

    auto* sm = stats->add_subcommand("smooth", "Count z-smooth integers in [1, y]");
    sm->add_option("--y", o.y, "Upper bound")->required();
    sm->add_option("--z", o.z, "Smoothness bound")->required();
    add_output_options(sm, o);

    auto* batch = app.add_subcommand("batch", "Run a list of commands from a config file");
    batch->add_option("--config", o.config, "Batch config JSON file")->required();
    batch->add_option("--workers", o.workers, "Worker threads (0 = all cores)")->capture_default_str();
    add_output_options(batch, o, false);
}

// Leaf subcommand path, e.g. "stats alpha".
std::pair<std::string, CLI::App*> selected(CLI::App& app) {
    CLI::App* cur = &app;
    std::string path;
    for (;;) {
        const auto subs = cur->get_subcommands();
        if (subs.empty()) {
            return {path, cur};
        }
        cur = subs.front();
        path += (path.empty() ? "" : " ") + cur->get_name();
    }
}

void emit(const json& doc, const Opts& o, std::ostream& out) {
    const std::string text = render(doc, o.format);
    if (!o.output.empty()) {
        write_file(o.output, text);
    } else {
        out << text;
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_gaps(const Opts& o, std::ostream& out) {
    if (o.limit < 3) {
        throw invalid_parameter("--limit must be >= 3");
    }
    json doc = json::array();
    if (o.merits) {
        auto rows = merit_report(o.limit);
        if (!o.records) {
            rows.erase(rows.begin(), rows.end() - 1);
        }
        for (const auto& row : rows) {
            doc.push_back({{"start", row.start}, {"gap", row.gap}, {"merit", row.merit}, {"merit2", row.merit2}});
        }
    } else {
        auto recs = gap_records(o.limit);
        if (!o.records) {
            recs.erase(recs.begin(), recs.end() - 1);
        }
        for (const auto& rec : recs) {
            doc.push_back({{"start", rec.start}, {"gap", rec.gap}});
        }
    }
    emit(doc, o, out);
    return kExitOk;
}

int cmd_jacobsthal(const Opts& o, std::ostream& out) {
    BigInt n;
    if (o.primorial_x) {
        n = primorial(*o.primorial_x);
    } else if (!o.n.empty()) {
        n = parse_decimal(o.n);
    } else {
        throw usage_error("one of --n or --primorial is required");
    }
    JacobsthalOptions opts;
    opts.trial_division_limit = o.trial_limit;
    opts.max_period = o.max_period;
    const std::uint64_t j = jacobsthal(n, opts);
    json doc{{"n", to_decimal(n)}, {"j", j}, {"prime_factors", distinct_prime_factors(n, o.trial_limit)}};
    emit(doc, o, out);
    return kExitOk;
}

int cmd_ycover(const Opts& o, std::ostream& out) {
    CoverResult res;
    if (o.mode == "exact") {
        ExactSearchOptions opts;
        opts.node_budget = o.node_budget;
        opts.threads = o.threads;
        res = exact_Y(o.x, opts);
    } else {
        res = greedy_Y(o.x, o.order == "decreasing" ? GreedyOrder::decreasing : GreedyOrder::increasing);
    }
    json doc{{"x", o.x},
             {"mode", o.mode},
             {"y", res.y},
             {"optimal", res.optimal},
             {"nodes", res.nodes},
             {"verified", verify_cover(res.y, res.witness)},
             {"witness", assignment_to_json(res.witness)}};
    if (o.mode == "greedy") {
        doc["order"] = o.order;
    }
    if (!o.emit.empty()) {
        write_file(o.emit, assignment_to_json(res.witness).dump(2) + "\n");
    }
    emit(doc, o, out);
    return kExitOk;
}

std::uint64_t covered_prefix_of(const ResidueAssignment& a) {
    // A total covering has a finite prefix, so doubling terminates.
    for (std::uint64_t y = 64;; y *= 2) {
        const auto s = apply_classes(y, a);
        if (!s.survivors.empty()) {
            return s.covered_prefix();
        }
    }
}

int cmd_assemble(const Opts& o, std::ostream& out) {
    const auto a = assignment_from_json(parse_json_file(o.assignment_path));
    if (!a.is_total()) {
        throw invalid_parameter("assignment must give a class to every prime <= x");
    }
    const std::uint64_t y = o.y ? *o.y : covered_prefix_of(a);
    const auto cert = crt_assemble(a, y);
    const json doc = certificate_to_json(cert);
    if (!o.cert_out.empty()) {
        write_file(o.cert_out, doc.dump(2) + "\n");
    }
    emit(doc, o, out);
    return kExitOk;
}

int cmd_check(const Opts& o, std::ostream& out) {
    const auto cert = certificate_from_json(parse_json_file(o.cert_path));
    const bool valid = check_certificate(cert);
    json doc{{"valid", valid}, {"m", to_decimal(cert.m)}, {"y", cert.y}};
    emit(doc, o, out);
    return valid ? kExitOk : kExitCheckFailed;
}

int cmd_construct(const Opts& o, std::ostream& out) {
    ConstructionParams p;
    p.r = o.r;
    p.x = o.x;
    p.y = o.y;
    p.z = o.z;
    p.epsilon = o.epsilon;
    p.seed = o.seed.value_or(0);
    p.band = o.band;
    const auto res = run_construction(p);
    const json report = report_to_json(res.report, o.seed.has_value());
    if (!o.report_path.empty()) {
        write_file(o.report_path, report.dump(2) + "\n");
    }
    if (!o.emit.empty()) {
        write_file(o.emit, assignment_to_json(res.assignment).dump(2) + "\n");
    }
    emit(report, o, out);
    return kExitOk;
}

int cmd_alpha(const Opts& o, std::ostream& out) {
    const auto s = singular_series(o.r, o.cutoff);
    const double v = static_cast<double>(s.value);
    json doc{{"r", s.r},
             {"cutoff", s.cutoff},
             {"value", s.value.str(30)},
             {"value_float", v},
             {"tail_bound", finite_or_null(s.tail_bound)},
             {"lower_bound", finite_or_null(v * std::exp(-s.tail_bound))},
             {"low_precision", s.low_precision}};
    emit(doc, o, out);
    return kExitOk;
}

int cmd_beta(const Opts& o, std::ostream& out) {
    const auto kind = parse_system_kind(o.kind);
    const auto sys = make_form_system(kind, o.r, o.m, o.form_x, o.shift);
    const Rational beta = local_factor(sys, o.p);
    const Rational closed = beta_closed_form(kind, o.r, o.p);
    json doc{{"kind", o.kind},
             {"r", o.r},
             {"p", o.p},
             {"m", o.m},
             {"x", o.form_x},
             {"i", o.shift},
             {"d", sys.d},
             {"t", sys.t()},
             {"finite_complexity", sys.finite_complexity()},
             {"beta", rational_str(beta)},
             {"beta_float", to_double(beta)},
             {"closed_form", rational_str(closed)},
             {"matches_closed_form", beta == closed}};
    emit(doc, o, out);
    return kExitOk;
}

int cmd_degrees(const Opts& o, std::ostream& out) {
    const auto g = build_relation(o.r, o.x, o.deg_y);
    const auto side = o.side == "p" ? Side::P : Side::Q;
    const auto rel = o.relation == "forward" ? RelationKind::forward : RelationKind::primed;
    const auto d = degree_stats(g, side, o.shift, rel);
    json doc{{"r", d.r},
             {"x", d.x},
             {"y", d.y},
             {"side", o.side},
             {"i", d.shift},
             {"relation", o.relation},
             {"vertex_count", d.counts.size()},
             {"total", d.total},
             {"alpha_r", d.alpha_r},
             {"predicted", d.predicted},
             {"ratio",
              {{"min", d.ratio.min},
               {"q25", d.ratio.q25},
               {"median", d.ratio.median},
               {"q75", d.ratio.q75},
               {"max", d.ratio.max}}}};
    if (o.per_vertex) {
        json rows = json::array();
        for (std::size_t k = 0; k < d.counts.size(); ++k) {
            rows.push_back({{"vertex", d.vertices[k]},
                            {"count", d.counts[k]},
                            {"ratio", d.predicted > 0 ? static_cast<double>(d.counts[k]) / d.predicted : 0.0}});
        }
        if (o.format != "json") {
            emit(rows, o, out);
            return kExitOk;
        }
        doc["counts"] = std::move(rows);
    }
    emit(doc, o, out);
    return kExitOk;
}

std::vector<std::uint64_t> parse_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        try {
            std::size_t used = 0;
            out.push_back(std::stoull(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw invalid_parameter("--s2: '" + item + "' is not a non-negative integer");
        }
    }
    return out;
}

int cmd_montecarlo(const Opts& o, std::ostream& out) {
    MonteCarloConfig cfg;
    cfg.r = o.r;
    cfg.x = o.mc_x;
    cfg.y = o.mc_y;
    cfg.z = o.mc_z;
    cfg.target = parse_montecarlo_target(o.target);
    cfg.trials = o.trials;
    cfg.seed = o.seed.value_or(0);
    if (!o.s2.empty()) {
        cfg.S2 = parse_list(o.s2);
    }
    const auto res = montecarlo_stage2(cfg);
    json doc{{"target", o.target},
             {"trials", res.trials},
             {"seed", res.seed},
             {"seed_source", o.seed ? "explicit" : "default"},
             {"r", cfg.r},
             {"x", cfg.x},
             {"y", cfg.y},
             {"z", cfg.z},
             {"s2_size", res.S2.size()},
             {"s2", res.S2},
             {"q_count", res.q_count},
             {"elements", res.elements},
             {"empirical", res.empirical},
             {"predicted", res.predicted},
             {"ratio", res.ratio},
             {"stddev", res.stddev},
             {"z_score", res.z_score},
             {"exact", res.exact ? json(rational_str(*res.exact)) : json(nullptr)},
             {"exact_float", res.exact ? json(to_double(*res.exact)) : json(nullptr)}};
    emit(doc, o, out);
    return kExitOk;
}

int cmd_smooth(const Opts& o, std::ostream& out) {
    const auto s = smooth_count(*o.y, *o.z);
    json doc{{"y", s.y}, {"z", s.z}, {"count", s.count}, {"u", s.u}, {"de_bruijn_prediction", s.de_bruijn}};
    emit(doc, o, out);
    return kExitOk;
}

int cmd_batch(const Opts& o, std::ostream& out) {
    const json cfg = parse_json_file(o.config);
    if (!cfg.is_object() || !cfg.contains("runs") || !cfg["runs"].is_array()) {
        throw config_error("batch config must be an object with a \"runs\" array");
    }
    reject_unknown_keys(cfg, {"runs"}, "batch config");
    std::vector<RunConfig> runs;
    for (std::size_t k = 0; k < cfg["runs"].size(); ++k) {
        try {
            runs.push_back(RunConfig::from_json(cfg["runs"][k]));
        } catch (const config_error& e) {
            throw config_error("run " + std::to_string(k) + ": " + e.what());
        }
    }
    const json agg = run_batch(runs, o.workers);
    const std::string text = agg.dump(2) + "\n";
    if (!o.output.empty()) {
        write_file(o.output, text);
    } else {
        out << text;
    }
    return kExitOk;
}

int run_selected(const std::string& path, const Opts& o, std::ostream& out) {
    if (path == "gaps") return cmd_gaps(o, out);
    if (path == "jacobsthal") return cmd_jacobsthal(o, out);
    if (path == "ycover") return cmd_ycover(o, out);
    if (path == "assemble") return cmd_assemble(o, out);
    if (path == "check") return cmd_check(o, out);
    if (path == "construct") return cmd_construct(o, out);
    if (path == "stats alpha") return cmd_alpha(o, out);
    if (path == "stats beta") return cmd_beta(o, out);
    if (path == "stats degrees") return cmd_degrees(o, out);
    if (path == "stats montecarlo") return cmd_montecarlo(o, out);
    if (path == "stats smooth") return cmd_smooth(o, out);
    if (path == "batch") return cmd_batch(o, out);
    throw usage_error("unknown command '" + path + "'");
}

// ---------------------------------------------------------------------------
// Rendering helpers
// ---------------------------------------------------------------------------

std::string cell(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_null()) {
        return "";
    }
    return v.dump();
}

void flatten(const json& v, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
    if (v.is_object()) {
        for (const auto& [key, child] : v.items()) {
            flatten(child, prefix.empty() ? key : prefix + "." + key, rows);
        }
    } else {
        rows.emplace_back(prefix, cell(v));
    }
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string q = "\"";
    for (char c : s) {
        q += c;
        if (c == '"') {
            q += '"';
        }
    }
    return q + "\"";
}

}  // namespace

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

std::string render(const json& doc, const std::string& format) {
    if (format == "json") {
        return doc.dump(2) + "\n";
    }
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    if (doc.is_array()) {
        for (const auto& item : doc) {
            if (!item.is_object()) {
                header = {"value"};
                break;
            }
            for (const auto& [key, value] : item.items()) {
                if (std::find(header.begin(), header.end(), key) == header.end()) {
                    header.push_back(key);
                }
            }
        }
        for (const auto& item : doc) {
            std::vector<std::string> row;
            if (item.is_object()) {
                for (const auto& key : header) {
                    row.push_back(item.contains(key) ? cell(item[key]) : "");
                }
            } else {
                row.push_back(cell(item));
            }
            rows.push_back(std::move(row));
        }
    } else {
        header = {"key", "value"};
        std::vector<std::pair<std::string, std::string>> flat;
        flatten(doc, "", flat);
        for (auto& [k, v] : flat) {
            rows.push_back({k, v});
        }
    }
    std::ostringstream out;
    if (format == "csv") {
        for (std::size_t c = 0; c < header.size(); ++c) {
            out << (c ? "," : "") << csv_escape(header[c]);
        }
        out << "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                out << (c ? "," : "") << csv_escape(row[c]);
            }
            out << "\n";
        }
        return out.str();
    }
    if (format != "table") {
        throw usage_error("unknown format '" + format + "'");
    }
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& row : rows) {
            if (c < row.size()) {
                width[c] = std::max(width[c], row[c].size());
            }
        }
    }
    auto line = [&](const std::vector<std::string>& row) {
        std::string s;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) {
                s += "  ";
            }
            s += row[c];
            if (c + 1 < row.size()) {
                s.append(width[c] - row[c].size(), ' ');
            }
        }
        out << s << "\n";
    };
    line(header);
    std::vector<std::string> rule;
    for (std::size_t w : width) {
        rule.emplace_back(w, '-');
    }
    line(rule);
    for (const auto& row : rows) {
        line(row);
    }
    return out.str();
}

json assignment_to_json(const ResidueAssignment& a) {
    json classes = json::array();
    for (const auto& [p, r] : a.classes()) {
        classes.push_back({{"p", p}, {"a", r}});
    }
    return json{{"x", a.x()}, {"classes", std::move(classes)}};
}

ResidueAssignment assignment_from_json(const json& j) {
    const std::string where = "assignment";
    if (!j.is_object()) {
        throw config_error(where + ": expected an object");
    }
    reject_unknown_keys(j, {"x", "classes"}, where);
    ResidueAssignment a(require_unsigned(j, "x", where));
    if (!j.contains("classes") || !j["classes"].is_array()) {
        throw config_error(where + ": \"classes\" must be an array");
    }
    for (const auto& c : j["classes"]) {
        if (!c.is_object()) {
            throw config_error(where + ": each class must be an object {\"p\", \"a\"}");
        }
        reject_unknown_keys(c, {"p", "a"}, where + " class");
        const std::uint64_t p = require_unsigned(c, "p", where + " class");
        if (a.contains(p)) {
            throw config_error(where + ": duplicate class for p = " + std::to_string(p));
        }
        a.set(p, require_unsigned(c, "a", where + " class"));
    }
    return a;
}

json certificate_to_json(const CompositeRunCertificate& c) {
    json w = json::array();
    for (const auto& [t, p] : c.witnesses) {
        w.push_back(json::array({t, p}));
    }
    return json{{"m", to_decimal(c.m)}, {"y", c.y}, {"witnesses", std::move(w)}};
}

CompositeRunCertificate certificate_from_json(const json& j) {
    const std::string where = "certificate";
    if (!j.is_object()) {
        throw config_error(where + ": expected an object");
    }
    reject_unknown_keys(j, {"m", "y", "witnesses"}, where);
    if (!j.contains("m") || !j["m"].is_string()) {
        throw config_error(where + ": \"m\" must be a decimal string");
    }
    CompositeRunCertificate c;
    c.m = parse_decimal(j["m"].get<std::string>());
    c.y = require_unsigned(j, "y", where);
    if (!j.contains("witnesses") || !j["witnesses"].is_array()) {
        throw config_error(where + ": \"witnesses\" must be an array");
    }
    for (const auto& w : j["witnesses"]) {
        if (!w.is_array() || w.size() != 2 || !w[0].is_number_unsigned() || !w[1].is_number_unsigned()) {
            throw config_error(where + ": each witness must be [t, p] with non-negative integers");
        }
        c.witnesses.emplace_back(w[0].get<std::uint64_t>(), w[1].get<std::uint64_t>());
    }
    return c;
}

json report_to_json(const StageReport& rep, bool seed_given) {
    const auto& pr = rep.params;
    json gamma_i = json::array();
    for (std::size_t k = 0; k < rep.gamma_i.size(); ++k) {
        gamma_i.push_back({{"i", k + 1}, {"value", rational_str(rep.gamma_i[k])}, {"float", to_double(rep.gamma_i[k])}});
    }
    json empty_classes = json::array();
    for (const auto& [name, size] : {std::pair{"S1", rep.s1}, {"S2", rep.s2}, {"S3", rep.s3}, {"S4", rep.s4}}) {
        if (size == 0) {
            empty_classes.push_back(name);
        }
    }
    const double q_ratio = rep.q_survivors_expected > 0
                               ? static_cast<double>(rep.q_survivors) / rep.q_survivors_expected
                               : 0.0;
    return json{
        {"command", "construct"},
        {"params",
         {{"r", pr.r},
          {"x", pr.x},
          {"y", pr.y},
          {"z", pr.z},
          {"epsilon", pr.epsilon},
          {"seed", pr.seed},
          {"seed_source", seed_given ? "explicit" : "default"},
          {"band", pr.band},
          {"y_defaulted", pr.y_defaulted},
          {"z_defaulted", pr.z_defaulted},
          {"z_formula", pr.z_formula},
          {"xy_window", pr.xy_window},
          {"r_at_least_13", pr.r >= 13}}},
        {"warnings", pr.warnings},
        {"partition",
         {{"S1", rep.s1}, {"S2", rep.s2}, {"S3", rep.s3}, {"S4", rep.s4}, {"empty_classes", empty_classes}}},
        {"stage1",
         {{"survivors", rep.survivors1},
          {"q_primes", rep.q_count},
          {"smooth_leftovers", rep.smooth_leftovers},
          {"other_leftovers", rep.other_leftovers},
          {"split_exhaustive", rep.split_exhaustive},
          {"p_count_predicted", rep.p_count_predicted},
          {"q_count_predicted", rep.q_count_predicted}}},
        {"stage2",
         {{"survivors", rep.survivors2},
          {"q_survivors", rep.q_survivors},
          {"gamma", rational_str(rep.gamma)},
          {"gamma_float", to_double(rep.gamma)},
          {"q_survivors_expected", rep.q_survivors_expected},
          {"q_survivors_ratio", q_ratio},
          {"gamma_i", gamma_i},
          {"gamma_max_rel_dev", rep.gamma_max_rel_dev}}},
        {"relation",
         {{"p_count", rep.p_count},
          {"q_count", rep.q_count},
          {"edges_primed", rep.edges},
          {"edges_forward_only", rep.edges_extra},
          {"edges_refined", rep.refined_edges},
          {"disj_violations", rep.disj_violations},
          {"double_count_ok", rep.double_count_ok},
          {"alpha_r", rep.alpha_r},
          {"deg_p_predicted", rep.deg_p_predicted},
          {"deg_q_predicted", rep.deg_q_predicted},
          {"P0", rep.p0},
          {"Q0", rep.q0},
          {"P1", rep.p1},
          {"Q1", rep.q1}}},
        {"stage3",
         {{"chosen", rep.chosen},
          {"deferred", rep.deferred},
          {"q_before", rep.q_survivors},
          {"progression_removed", rep.progression_removed},
          {"q_after", rep.q_after3},
          {"survival_rate", rep.survival_rate3},
          {"survival_bound", rep.survival_bound3},
          {"within_bound", rep.survival_rate3 <= rep.survival_bound3},
          {"survivors", rep.survivors3}}},
        {"stage4",
         {{"pool_size", rep.pool_size},
          {"matched", rep.matched},
          {"deficit", rep.deficit},
          {"remainder", rep.remainder}}},
        {"outcome",
         {{"y", pr.y},
          {"y_covered", rep.y_covered},
          {"remainder_empty", rep.remainder.empty()},
          {"success", rep.success}}}};
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) {
        throw config_error("run config must be an object");
    }
    if (!j.contains("command") || !j["command"].is_string()) {
        throw config_error("run config needs a \"command\" string");
    }
    RunConfig c;
    c.command = j["command"].get<std::string>();
    if (c.command == "batch") {
        throw config_error("batch runs cannot nest");
    }
    Opts scratch;
    CLI::App app;
    build_app(app, scratch);
    CLI::App* leaf = &app;
    std::istringstream words(c.command);
    std::string word;
    while (words >> word) {
        leaf = leaf->get_subcommand_no_throw(word);
        if (leaf == nullptr) {
            throw config_error("unknown command '" + c.command + "'");
        }
    }
    if (leaf == &app || !leaf->get_subcommands({}).empty()) {
        throw config_error("command '" + c.command + "' is incomplete");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "command") {
            continue;
        }
        if (key == "help" || leaf->get_option_no_throw("--" + key) == nullptr) {
            throw config_error("unknown key \"" + key + "\" for command '" + c.command + "'");
        }
        if (key == "seed") {
            if (!value.is_number_unsigned()) {
                throw config_error("\"seed\" must be a non-negative integer");
            }
            c.seed = value.get<std::uint64_t>();
        } else if (key == "format") {
            if (!value.is_string()) {
                throw config_error("\"format\" must be a string");
            }
            c.format = value.get<std::string>();
        } else if (key == "output") {
            if (!value.is_string()) {
                throw config_error("\"output\" must be a string");
            }
            c.output = value.get<std::string>();
        } else {
            if (!value.is_primitive() || value.is_null()) {
                throw config_error("\"" + key + "\" must be a number, string or boolean");
            }
            c.params[key] = value;
        }
    }
    return c;
}

json RunConfig::to_json() const {
    json j{{"command", command}};
    for (const auto& [key, value] : params) {
        j[key] = value;
    }
    if (seed) {
        j["seed"] = *seed;
    }
    j["format"] = format;
    if (output) {
        j["output"] = *output;
    }
    return j;
}

std::vector<std::string> RunConfig::to_argv() const {
    std::vector<std::string> argv;
    std::istringstream words(command);
    std::string word;
    while (words >> word) {
        argv.push_back(word);
    }
    for (const auto& [key, value] : params) {
        if (value.is_boolean()) {
            if (value.get<bool>()) {
                argv.push_back("--" + key);
            }
            continue;
        }
        argv.push_back("--" + key);
        argv.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    if (seed) {
        argv.push_back("--seed");
        argv.push_back(std::to_string(*seed));
    }
    if (command != "batch") {
        argv.push_back("--format");
        argv.push_back(format);
    }
    if (output) {
        argv.push_back("--output");
        argv.push_back(*output);
    }
    return argv;
}

json run_batch(const std::vector<RunConfig>& runs, unsigned workers) {
    std::vector<json> results(runs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t k = next++; k < runs.size(); k = next++) {
            std::ostringstream out, err;
            const int code = dispatch(runs[k].to_argv(), out, err);
            json entry{{"index", k},
                       {"config", runs[k].to_json()},
                       {"status", code == kExitOk ? "ok" : code == kExitCheckFailed ? "check_failed" : "error"},
                       {"exit_code", code}};
            if (code == kExitOk || code == kExitCheckFailed) {
                const std::string text = out.str();
                if (text.empty()) {
                    entry["result"] = nullptr;
                } else {
                    try {
                        entry["result"] = json::parse(text);
                    } catch (const json::parse_error&) {
                        entry["result"] = text;
                    }
                }
            } else {
                entry["error"] = one_line(err.str());
            }
            results[k] = std::move(entry);
        }
    };
    const unsigned hw = std::max(1U, std::thread::hardware_concurrency());
    const auto n = static_cast<unsigned>(
        std::min<std::size_t>(runs.size(), workers == 0 ? hw : workers));
    {
        std::vector<std::jthread> pool;
        for (unsigned w = 1; w < n; ++w) {
            pool.emplace_back(work);
        }
        work();
    }

    std::uint64_t ok = 0, construct_runs = 0, construct_successes = 0;
    json list = json::array();
    for (auto& entry : results) {
        ok += entry["status"] == "ok" ? 1 : 0;
        if (entry["config"]["command"] == "construct") {
            ++construct_runs;
            const json& res = entry.contains("result") ? entry["result"] : json();
            if (res.is_object() && res.contains("outcome") && res["outcome"]["remainder_empty"] == true) {
                ++construct_successes;
            }
        }
        list.push_back(std::move(entry));
    }
    return json{{"total", runs.size()},
                {"ok", ok},
                {"failed", runs.size() - ok},
                {"construct_runs", construct_runs},
                {"construct_successes", construct_successes},
                {"runs", std::move(list)}};
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Opts o;
    CLI::App app{"Prime gaps, residue-class coverings and the randomized sieve construction", "primegap"};
    build_app(app, o);
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e, out, err);
        }
        err << "error: usage: " << one_line(e.what()) << "\n";
        return kExitError;
    }
    auto fail = [&err](const char* kind, const std::exception& e) {
        err << "error: " << kind << ": " << one_line(e.what()) << "\n";
        return kExitError;
    };
    try {
        return run_selected(selected(app).first, o, out);
    } catch (const usage_error& e) {
        return fail("usage", e);
    } catch (const config_error& e) {
        return fail("config", e);
    } catch (const io_error& e) {
        return fail("io", e);
    } catch (const invalid_parameter& e) {
        return fail("invalid_parameter", e);
    } catch (const memory_budget_exceeded& e) {
        return fail("memory_budget", e);
    } catch (const search_budget_exceeded& e) {
        return fail("search_budget", e);
    } catch (const factorization_unavailable& e) {
        return fail("factorization", e);
    } catch (const std::exception& e) {
        return fail("internal", e);
    }
}

}  // namespace primegap::cli
