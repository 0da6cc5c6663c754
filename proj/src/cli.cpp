#include "clickcube/cli.hpp"

#include "clickcube/csv_io.hpp"
#include "clickcube/feedback.hpp"
#include "clickcube/manifest.hpp"
#include "clickcube/shrinkage.hpp"
#include "clickcube/synthlog.hpp"
#include "clickcube/uncertainty.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#ifndef CLICKCUBE_VERSION
#define CLICKCUBE_VERSION "dev"
#endif

namespace clickcube::cli {

namespace {

const std::vector<std::string> kSubcommands{"genlog", "cube", "bootstrap", "shrinkage-curve", "feedback-sim"};

/// Reads key=value config files, attaching unsectioned keys to the
/// subcommand being run and ignoring the manifest.* bookkeeping keys.
class SubcommandConfig : public CLI::ConfigBase {
public:
    explicit SubcommandConfig(std::string subcommand) : subcommand_(std::move(subcommand)) {}

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        std::vector<CLI::ConfigItem> items;
        for (auto& item : CLI::ConfigBase::from_config(input)) {
            if (!item.parents.empty() && item.parents.front() == "manifest") continue;
            if (item.parents.empty() && item.name != "++" && item.name != "--") item.parents = {subcommand_};
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    std::string subcommand_;
};

std::string str(double v) { return format_double(v); }
std::string str(std::size_t v) { return std::to_string(v); }
std::string str(unsigned v) { return std::to_string(v); }
std::string str(std::uint64_t v, int) { return std::to_string(v); }

std::string join(const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + format_double(values[i]);
    return s;
}

std::string join(const std::vector<std::string>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? "," : "") + values[i];
    return s;
}

template <class WriteFn>
void write_file(const std::string& path, WriteFn&& write) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path + " for writing");
    write(file);
    file.flush();
    if (!file) throw std::runtime_error("write to " + path + " failed");
}

void finish(std::ostream& out, RunManifest manifest, const std::string& output, const std::string& what) {
    manifest.version = CLICKCUBE_VERSION;
    manifest.outputs = {output};
    const auto mpath = manifest_path_for(output);
    write_manifest(mpath, manifest);
    out << "wrote " << what << " to " << output << " (manifest " << mpath.string() << ")\n";
}

// --- genlog -----------------------------------------------------------------

struct GenlogArgs {
    LogSpec spec;
    std::string out;
    unsigned workers = 0;
};

void add_genlog(CLI::App& app, GenlogArgs& a) {
    auto* sub = app.add_subcommand("genlog", "Generate a synthetic click log (CSV)");
    sub->add_option("--users", a.spec.users, "Users across all countries")->capture_default_str();
    sub->add_option("--countries", a.spec.countries, "Number of countries")->capture_default_str();
    sub->add_option("--country-size-spread", a.spec.country_size_spread, "Spread of log country sizes")
        ->capture_default_str();
    sub->add_option("--queries-per-user", a.spec.queries_per_user, "Poisson mean of queries per user")
        ->capture_default_str();
    sub->add_option("--clicks-per-query", a.spec.clicks_per_query, "Zero-truncated Poisson rate of clicks per query")
        ->capture_default_str();
    sub->add_option("--mu", a.spec.mu_base, "Base log cost")->capture_default_str();
    sub->add_option("--mu-spread", a.spec.mu_spread, "Spread of country log-cost means")->capture_default_str();
    sub->add_option("--s-user", a.spec.s_user, "User effect sd (log scale)")->capture_default_str();
    sub->add_option("--s-query", a.spec.s_query, "Query effect sd (log scale)")->capture_default_str();
    sub->add_option("--s-click", a.spec.s_click, "Click noise sd (log scale)")->capture_default_str();
    sub->add_option("--seed", a.spec.seed, "Master seed")->capture_default_str();
    sub->add_option("--workers", a.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--out", a.out, "Output CSV path")->required();
}

int run_genlog(const GenlogArgs& a, std::ostream& out) {
    const auto log = generate_log(a.spec, a.workers);
    write_log_csv(std::filesystem::path(a.out), log);
    const auto& s = a.spec;
    finish(out,
           RunManifest{"genlog",
                       {},
                       {{"users", str(s.users)},
                        {"countries", str(s.countries)},
                        {"country-size-spread", str(s.country_size_spread)},
                        {"queries-per-user", str(s.queries_per_user)},
                        {"clicks-per-query", str(s.clicks_per_query)},
                        {"mu", str(s.mu_base)},
                        {"mu-spread", str(s.mu_spread)},
                        {"s-user", str(s.s_user)},
                        {"s-query", str(s.s_query)},
                        {"s-click", str(s.s_click)},
                        {"seed", str(s.seed, 0)},
                        {"workers", str(a.workers)},
                        {"out", a.out}},
                       {}},
           a.out, std::to_string(log.size()) + " clicks");
    return kExitOk;
}

// --- cube -------------------------------------------------------------------

struct CubeArgs {
    std::string log;
    std::vector<std::string> key{"country"};
    std::size_t B = 0;
    std::string unit = "user";
    std::uint64_t seed = 0;
    std::size_t shards = 16;
    unsigned workers = 0;
    std::string out;
};

void add_cube(CLI::App& app, CubeArgs& a) {
    auto* sub = app.add_subcommand("cube", "Aggregate a click log into a data cube (CSV)");
    sub->add_option("--log", a.log, "Input click log CSV")->required();
    sub->add_option("--key", a.key, "Key fields, comma separated: country,user,query,click")
        ->delimiter(',')
        ->check(CLI::IsMember({"country", "user", "query", "click"}))
        ->capture_default_str();
    sub->add_option("--B", a.B, "Bootstrap replicates (0 = none)")->capture_default_str();
    sub->add_option("--unit", a.unit, "Bootstrap unit")
        ->check(CLI::IsMember({"user", "query", "click"}))
        ->capture_default_str();
    sub->add_option("--seed", a.seed, "Bootstrap salt (0 = plain fingerprint seeding)")->capture_default_str();
    sub->add_option("--shards", a.shards, "Number of shards")->capture_default_str();
    sub->add_option("--workers", a.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--out", a.out, "Output cube CSV path")->required();
}

std::string_view field_of(const ClickRecord& r, const std::string& field) {
    if (field == "country") return r.country;
    if (field == "user") return r.user_id;
    if (field == "query") return r.query_id;
    return r.click_id;
}

std::uint64_t bootstrap_salt(std::uint64_t seed) { return seed == 0 ? 0 : derive_seed(seed, "bootstrap"); }

int run_cube(const CubeArgs& a, std::ostream& out) {
    const auto log = read_log_csv(std::filesystem::path(a.log));
    const auto shards = shard(log, a.shards);
    const auto fields = a.key;
    const KeyFn key = [fields](const ClickRecord& r) {
        CubeKey k;
        for (const auto& f : fields) k.components.emplace_back(field_of(r, f));
        return k;
    };
    const Mapper<ClickRecord> mapper =
        a.B > 0 ? attach_bootstrap(key, BootstrapOptions{a.B, parse_unit(a.unit), bootstrap_salt(a.seed), {}})
                : Mapper<ClickRecord>([key](const ClickRecord& r) {
                      return std::vector<Emission>{{key(r), AggTuple::of(r.cost)}};
                  });
    const DataCube cube = map_reduce(shards, mapper, MapReduceOptions{a.workers});
    write_cube_csv(std::filesystem::path(a.out), cube, fields);
    finish(out,
           RunManifest{"cube",
                       {},
                       {{"log", a.log},
                        {"key", join(a.key)},
                        {"B", str(a.B)},
                        {"unit", a.unit},
                        {"seed", str(a.seed, 0)},
                        {"shards", str(a.shards)},
                        {"workers", str(a.workers)},
                        {"out", a.out}},
                       {}},
           a.out, std::to_string(cube.size()) + " cells");
    return kExitOk;
}

// --- bootstrap --------------------------------------------------------------

struct BootstrapArgs {
    std::string log;
    std::size_t B = 1000;
    std::string unit = "user";
    std::uint64_t seed = 0;
    std::size_t shards = 16;
    unsigned workers = 0;
    std::string out;
};

void add_bootstrap(CLI::App& app, BootstrapArgs& a) {
    auto* sub = app.add_subcommand("bootstrap", "Per-country cost per click with click/query/user and bootstrap SEs");
    sub->add_option("--log", a.log, "Input click log CSV")->required();
    sub->add_option("--B", a.B, "Poisson bootstrap replicates")->capture_default_str();
    sub->add_option("--unit", a.unit, "Independent unit for the bootstrap")
        ->check(CLI::IsMember({"user", "query", "click"}))
        ->capture_default_str();
    sub->add_option("--seed", a.seed, "Bootstrap salt (0 = plain fingerprint seeding)")->capture_default_str();
    sub->add_option("--shards", a.shards, "Number of shards")->capture_default_str();
    sub->add_option("--workers", a.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--out", a.out, "Output report CSV path")->required();
}

int run_bootstrap(const BootstrapArgs& a, std::ostream& out, std::ostream& err) {
    const auto log = read_log_csv(std::filesystem::path(a.log));
    Diagnostics diagnostics;
    const auto report = variance_report(
        log, ReportOptions{a.B, parse_unit(a.unit), bootstrap_salt(a.seed), a.shards, a.workers}, &diagnostics);
    for (const auto& d : diagnostics) err << "note: " << d << '\n';
    write_file(a.out, [&](std::ostream& f) { write_report_csv(f, report); });
    finish(out,
           RunManifest{"bootstrap",
                       {},
                       {{"log", a.log},
                        {"B", str(a.B)},
                        {"unit", a.unit},
                        {"seed", str(a.seed, 0)},
                        {"shards", str(a.shards)},
                        {"workers", str(a.workers)},
                        {"out", a.out}},
                       {}},
           a.out, std::to_string(report.size()) + " countries");
    return kExitOk;
}

// --- shrinkage-curve ----------------------------------------------------------

struct CurveArgs {
    double slog = 1.5;
    std::optional<double> mu_log;
    double eta = 1.0;
    std::size_t grid_points = 40;
    std::size_t mc = 1'000'000;
    std::uint64_t seed = 1;
    unsigned workers = 0;
    std::string out;
};

void add_curve(CLI::App& app, CurveArgs& a) {
    auto* sub = app.add_subcommand("shrinkage-curve", "Truncated vs Bayes risk over a threshold grid (CSV)");
    sub->add_option("--slog", a.slog, "sd of log sigma under the lognormal prior")->capture_default_str();
    sub->add_option("--mu-log", a.mu_log, "mean of log sigma (default: slog^2, so E[1/sigma^2] = 1)");
    sub->add_option("--eta", a.eta, "Prior sd of keyword effects")->capture_default_str();
    sub->add_option("--grid-points", a.grid_points, "Threshold grid size, including T = 0")->capture_default_str();
    sub->add_option("--mc", a.mc, "Monte Carlo draws")->capture_default_str();
    sub->add_option("--seed", a.seed, "Master seed")->capture_default_str();
    sub->add_option("--workers", a.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--out", a.out, "Output curve CSV path")->required();
}

int run_curve(const CurveArgs& a, std::ostream& out) {
    LognormalSigma G = unit_precision_lognormal(a.slog);
    if (a.mu_log) G.mu_log = *a.mu_log;
    const auto grid = default_threshold_grid(a.eta, G, a.grid_points);
    const auto rows = risk_curve(a.eta, G, grid, McOptions{a.mc, derive_seed(a.seed, "shrinkage"), a.workers});
    write_file(a.out, [&](std::ostream& f) { write_curve_csv(f, rows); });
    finish(out,
           RunManifest{"shrinkage-curve",
                       {},
                       {{"slog", str(a.slog)},
                        {"mu-log", str(G.mu_log)},
                        {"eta", str(a.eta)},
                        {"grid-points", str(a.grid_points)},
                        {"mc", str(a.mc)},
                        {"seed", str(a.seed, 0)},
                        {"workers", str(a.workers)},
                        {"out", a.out}},
                       {}},
           a.out, std::to_string(rows.size()) + " grid points");
    return kExitOk;
}

// --- feedback-sim -------------------------------------------------------------

struct FeedbackArgs {
    FeedbackConfig config{};
    std::vector<double> omegas{0.1, 0.7, 1.3};
    std::string design = "with-prediction";
    std::uint64_t seed = 1;
    std::string out;
};

void add_feedback(CLI::App& app, FeedbackArgs& a) {
    a.config.n = 100000;
    auto* sub = app.add_subcommand("feedback-sim", "Noise-injection feedback simulation (CSV trace)");
    sub->add_option("--omega", a.omegas, "Injected noise sds, comma separated")->delimiter(',')->capture_default_str();
    sub->add_option("--gamma", a.config.gamma, "Feedback gain")->capture_default_str();
    sub->add_option("--delta", a.config.delta, "Drift gain")->capture_default_str();
    sub->add_option("--alpha", a.config.alpha, "Outcome intercept")->capture_default_str();
    sub->add_option("--beta", a.config.beta, "Outcome slope")->capture_default_str();
    sub->add_option("--sigma", a.config.sigma, "Outcome noise sd")->capture_default_str();
    sub->add_option("--tau-x", a.config.tau_x, "Predictor innovation sd")->capture_default_str();
    sub->add_option("--n", a.config.n, "Items per period")->capture_default_str();
    sub->add_option("--horizon", a.config.horizon, "Periods")->capture_default_str();
    sub->add_option("--design", a.design, "Regression design for the feedback estimate")
        ->check(CLI::IsMember({"with-prediction", "noise-only"}))
        ->capture_default_str();
    sub->add_option("--seed", a.seed, "Master seed")->capture_default_str();
    sub->add_option("--workers", a.config.workers, "Worker threads (0 = all cores)")->capture_default_str();
    sub->add_option("--out", a.out, "Output trace CSV path")->required();
}

int run_feedback(const FeedbackArgs& a, std::ostream& out) {
    FeedbackConfig c = a.config;
    c.seed = derive_seed(a.seed, "feedback");
    c.design = a.design == "noise-only" ? RegressionDesign::noise_only : RegressionDesign::with_prediction;
    const auto traces = run_sim(c, a.omegas);
    write_file(a.out, [&](std::ostream& f) { write_trace_csv(f, traces); });
    finish(out,
           RunManifest{"feedback-sim",
                       {},
                       {{"omega", join(a.omegas)},
                        {"gamma", str(c.gamma)},
                        {"delta", str(c.delta)},
                        {"alpha", str(c.alpha)},
                        {"beta", str(c.beta)},
                        {"sigma", str(c.sigma)},
                        {"tau-x", str(c.tau_x)},
                        {"n", str(c.n)},
                        {"horizon", str(c.horizon)},
                        {"design", a.design},
                        {"seed", str(a.seed, 0)},
                        {"workers", str(c.workers)},
                        {"out", a.out}},
                       {}},
           a.out, std::to_string(traces.size()) + " traces");
    return kExitOk;
}

/// CLI11 reads --config on the top-level app; accept it after the
/// subcommand too by moving it to the front.
std::vector<std::string> hoist_config(std::vector<std::string> args) {
    std::vector<std::string> front, rest;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            front.push_back(args[i]);
            front.push_back(args[++i]);
        } else if (args[i].starts_with("--config=")) {
            front.push_back(args[i]);
        } else {
            rest.push_back(args[i]);
        }
    }
    front.insert(front.end(), rest.begin(), rest.end());
    return front;
}

}  // namespace

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    args = hoist_config(std::move(args));
    std::string active;
    for (const auto& a : args) {
        if (std::find(kSubcommands.begin(), kSubcommands.end(), a) != kSubcommands.end()) {
            active = a;
            break;
        }
    }

    CLI::App app{"clickcube: sharded click-log statistics, shrinkage and feedback experiments", "clickcube"};
    app.set_version_flag("--version", CLICKCUBE_VERSION);
    app.require_subcommand(1);
    app.set_config("--config", "", "Load key=value options (flags override)");
    app.config_formatter(std::make_shared<SubcommandConfig>(active));

    GenlogArgs genlog;
    CubeArgs cube;
    BootstrapArgs bootstrap;
    CurveArgs curve;
    FeedbackArgs feedback;
    add_genlog(app, genlog);
    add_cube(app, cube);
    add_bootstrap(app, bootstrap);
    add_curve(app, curve);
    add_feedback(app, feedback);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand("genlog")) return run_genlog(genlog, out);
        if (app.got_subcommand("cube")) return run_cube(cube, out);
        if (app.got_subcommand("bootstrap")) return run_bootstrap(bootstrap, out, err);
        if (app.got_subcommand("shrinkage-curve")) return run_curve(curve, out);
        if (app.got_subcommand("feedback-sim")) return run_feedback(feedback, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace clickcube::cli
