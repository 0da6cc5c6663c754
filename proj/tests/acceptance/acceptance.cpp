// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
#include "clickcube/cli.hpp"
#include "clickcube/csv_io.hpp"
#include "clickcube/feedback.hpp"
#include "clickcube/shrinkage.hpp"
#include "clickcube/synthlog.hpp"
#include "clickcube/uncertainty.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace clickcube;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& check) {
    Timer timer;
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  [" << id << "] " << name << ": " << o.detail << " ("
              << num(timer.seconds(), 3) << " s)" << std::endl;
}

// --- shrinkage (criteria 1-3 share one run) --------------------------------------

struct CurveRun {
    std::vector<RiskCurveRow> rows;
    double seconds = 0.0;
};

const CurveRun& curve_run() {
    static const CurveRun run = [] {
        Timer t;
        const auto G = unit_precision_lognormal(1.5);
        const auto grid = default_threshold_grid(1.0, G, 40);
        CurveRun r{risk_curve(1.0, G, grid, McOptions{1'000'000, derive_seed(1, "shrinkage"), 0}), 0.0};
        r.seconds = t.seconds();
        return r;
    }();
    return run;
}

Outcome shrinkage_headline() {
    const auto& run = curve_run();
    const auto it = std::min_element(run.rows.begin(), run.rows.end(), [](const auto& a, const auto& b) {
        return std::abs(a.keep_fraction - 0.1) < std::abs(b.keep_fraction - 0.1);
    });
    const bool ok = it->ratio >= 1.05 && it->ratio <= 1.10 && run.seconds < 30.0;
    return {ok, "ratio=" + num(it->ratio, 5) + " (quadrature " + num(it->ratio_exact, 5) + ") at keep=" +
                    num(it->keep_fraction) + ", want [1.05, 1.10]; 10^6 draws in " + num(run.seconds, 3) +
                    " s, want < 30 s"};
}

Outcome shrinkage_endpoints() {
    const auto& rows = curve_run().rows;
    const double at_zero = rows.front().ratio;
    bool explode = true;
    double min_tail = INFINITY;
    std::size_t tail = 0;
    for (const auto& r : rows) {
        if (r.keep_fraction <= 0.01) {
            ++tail;
            min_tail = std::min(min_tail, r.ratio);
            explode = explode && r.ratio > 2.0;
        }
    }
    const bool ok = rows.front().T == 0.0 && std::abs(at_zero - 1.0) <= 0.002 && tail > 0 && explode;
    return {ok, "ratio at T=0 is " + num(at_zero, 6) + " (want 1 +/- 0.002); min ratio over " + std::to_string(tail) +
                    " points with keep <= 0.01 is " + num(min_tail) + " (want > 2)"};
}

Outcome truncation_bound() {
    const auto& rows = curve_run().rows;
    std::size_t violations = 0;
    double worst = -INFINITY;
    for (const auto& r : rows) {
        const double slack = r.r_trunc_exact - (1.0 + r.T) * r.r_bayes_exact;
        worst = std::max(worst, slack);
        violations += slack > 0.0;
    }
    return {violations == 0, std::to_string(violations) + " violations over " + std::to_string(rows.size()) +
                                 " grid points; max R_Trunc - (1+T) R_Bayes = " + num(worst)};
}

// --- uncertainty (criteria 4-7) ------------------------------------------------------

LogSpec fidelity_spec() {
    LogSpec s;
    s.users = 10000;
    s.countries = 3;
    s.s_user = 0.5;
    s.s_query = 0.3;
    s.s_click = 0.5;
    return s;
}

Outcome bootstrap_fidelity() {
    Timer t;
    const auto spec = fidelity_spec();
    const auto log = generate_log(spec, 0);
    const auto rows = variance_report(log, ReportOptions{1000, Unit::user, 0, 16, 0});
    const double secs = t.seconds();
    double boot = 0.0, naive = 0.0;
    for (const auto& r : rows) {
        boot += r.se_boot / std::sqrt(r.v2_user);
        naive += std::sqrt(r.s2_click) / std::sqrt(r.v2_user);
    }
    boot /= static_cast<double>(rows.size());
    naive /= static_cast<double>(rows.size());

    // Context only: both SEs against the sampling sd over 200 regenerations.
    const auto truth = truth_for(spec, 200, 0);
    double boot_truth = 0.0, user_truth = 0.0;
    for (std::size_t c = 0; c < rows.size(); ++c) {
        const double sd = std::sqrt(truth.countries[c].variance);
        boot_truth += rows[c].se_boot / sd;
        user_truth += std::sqrt(rows[c].v2_user) / sd;
    }
    boot_truth /= static_cast<double>(rows.size());
    user_truth /= static_cast<double>(rows.size());

    const bool ok = rows.size() >= 3 && boot >= 0.9 && boot <= 1.1 && naive < 0.9 && secs < 120.0;
    return {ok, std::to_string(rows.size()) + " countries, " + std::to_string(log.size()) +
                    " clicks: mean se_boot/V = " + num(boot) + " (want [0.9, 1.1]), mean S/V = " + num(naive) +
                    " (want < 0.9); pipeline " + num(secs, 3) + " s, want < 120 s; against the regeneration sd: " +
                    "se_boot " + num(boot_truth) + ", V " + num(user_truth)};
}

Outcome variance_ordering() {
    const std::size_t regenerations = 50;
    LogSpec spec = fidelity_spec();
    spec.users = 3000;
    std::map<std::string, std::array<double, 3>> sums;
    for (std::size_t r = 0; r < regenerations; ++r) {
        spec.seed = substream_seed(derive_seed(1, "ordering"), r);
        const auto log = generate_log(spec, 0);
        const auto shards = shard(log, 8);
        for (const auto& v : click_variance(map_reduce(shards, country_mapper()))) sums[v.country][0] += v.variance;
        for (const auto& v : query_variance(shards)) sums[v.country][1] += v.variance;
        for (const auto& v : user_variance(shards)) sums[v.country][2] += v.variance;
    }
    bool ok = !sums.empty();
    std::string detail = std::to_string(regenerations) + " regenerations;";
    for (const auto& [country, s] : sums) {
        ok = ok && s[0] < s[1] && s[1] < s[2];
        detail += " " + country + ": E[S2]=" + num(s[0] / regenerations) + " E[Vq]=" + num(s[1] / regenerations) +
                  " E[Vu]=" + num(s[2] / regenerations) + ";";
    }
    return {ok, detail};
}

Outcome poisson_multinomial() {
    Timer t;
    std::mt19937_64 rng(2024);
    std::lognormal_distribution<double> cost(0.0, 0.8);
    std::vector<double> sample(50);
    std::vector<ClickRecord> log;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        sample[i] = cost(rng);
        const auto id = std::to_string(i);
        log.push_back(ClickRecord{"k" + id, "u" + id, "q" + id, "c", sample[i]});
    }
    const KeyFn key = [](const ClickRecord& r) { return CubeKey{r.country}; };
    const auto cube = map_reduce(shard(log, 4), attach_bootstrap(key, BootstrapOptions{4000, Unit::user, 0, {}}));
    const double poisson = bootstrap_se(cube).front().se;
    const double multinomial = multinomial_bootstrap_se(sample, 4000, 7);
    const double rel = std::abs(poisson / multinomial - 1.0);
    const double secs = t.seconds();
    return {rel <= 0.05 && secs < 10.0, "Poisson SE " + num(poisson, 5) + ", multinomial SE " +
                                            num(multinomial, 5) + ", relative difference " + num(rel) +
                                            " (want <= 0.05); " + num(secs, 3) + " s, want < 10 s"};
}

Outcome shard_invariance() {
    LogSpec spec;
    spec.users = 16000;
    auto log = generate_log(spec, 0);
    if (log.size() < 100000) return {false, "generated log too small: " + std::to_string(log.size())};
    log.resize(100000);
    const KeyFn key = [](const ClickRecord& r) { return CubeKey{r.country, r.user_id}; };
    const auto mapper = attach_bootstrap(key, BootstrapOptions{8, Unit::user, 0, {}});
    const auto reference = map_reduce(shard(log, 1), mapper);
    std::size_t count_mismatch = 0;
    double worst = 0.0;
    const auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); };
    for (std::size_t K : {7, 64}) {
        const auto cube = map_reduce(shard(log, K), mapper);
        if (cube.size() != reference.size()) return {false, "cell count differs at K=" + std::to_string(K)};
        for (auto a = cube.begin(), b = reference.begin(); a != cube.end(); ++a, ++b) {
            if (a->first != b->first) return {false, "key sets differ at K=" + std::to_string(K)};
            count_mismatch += a->second.n != b->second.n;
            worst = std::max({worst, rel(a->second.sum, b->second.sum), rel(a->second.sum_sq, b->second.sum_sq)});
            for (std::size_t i = 0; i < a->second.boot.size(); ++i) {
                count_mismatch += a->second.boot[i].weight != b->second.boot[i].weight;
                worst = std::max(worst, rel(a->second.boot[i].weighted_sum, b->second.boot[i].weighted_sum));
            }
        }
    }
    return {count_mismatch == 0 && worst <= 1e-12,
            std::to_string(log.size()) + " records, " + std::to_string(reference.size()) +
                " cells, K in {1, 7, 64}: " + std::to_string(count_mismatch) + " count mismatches, max relative " +
                "float difference " + num(worst) + " (want <= 1e-12)"};
}

// --- feedback (criteria 8-10) ------------------------------------------------------

FeedbackConfig reference_feedback() {
    FeedbackConfig c;
    c.beta = 1.0;
    c.sigma = 1.0;
    c.gamma = 0.3;
    c.delta = 0.15;
    c.tau_x = 1.0;
    c.n = 10000;
    c.horizon = 52;
    c.seed = derive_seed(1, "feedback");
    return c;
}

const std::vector<FeedbackTrace>& feedback_traces() {
    static const std::vector<FeedbackTrace> traces = [] {
        const std::vector<double> omegas{0.1, 0.7, 1.3};
        return run_sim(reference_feedback(), omegas);
    }();
    return traces;
}

Outcome feedback_recovery() {
    Timer t;
    const auto trace = run_trace(reference_feedback(), 0.7);
    const auto pooled = pooled_gamma(trace, 5, 52);
    const double z = (pooled.gamma_hat - 0.3) / pooled.se;
    const double secs = t.seconds();
    return {std::abs(z) <= 3.0 && secs < 60.0, "pooled gamma_hat over t in [5, 52] = " + num(pooled.gamma_hat, 5) +
                                                   " +/- " + num(pooled.se) + ", z = " + num(z, 3) +
                                                   " (want |z| <= 3); " + num(secs, 3) + " s, want < 60 s"};
}

Outcome feedback_shape() {
    const auto& traces = feedback_traces();
    const auto at = [](const FeedbackTrace& tr, std::size_t t) { return tr.points.at(t - 1).rel_rmse; };
    const auto& naive = traces[0];
    const auto &w01 = traces[1], &w07 = traces[2], &w13 = traces[3];
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t t = 40; t <= 52; ++t) {
        lo = std::min(lo, at(naive, t));
        hi = std::max(hi, at(naive, t));
    }
    const double drift = (hi - lo) / lo;
    const bool flat = drift < 0.10;
    const bool naive_worse = at(naive, 52) > at(w01, 52);
    const double early = std::abs(at(w01, 1) / at(naive, 1) - 1.0);
    const bool early_close = early <= 0.15;
    const double gain = 1.0 - at(w07, 52) / at(naive, 52);
    const bool improves = gain >= 0.25;
    const bool noisier = at(w13, 1) > at(w07, 1);
    return {flat && naive_worse && early_close && improves && noisier,
            std::string("naive R over [40, 52] varies ") + num(drift) + " (want < 0.10) " + (flat ? "ok" : "FAIL") +
                "; R(52) naive " + num(at(naive, 52)) + " > w=0.1 " + num(at(w01, 52)) + " " +
                (naive_worse ? "ok" : "FAIL") + "; |R_w=0.1(1)/R_naive(1) - 1| = " + num(early) +
                " (want <= 0.15) " + (early_close ? "ok" : "FAIL") + "; w=0.7 R(52) below naive by " + num(gain) +
                " (want >= 0.25) " + (improves ? "ok" : "FAIL") + "; R(1) w=1.3 " + num(at(w13, 1)) + " > w=0.7 " +
                num(at(w07, 1)) + " " + (noisier ? "ok" : "FAIL")};
}

Outcome noise_precision() {
    FeedbackConfig c = reference_feedback();
    c.n = 1000;
    c.omega = 0.7;
    const auto r = noise_precision_check(c, 200);
    return {r.ratio >= 0.8 && r.ratio <= 1.25, "n Var(theta_hat) Var(nu) / Var(Yhat^{t+1}) = " + num(r.ratio) +
                                                   " over " + std::to_string(r.replications) +
                                                   " replications at n = 1000 (want [0.8, 1.25])"};
}

// --- CLI determinism (criterion 11) ----------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Field-wise comparison: equal strings, or numbers within `tol` relative.
bool csv_close(const std::string& a, const std::string& b, double tol) {
    std::istringstream ia(a), ib(b);
    std::string la, lb;
    while (true) {
        const bool ga = static_cast<bool>(std::getline(ia, la));
        const bool gb = static_cast<bool>(std::getline(ib, lb));
        if (ga != gb) return false;
        if (!ga) return true;
        const auto fa = split_csv_line(la), fb = split_csv_line(lb);
        if (fa.size() != fb.size()) return false;
        for (std::size_t i = 0; i < fa.size(); ++i) {
            if (fa[i] == fb[i]) continue;
            try {
                const double x = parse_double(fa[i]), y = parse_double(fb[i]);
                if (std::abs(x - y) > tol * std::max({std::abs(x), std::abs(y), 1.0})) return false;
            } catch (const std::invalid_argument&) {
                return false;
            }
        }
    }
}

int cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

Outcome cli_determinism() {
    std::random_device rd;
    const fs::path dir = fs::temp_directory_path() / ("clickcube-acceptance-" + std::to_string(rd()));
    fs::create_directories(dir);
    const auto p = [&](const std::string& name) { return (dir / name).string(); };
    struct Case {
        std::string name;
        std::vector<std::string> args;
    };
    const std::vector<Case> cases{
        {"genlog", {"genlog", "--users", "5000", "--seed", "11"}},
        {"cube", {"cube", "--log", p("genlog.csv"), "--key", "country,user", "--B", "20", "--seed", "4"}},
        {"bootstrap", {"bootstrap", "--log", p("genlog.csv"), "--B", "200", "--seed", "4"}},
        {"shrinkage-curve", {"shrinkage-curve", "--mc", "200000", "--seed", "4"}},
        {"feedback-sim", {"feedback-sim", "--n", "5000", "--horizon", "12", "--seed", "4"}},
    };
    std::string detail;
    bool ok = true;
    for (const auto& c : cases) {
        const std::string first = p(c.name + ".csv");
        auto args = c.args;
        args.insert(args.end(), {"--workers", "1", "--out", first});
        if (cli(args) != 0) {
            ok = false;
            detail += c.name + ": run failed; ";
            continue;
        }
        const std::string manifest = first + ".manifest";
        const std::string replay = p(c.name + "-replay.csv");
        const std::string parallel = p(c.name + "-parallel.csv");
        const bool replay_ok = cli({"--config", manifest, c.name, "--out", replay}) == 0;
        const bool parallel_ok = cli({"--config", manifest, c.name, "--workers", "4", "--out", parallel}) == 0;
        const bool identical = replay_ok && slurp(first) == slurp(replay);
        const bool bitwise_parallel = parallel_ok && slurp(first) == slurp(parallel);
        const bool close_parallel = parallel_ok && csv_close(slurp(first), slurp(parallel), 1e-9);
        ok = ok && identical && close_parallel;
        detail += c.name + ": replay " + (identical ? "identical" : "DIFFERS") + ", workers=4 " +
                  (bitwise_parallel ? "identical" : close_parallel ? "within 1e-9" : "DIFFERS") + "; ";
    }
    fs::remove_all(dir);
    return {ok, detail};
}

}  // namespace

int main() {
    report(1, "shrinkage headline", shrinkage_headline);
    report(2, "shrinkage endpoints", shrinkage_endpoints);
    report(3, "truncation bound", truncation_bound);
    report(4, "bootstrap fidelity", bootstrap_fidelity);
    report(5, "variance ordering", variance_ordering);
    report(6, "Poisson/multinomial equivalence", poisson_multinomial);
    report(7, "engine shard invariance", shard_invariance);
    report(8, "feedback recovery", feedback_recovery);
    report(9, "feedback trace shape", feedback_shape);
    report(10, "noise precision law", noise_precision);
    report(11, "CLI determinism", cli_determinism);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
