#include "clickcube/shrinkage.hpp"

#include "clickcube/csv_io.hpp"
#include "clickcube/parallel.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace clickcube {

namespace {

constexpr std::size_t kMcChunks = 64;
// Integration range in standard-normal units; phi(38) underflows.
constexpr double kZLimit = 38.0;

double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

// Effect coding for a factor with `levels` levels: level l < levels-1 gets a
// 1 in column l, the last level gets -1 in every column.
void fill_effect_columns(Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row, std::size_t level, std::size_t levels) {
    row.setZero();
    if (levels <= 1) return;
    if (level + 1 < levels) {
        row(static_cast<Eigen::Index>(level)) = 1.0;
    } else {
        row.setConstant(-1.0);
    }
}

template <class Map>
std::vector<std::string> keys_of(const Map& m) {
    std::vector<std::string> out;
    for (const auto& [k, v] : m) out.push_back(k);
    return out;
}

/// The prior collapsed to what the risk code needs.
struct SigmaModel {
    enum class Kind { lognormal, point, empirical } kind;
    double mu_log = 0.0;
    double s_log = 0.0;
    double sigma = 1.0;
    const std::vector<double>* sigmas = nullptr;
};

SigmaModel model_of(const SigmaPrior& G) {
    if (const auto* ln = std::get_if<LognormalSigma>(&G)) {
        if (ln->s_log == 0.0) return {SigmaModel::Kind::point, 0.0, 0.0, std::exp(ln->mu_log), nullptr};
        return {SigmaModel::Kind::lognormal, ln->mu_log, ln->s_log, 0.0, nullptr};
    }
    if (const auto* pm = std::get_if<PointMassSigma>(&G)) return {SigmaModel::Kind::point, 0.0, 0.0, pm->sigma, nullptr};
    const auto& emp = std::get<EmpiricalSigma>(G);
    return {SigmaModel::Kind::empirical, 0.0, 0.0, 0.0, &emp.sigmas};
}

double draw_sigma(const SigmaModel& m, SplitMix64& rng) {
    switch (m.kind) {
        case SigmaModel::Kind::lognormal:
            return std::exp(m.mu_log + m.s_log * std::normal_distribution<double>()(rng));
        case SigmaModel::Kind::point:
            return m.sigma;
        case SigmaModel::Kind::empirical:
            return (*m.sigmas)[std::uniform_int_distribution<std::size_t>(0, m.sigmas->size() - 1)(rng)];
    }
    return 1.0;
}

double snr(double eta, double sigma) { return eta * eta / (sigma * sigma); }

double trunc_integrand(double tau, double T) {
    const double base = tau / (1.0 + tau);
    return tau < T ? base * (1.0 + tau) : base;
}

struct Moments {
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t n = 0;

    void add(double x) {
        sum += x;
        sum_sq += x * x;
        ++n;
    }
    void merge(const Moments& o) {
        sum += o.sum;
        sum_sq += o.sum_sq;
        n += o.n;
    }
    double mean() const { return sum / static_cast<double>(n); }
    double se() const {
        const double m = mean();
        const double var = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
        return std::sqrt(std::max(var, 0.0) / static_cast<double>(n));
    }
};

void check_mc(const McOptions& mc) {
    if (mc.draws < 2) throw std::invalid_argument("Monte Carlo needs at least 2 draws");
}

/// Runs fn(sigma, rng, chunk_state) over mc.draws prior draws in fixed chunks.
template <class State, class Fn>
std::vector<State> run_chunks(const SigmaModel& model, const McOptions& mc, std::string_view label, Fn&& fn,
                              const State& init) {
    check_mc(mc);
    const std::uint64_t root = derive_seed(mc.seed, label);
    std::vector<State> states(kMcChunks, init);
    parallel_for(kMcChunks, mc.workers, [&](std::size_t c) {
        SplitMix64 rng(substream_seed(root, c));
        const auto range = chunk_range(mc.draws, kMcChunks, c);
        for (std::size_t i = range.begin; i < range.end; ++i) fn(draw_sigma(model, rng), rng, states[c]);
    });
    return states;
}

Moments mc_expectation(const PriorSpec& prior, const McOptions& mc, std::string_view label, double T) {
    const auto model = model_of(prior.G);
    const double eta = prior.eta;
    auto chunks = run_chunks<Moments>(
        model, mc, label, [&](double sigma, SplitMix64&, Moments& m) { m.add(trunc_integrand(snr(eta, sigma), T)); },
        Moments{});
    Moments total;
    for (const auto& c : chunks) total.merge(c);
    return total;
}

double integrate(const auto& f, double a, double b) {
    if (!(b > a)) return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, 1e-13);
}

/// Integral of f(z) over [a, b], split at `breaks`.
double integrate_pieces(const auto& f, double a, double b, std::initializer_list<double> breaks) {
    std::vector<double> cuts{a};
    for (double x : breaks) {
        if (x > a && x < b) cuts.push_back(x);
    }
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) total += integrate(f, cuts[i], cuts[i + 1]);
    return total;
}

/// Exact E[tau/(1+tau) (1 + tau 1{tau < T})].
double exact_risk(double eta, const SigmaModel& m, double T) {
    if (eta == 0.0) return 0.0;
    switch (m.kind) {
        case SigmaModel::Kind::point:
            return trunc_integrand(snr(eta, m.sigma), T);
        case SigmaModel::Kind::empirical: {
            double s = 0.0;
            for (double sigma : *m.sigmas) s += trunc_integrand(snr(eta, sigma), T);
            return s / static_cast<double>(m.sigmas->size());
        }
        case SigmaModel::Kind::lognormal:
            break;
    }
    // log tau = 2 log eta - 2 (mu + s z), decreasing in z.
    const double ln_eta2 = 2.0 * std::log(eta);
    const auto ln_tau = [&](double z) { return ln_eta2 - 2.0 * (m.mu_log + m.s_log * z); };
    const double z_unit = (0.5 * ln_eta2 - m.mu_log) / m.s_log;  // tau = 1
    const double bayes = integrate_pieces([&](double z) { return std_normal_pdf(z) * logistic(ln_tau(z)); },
                                          -kZLimit, kZLimit, {z_unit});
    if (!(T > 0.0)) return bayes;
    // tau < T  <=>  z > z_T
    const double z_T = (0.5 * (ln_eta2 - std::log(T)) - m.mu_log) / m.s_log;
    const double extra = integrate_pieces(
        [&](double z) {
            const double lt = ln_tau(z);
            return std_normal_pdf(z) * std::exp(lt) * logistic(lt);
        },
        std::max(z_T, -kZLimit), kZLimit, {z_unit});
    return bayes + extra;
}

}  // namespace

// --- stage one --------------------------------------------------------------

double CoarseModel::predict(const std::string& country, const std::string& category) const {
    const auto c = country_effects.find(country);
    const auto g = category_effects.find(category);
    if (c == country_effects.end()) throw std::invalid_argument("CoarseModel: unknown country '" + country + "'");
    if (g == category_effects.end()) throw std::invalid_argument("CoarseModel: unknown category '" + category + "'");
    return intercept + c->second + g->second;
}

Mapper<KeywordClick> coarse_mapper() {
    return [](const KeywordClick& k) {
        if (!(k.cost > 0.0)) throw std::invalid_argument("keyword click with nonpositive cost");
        return std::vector<Emission>{{CubeKey{k.country, k.category}, AggTuple::of(std::log(k.cost))}};
    };
}

CoarseModel fit_coarse(const DataCube& cells) {
    if (cells.empty()) throw std::invalid_argument("fit_coarse: no cells");
    if (cells.arity() != 2) throw std::invalid_argument("fit_coarse: expected (country, category) keys");

    std::map<std::string, std::size_t> countries, categories;
    for (const auto& [key, cell] : cells) {
        if (cell.n == 0) continue;
        countries.try_emplace(key.components[0], 0);
        categories.try_emplace(key.components[1], 0);
    }
    if (countries.empty()) throw std::invalid_argument("fit_coarse: every cell is empty");
    std::size_t idx = 0;
    for (auto& [name, i] : countries) i = idx++;
    idx = 0;
    for (auto& [name, i] : categories) i = idx++;

    const std::size_t C = countries.size(), G = categories.size();
    const auto p = static_cast<Eigen::Index>(1 + (C - 1) + (G - 1));
    std::vector<std::pair<const CubeKey*, const AggTuple*>> rows;
    for (const auto& [key, cell] : cells) {
        if (cell.n > 0) rows.emplace_back(&key, &cell);
    }
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), p);
    Eigen::VectorXd y(X.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& [key, cell] = rows[r];
        const auto i = static_cast<Eigen::Index>(r);
        const double w = std::sqrt(static_cast<double>(cell->n));
        X(i, 0) = 1.0;
        fill_effect_columns(X.row(i).segment(1, static_cast<Eigen::Index>(C - 1)), countries.at(key->components[0]),
                            C);
        fill_effect_columns(X.row(i).segment(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(G - 1)),
                            categories.at(key->components[1]), G);
        X.row(i) *= w;
        y(i) = w * cell->sum / static_cast<double>(cell->n);
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p) {
        const auto names_c = keys_of(countries);
        const auto names_g = keys_of(categories);
        std::string aliased;
        for (Eigen::Index k = qr.rank(); k < p; ++k) {
            const auto col = static_cast<std::size_t>(qr.colsPermutation().indices()(k));
            if (!aliased.empty()) aliased += ", ";
            if (col == 0) {
                aliased += "intercept";
            } else if (col < C) {
                aliased += "country=" + names_c[col - 1];
            } else {
                aliased += "category=" + names_g[col - C];
            }
        }
        throw std::invalid_argument("fit_coarse: design is rank deficient; aliased levels: " + aliased);
    }
    const Eigen::VectorXd beta = qr.solve(y);

    CoarseModel model;
    model.intercept = beta(0);
    double last = 0.0;
    for (const auto& [name, i] : countries) {
        if (i + 1 < C) {
            const double e = beta(static_cast<Eigen::Index>(1 + i));
            model.country_effects[name] = e;
            last -= e;
        } else {
            model.country_effects[name] = last;
        }
    }
    last = 0.0;
    for (const auto& [name, i] : categories) {
        if (i + 1 < G) {
            const double e = beta(static_cast<Eigen::Index>(C + i));
            model.category_effects[name] = e;
            last -= e;
        } else {
            model.category_effects[name] = last;
        }
    }
    return model;
}

// --- stage two --------------------------------------------------------------

std::vector<KeywordStat> keyword_residuals(std::span<const KeywordClick> log, const CoarseModel& model, double eta,
                                           MapReduceOptions options) {
    if (!(eta >= 0.0)) throw std::invalid_argument("keyword_residuals: eta must be >= 0");
    const std::vector<std::vector<KeywordClick>> shards{std::vector<KeywordClick>(log.begin(), log.end())};
    const Mapper<KeywordClick> mapper = [&model](const KeywordClick& k) {
        if (!(k.cost > 0.0)) throw std::invalid_argument("keyword click with nonpositive cost");
        const double r = std::log(k.cost) - model.predict(k.country, k.category);
        return std::vector<Emission>{{CubeKey{k.keyword}, AggTuple::of(r)}};
    };
    const DataCube per_keyword = map_reduce(shards, mapper, options);

    std::vector<KeywordStat> stats;
    std::vector<double> sample_var;
    double pooled_ss = 0.0;
    double pooled_df = 0.0;
    for (const auto& [key, cell] : per_keyword) {
        const auto n = static_cast<double>(cell.n);
        const double mean = cell.sum / n;
        double s2 = 0.0;
        if (cell.n >= 2) {
            s2 = std::max(0.0, (cell.sum_sq - n * mean * mean) / (n - 1.0));
            pooled_ss += s2 * (n - 1.0);
            pooled_df += n - 1.0;
        }
        stats.push_back(KeywordStat{key.components[0], cell.n, mean, 0.0, 0.0, false});
        sample_var.push_back(s2);
    }
    const bool any_singleton_like = std::any_of(sample_var.begin(), sample_var.end(), [](double v) { return v <= 0.0; });
    if (any_singleton_like && !(pooled_df > 0.0 && pooled_ss > 0.0)) {
        throw insufficient_data_error("keyword_residuals: no keyword with repeated clicks to pool a variance from");
    }
    const double pooled = pooled_df > 0.0 ? pooled_ss / pooled_df : 0.0;
    for (std::size_t k = 0; k < stats.size(); ++k) {
        auto& s = stats[k];
        const auto n = static_cast<double>(s.n);
        s.pooled = sample_var[k] <= 0.0;
        s.variance = (s.pooled ? pooled : sample_var[k]) / n;
        s.snr = eta * eta / s.variance;
    }
    return stats;
}

double bayes_estimate(double R, double sigma, double eta) {
    if (!(sigma > 0.0)) throw std::invalid_argument("bayes_estimate: sigma must be > 0");
    if (!(eta >= 0.0)) throw std::invalid_argument("bayes_estimate: eta must be >= 0");
    if (std::isinf(sigma)) return 0.0;
    const double eta2 = eta * eta;
    return eta2 / (sigma * sigma + eta2) * R;
}

double truncated_estimate(double R, double sigma, double eta, double T) {
    if (!(T >= 0.0)) throw std::invalid_argument("truncated_estimate: T must be >= 0");
    const double estimate = bayes_estimate(R, sigma, eta);
    const double tau = std::isinf(sigma) ? 0.0 : snr(eta, sigma);
    return tau >= T ? estimate : 0.0;
}

// --- priors and risk ----------------------------------------------------------

void validate(const PriorSpec& prior) {
    if (!(prior.eta >= 0.0) || !std::isfinite(prior.eta)) throw std::invalid_argument("PriorSpec: eta must be >= 0");
    if (!(prior.T >= 0.0)) throw std::invalid_argument("PriorSpec: T must be >= 0");
    if (const auto* ln = std::get_if<LognormalSigma>(&prior.G)) {
        if (!(ln->s_log >= 0.0) || !std::isfinite(ln->s_log) || !std::isfinite(ln->mu_log)) {
            throw std::invalid_argument("PriorSpec: lognormal G needs finite mu_log and s_log >= 0");
        }
    } else if (const auto* pm = std::get_if<PointMassSigma>(&prior.G)) {
        if (!(pm->sigma > 0.0) || !std::isfinite(pm->sigma)) {
            throw std::invalid_argument("PriorSpec: point-mass sigma must be positive and finite");
        }
    } else {
        const auto& emp = std::get<EmpiricalSigma>(prior.G);
        if (emp.sigmas.empty()) throw std::invalid_argument("PriorSpec: empirical G has no sigmas");
        for (double s : emp.sigmas) {
            if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("PriorSpec: empirical sigmas must be > 0");
        }
    }
}

LognormalSigma unit_precision_lognormal(double s_log) {
    // E[sigma^-2] = exp(-2 mu + 2 s^2) = 1
    return LognormalSigma{s_log * s_log, s_log};
}

RiskValue bayes_risk(const PriorSpec& prior, const McOptions& mc) {
    validate(prior);
    const Moments m = mc_expectation(prior, mc, "bayes_risk", 0.0);
    return RiskValue{exact_risk(prior.eta, model_of(prior.G), 0.0), m.mean(), m.se()};
}

RiskValue truncated_risk(const PriorSpec& prior, const McOptions& mc) {
    validate(prior);
    const Moments m = mc_expectation(prior, mc, "truncated_risk", prior.T);
    return RiskValue{exact_risk(prior.eta, model_of(prior.G), prior.T), m.mean(), m.se()};
}

double keep_fraction(const PriorSpec& prior) {
    validate(prior);
    if (prior.T == 0.0) return 1.0;
    if (std::isinf(prior.T)) return 0.0;
    const auto m = model_of(prior.G);
    switch (m.kind) {
        case SigmaModel::Kind::point:
            return snr(prior.eta, m.sigma) >= prior.T ? 1.0 : 0.0;
        case SigmaModel::Kind::empirical: {
            std::size_t kept = 0;
            for (double s : *m.sigmas) kept += snr(prior.eta, s) >= prior.T;
            return static_cast<double>(kept) / static_cast<double>(m.sigmas->size());
        }
        case SigmaModel::Kind::lognormal:
            break;
    }
    if (prior.eta == 0.0) return 0.0;
    // tau >= T  <=>  log sigma <= (log eta^2 - log T) / 2
    const double z = (0.5 * (2.0 * std::log(prior.eta) - std::log(prior.T)) - m.mu_log) / m.s_log;
    return std_normal_cdf(z);
}

double threshold_for_keep_fraction(double eta, const LognormalSigma& G, double keep) {
    if (!(keep > 0.0 && keep <= 1.0)) throw std::invalid_argument("threshold_for_keep_fraction: keep must be in (0, 1]");
    if (keep == 1.0) return 0.0;
    const double z = boost::math::quantile(boost::math::normal_distribution<double>(), keep);
    return eta * eta * std::exp(-2.0 * (G.mu_log + G.s_log * z));
}

std::vector<RiskCurveRow> risk_curve(double eta, const SigmaPrior& G, std::span<const double> thresholds,
                                     const McOptions& mc) {
    for (double T : thresholds) validate(PriorSpec{eta, G, T});
    if (thresholds.empty()) validate(PriorSpec{eta, G, 0.0});
    const std::size_t K = thresholds.size();

    struct Acc {
        Moments bayes;
        std::vector<double> a, a_sq, ab;
    };
    const auto model = model_of(G);
    Acc init{{}, std::vector<double>(K), std::vector<double>(K), std::vector<double>(K)};
    auto chunks = run_chunks<Acc>(
        model, mc, "risk_curve",
        [&](double sigma, SplitMix64&, Acc& acc) {
            const double tau = snr(eta, sigma);
            const double b = tau / (1.0 + tau);
            acc.bayes.add(b);
            for (std::size_t k = 0; k < K; ++k) {
                const double a = tau < thresholds[k] ? b * (1.0 + tau) : b;
                acc.a[k] += a;
                acc.a_sq[k] += a * a;
                acc.ab[k] += a * b;
            }
        },
        init);
    Acc total = init;
    for (const auto& c : chunks) {
        total.bayes.merge(c.bayes);
        for (std::size_t k = 0; k < K; ++k) {
            total.a[k] += c.a[k];
            total.a_sq[k] += c.a_sq[k];
            total.ab[k] += c.ab[k];
        }
    }

    const auto N = static_cast<double>(total.bayes.n);
    const double mean_b = total.bayes.mean();
    const double var_b = total.bayes.sum_sq / N - mean_b * mean_b;
    const double exact_bayes = exact_risk(eta, model, 0.0);
    std::vector<RiskCurveRow> rows;
    rows.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
        const double T = thresholds[k];
        const double mean_a = total.a[k] / N;
        const double ratio = mean_a / mean_b;
        const double var_a = total.a_sq[k] / N - mean_a * mean_a;
        const double cov = total.ab[k] / N - mean_a * mean_b;
        // Delta method for a ratio of means with paired draws.
        const double lin = std::max(0.0, var_a - 2.0 * ratio * cov + ratio * ratio * var_b);
        const double exact_trunc = exact_risk(eta, model, T);
        rows.push_back(RiskCurveRow{T, keep_fraction(PriorSpec{eta, G, T}), mean_b, mean_a, ratio,
                                    std::sqrt(lin / N) / mean_b, exact_bayes, exact_trunc, exact_trunc / exact_bayes});
    }
    return rows;
}

std::vector<double> default_threshold_grid(double eta, const LognormalSigma& G, std::size_t points) {
    if (points < 2) throw std::invalid_argument("default_threshold_grid: need at least 2 points");
    // keep = 10^(-i/m), i = 1..points-1, reaching about 10^-2.4.
    const double per_decade = std::max(1.0, std::round(static_cast<double>(points - 2) / 2.4));
    std::vector<double> grid{0.0};
    for (std::size_t i = 1; i < points; ++i) {
        grid.push_back(threshold_for_keep_fraction(eta, G, std::pow(10.0, -static_cast<double>(i) / per_decade)));
    }
    return grid;
}

void write_curve_csv(std::ostream& out, std::span<const RiskCurveRow> rows) {
    out << "T,keep_fraction,r_bayes,r_trunc,ratio,mc_se,r_bayes_exact,r_trunc_exact,ratio_exact\n";
    for (const auto& r : rows) {
        out << format_double(r.T) << ',' << format_double(r.keep_fraction) << ',' << format_double(r.r_bayes) << ','
            << format_double(r.r_trunc) << ',' << format_double(r.ratio) << ',' << format_double(r.mc_se) << ','
            << format_double(r.r_bayes_exact) << ',' << format_double(r.r_trunc_exact) << ','
            << format_double(r.ratio_exact) << '\n';
    }
}

LossSimulation simulate_loss(const PriorSpec& prior, const McOptions& mc) {
    validate(prior);
    struct Acc {
        Moments bayes, trunc, reduction;
    };
    const double eta = prior.eta;
    auto chunks = run_chunks<Acc>(
        model_of(prior.G), mc, "simulate_loss",
        [&](double sigma, SplitMix64& rng, Acc& acc) {
            std::normal_distribution<double> std_normal;
            const double mu = eta * std_normal(rng);
            const double R = mu + sigma * std_normal(rng);
            const double w = 1.0 / (sigma * sigma);
            const double bayes = mu - bayes_estimate(R, sigma, eta);
            const double trunc = mu - truncated_estimate(R, sigma, eta, prior.T);
            const double bayes_loss = bayes * bayes * w;
            acc.bayes.add(bayes_loss);
            acc.trunc.add(trunc * trunc * w);
            acc.reduction.add(mu * mu * w - bayes_loss);
        },
        Acc{});
    Acc total;
    for (const auto& c : chunks) {
        total.bayes.merge(c.bayes);
        total.trunc.merge(c.trunc);
        total.reduction.merge(c.reduction);
    }
    return LossSimulation{total.bayes.mean(),     total.bayes.se(),     total.trunc.mean(),
                          total.trunc.se(),       total.reduction.mean(), total.reduction.se()};
}

}  // namespace clickcube
