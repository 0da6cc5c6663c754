#include "clickcube/synthlog.hpp"

#include "clickcube/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace clickcube {

namespace {

double draw_normal(SplitMix64& rng, double sd) {
    if (sd == 0.0) return 0.0;
    return std::normal_distribution<double>(0.0, sd)(rng);
}

// Evenly spaced positions in [-1, 1]; 0 for a single level.
double spread_position(std::size_t index, std::size_t count) {
    if (count <= 1) return 0.0;
    return 2.0 * static_cast<double>(index) / static_cast<double>(count - 1) - 1.0;
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("LogSpec: ") + what);
}

std::string padded(std::size_t value, int width) {
    std::string digits = std::to_string(value);
    if (static_cast<int>(digits.size()) < width) digits.insert(0, width - digits.size(), '0');
    return digits;
}

}  // namespace

void validate(const LogSpec& spec) {
    require(spec.countries >= 1, "countries must be at least 1");
    require(spec.users >= spec.countries, "users must be at least the number of countries");
    require(std::isfinite(spec.queries_per_user) && spec.queries_per_user > 0.0, "queries_per_user must be > 0");
    require(std::isfinite(spec.clicks_per_query) && spec.clicks_per_query > 0.0, "clicks_per_query must be > 0");
    require(spec.s_user >= 0.0 && spec.s_query >= 0.0 && spec.s_click >= 0.0, "standard deviations must be >= 0");
    require(std::isfinite(spec.s_user) && std::isfinite(spec.s_query) && std::isfinite(spec.s_click),
            "standard deviations must be finite");
    require(std::isfinite(spec.country_size_spread) && spec.country_size_spread >= 0.0,
            "country_size_spread must be >= 0");
    require(std::isfinite(spec.mu_base) && std::isfinite(spec.mu_spread), "log-cost means must be finite");
}

std::string country_code(std::size_t index) { return "c" + padded(index, 3); }

std::vector<std::size_t> users_per_country(const LogSpec& spec) {
    validate(spec);
    const std::size_t C = spec.countries;
    std::vector<double> weight(C);
    for (std::size_t c = 0; c < C; ++c) weight[c] = std::exp(spec.country_size_spread * spread_position(c, C));
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);

    // Largest-remainder allocation with one user guaranteed per country.
    const std::size_t free_users = spec.users - C;
    std::vector<std::size_t> out(C, 1);
    std::vector<std::pair<double, std::size_t>> remainder(C);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < C; ++c) {
        const double share = static_cast<double>(free_users) * weight[c] / total;
        const auto whole = static_cast<std::size_t>(std::floor(share));
        out[c] += whole;
        assigned += whole;
        remainder[c] = {share - static_cast<double>(whole), c};
    }
    std::stable_sort(remainder.begin(), remainder.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < free_users; ++i, ++assigned) ++out[remainder[i % C].second];
    return out;
}

std::vector<double> country_log_means(const LogSpec& spec) {
    std::vector<double> mu(spec.countries);
    for (std::size_t c = 0; c < spec.countries; ++c) {
        mu[c] = spec.mu_base + spec.mu_spread * spread_position(c, spec.countries);
    }
    return mu;
}

std::uint32_t zero_truncated_poisson(double lambda, double u) {
    if (!(lambda > 0.0)) throw std::invalid_argument("zero_truncated_poisson: lambda must be > 0");
    // pmf(1) = lambda e^-lambda / (1 - e^-lambda) = lambda / expm1(lambda)
    double pmf = lambda / std::expm1(lambda);
    double cdf = pmf;
    std::uint32_t k = 1;
    const double cap = lambda + 40.0 * std::sqrt(lambda) + 40.0;
    while (u >= cdf && k < cap) {
        ++k;
        pmf *= lambda / static_cast<double>(k);
        cdf += pmf;
        if (pmf == 0.0 && static_cast<double>(k) > lambda) break;
    }
    return k;
}

std::vector<ClickRecord> generate_log(const LogSpec& spec, unsigned workers) {
    validate(spec);
    const auto sizes = users_per_country(spec);
    const auto mu = country_log_means(spec);
    const std::uint64_t root = derive_seed(spec.seed, "synthlog");

    std::vector<std::vector<ClickRecord>> per_country(spec.countries);
    parallel_for(spec.countries, workers, [&](std::size_t c) {
        SplitMix64 rng(substream_seed(root, c));
        std::poisson_distribution<std::uint32_t> queries(spec.queries_per_user);
        const std::string code = country_code(c);
        auto& out = per_country[c];
        for (std::size_t u = 0; u < sizes[c]; ++u) {
            const std::string user = code + "-u" + std::to_string(u);
            const double user_effect = draw_normal(rng, spec.s_user);
            const std::uint32_t nq = queries(rng);
            for (std::uint32_t q = 0; q < nq; ++q) {
                const std::string query = user + "-q" + std::to_string(q);
                const double query_effect = draw_normal(rng, spec.s_query);
                const std::uint32_t nk = zero_truncated_poisson(spec.clicks_per_query, to_unit_interval(rng()));
                for (std::uint32_t k = 0; k < nk; ++k) {
                    const double log_cost = mu[c] + user_effect + query_effect + draw_normal(rng, spec.s_click);
                    out.push_back(ClickRecord{query + "-k" + std::to_string(k), user, query, code, std::exp(log_cost)});
                }
            }
        }
    });

    std::vector<ClickRecord> log;
    std::size_t total = 0;
    for (const auto& part : per_country) total += part.size();
    log.reserve(total);
    for (auto& part : per_country) std::move(part.begin(), part.end(), std::back_inserter(log));
    return log;
}

CostTruth truth_for(const LogSpec& spec, std::size_t replications, unsigned workers) {
    validate(spec);
    if (replications < 2) throw std::invalid_argument("truth_for: need at least 2 replications");
    const std::size_t C = spec.countries;
    const std::uint64_t root = derive_seed(spec.seed, "truth");

    // theta_hat per (replication, country); NaN when the country had no clicks.
    std::vector<std::vector<double>> theta_hat(replications, std::vector<double>(C));
    parallel_for(replications, workers, [&](std::size_t r) {
        LogSpec regen = spec;
        regen.seed = substream_seed(root, r);
        std::vector<double> sum(C, 0.0);
        std::vector<std::size_t> clicks(C, 0);
        const auto log = generate_log(regen, 1);
        // Country codes are c000..; the index is the numeric suffix.
        for (const auto& rec : log) {
            const std::size_t c = std::stoul(rec.country.substr(1));
            sum[c] += rec.cost;
            ++clicks[c];
        }
        for (std::size_t c = 0; c < C; ++c) {
            theta_hat[r][c] = clicks[c] ? sum[c] / static_cast<double>(clicks[c]) : std::nan("");
        }
    });

    CostTruth truth;
    truth.replications = replications;
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0, m2 = 0.0;
        std::size_t k = 0;
        for (std::size_t r = 0; r < replications; ++r) {
            const double x = theta_hat[r][c];
            if (std::isnan(x)) continue;
            ++k;
            const double d = x - mean;
            mean += d / static_cast<double>(k);
            m2 += d * (x - mean);
        }
        truth.countries.push_back(CountryTruth{country_code(c), k ? mean : std::nan(""),
                                               k > 1 ? m2 / static_cast<double>(k - 1) : std::nan(""), k});
    }
    return truth;
}

KeywordLog generate_keyword_log(const KeywordLogSpec& spec) {
    if (spec.countries == 0 || spec.categories == 0 || spec.keywords == 0) {
        throw std::invalid_argument("KeywordLogSpec: countries, categories and keywords must be >= 1");
    }
    if (!(spec.eta >= 0.0) || !(spec.noise_sd >= 0.0)) {
        throw std::invalid_argument("KeywordLogSpec: eta and noise_sd must be >= 0");
    }
    SplitMix64 rng(derive_seed(spec.seed, "keywords"));
    KeywordLog out;
    for (std::size_t c = 0; c < spec.countries; ++c) {
        out.country_effects.push_back(spec.country_spread * spread_position(c, spec.countries));
    }
    for (std::size_t g = 0; g < spec.categories; ++g) {
        out.category_effects.push_back(spec.category_spread * spread_position(g, spec.categories));
    }
    std::vector<std::string> names(spec.keywords);
    std::vector<double> effect(spec.keywords), popularity(spec.keywords);
    for (std::size_t k = 0; k < spec.keywords; ++k) {
        names[k] = "kw" + padded(k, 6);
        effect[k] = draw_normal(rng, spec.eta);
        popularity[k] = std::pow(static_cast<double>(k + 1), -spec.zipf_exponent);
        out.keyword_effects.emplace(names[k], effect[k]);
    }
    std::discrete_distribution<std::size_t> pick_keyword(popularity.begin(), popularity.end());
    std::uniform_int_distribution<std::size_t> pick_country(0, spec.countries - 1);
    out.clicks.reserve(spec.clicks);
    for (std::size_t i = 0; i < spec.clicks; ++i) {
        const std::size_t k = pick_keyword(rng);
        const std::size_t c = pick_country(rng);
        const std::size_t g = k % spec.categories;
        const double log_cost = spec.intercept + out.country_effects[c] + out.category_effects[g] + effect[k] +
                                draw_normal(rng, spec.noise_sd);
        out.clicks.push_back(KeywordClick{country_code(c), "g" + padded(g, 2), names[k], std::exp(log_cost)});
    }
    return out;
}

}  // namespace clickcube
