#pragma once

// Synthetic click logs with user- and query-level cost correlation.
//
// Each country c holds a fixed number of users. A user issues
// Poisson(queries_per_user) queries, each query receives a zero-truncated
// Poisson(clicks_per_query) number of clicks, and click costs follow
//     log cost = mu_c + a_u + b_q + e,
// with a_u ~ N(0, s_user^2), b_q ~ N(0, s_query^2), e ~ N(0, s_click^2).
// clicks_per_query is the rate of the Poisson before truncation, so the
// mean clicks per query is lambda / (1 - exp(-lambda)).

#include "clickcube/engine.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace clickcube {

struct LogSpec {
    std::size_t countries = 3;
    /// Users across all countries.
    std::size_t users = 10000;
    /// Spread of log country sizes; 0 gives equal-sized countries.
    double country_size_spread = 0.0;
    double queries_per_user = 3.0;
    double clicks_per_query = 2.0;
    double mu_base = 0.0;
    /// Country base log-costs are spread evenly over mu_base +/- mu_spread.
    double mu_spread = 0.5;
    double s_user = 0.5;
    double s_query = 0.3;
    double s_click = 0.5;
    std::uint64_t seed = 1;
};

/// Throws std::invalid_argument naming the first bad field.
void validate(const LogSpec& spec);

std::string country_code(std::size_t index);
std::vector<std::size_t> users_per_country(const LogSpec& spec);
std::vector<double> country_log_means(const LogSpec& spec);

/// Deterministic in spec (including seed); countries are generated from
/// independent derived streams, so `workers` does not change the output.
std::vector<ClickRecord> generate_log(const LogSpec& spec, unsigned workers = 1);

/// Zero-truncated Poisson draw from one uniform.
std::uint32_t zero_truncated_poisson(double lambda, double u);

struct CountryTruth {
    std::string country;
    /// Mean of theta_hat over regenerations.
    double theta = 0.0;
    /// Sampling variance of theta_hat over regenerations.
    double variance = 0.0;
    /// Regenerations in which the country had at least one click.
    std::size_t replications = 0;
};

struct CostTruth {
    std::vector<CountryTruth> countries;
    std::size_t replications = 0;
};

/// Brute-force truth by regenerating the log `replications` times (at least
/// 200 unless the caller asks otherwise) from seeds derived from spec.seed.
CostTruth truth_for(const LogSpec& spec, std::size_t replications = 200, unsigned workers = 0);

// --- keyword-level logs for the shrinkage pipeline -------------------------

struct KeywordClick {
    std::string country;
    std::string category;
    std::string keyword;
    double cost = 0.0;
};

struct KeywordLogSpec {
    std::size_t countries = 4;
    std::size_t categories = 5;
    std::size_t keywords = 2000;
    std::size_t clicks = 100000;
    /// Keyword popularity is proportional to 1 / rank^zipf_exponent.
    double zipf_exponent = 1.1;
    double intercept = 0.0;
    /// Country and category effects are evenly spaced over +/- these values.
    double country_spread = 0.5;
    double category_spread = 0.5;
    /// Prior sd of keyword effects.
    double eta = 0.3;
    double noise_sd = 1.0;
    std::uint64_t seed = 1;
};

struct KeywordLog {
    std::vector<KeywordClick> clicks;
    std::vector<double> country_effects;
    std::vector<double> category_effects;
    std::map<std::string, double> keyword_effects;
};

KeywordLog generate_keyword_log(const KeywordLogSpec& spec);

}  // namespace clickcube
