#pragma once

// Cost-per-click point estimates and their standard errors under different
// independence assumptions: clicks, queries or users as the independent
// unit, plus the streaming Poisson bootstrap.

#include "clickcube/engine.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clickcube {

enum class Unit { click, query, user };

/// Throws std::invalid_argument for anything but "click", "query", "user".
Unit parse_unit(std::string_view name);
std::string_view to_string(Unit unit) noexcept;
std::string_view unit_id(const ClickRecord& record, Unit unit) noexcept;

/// Diagnostics collected while estimating, e.g. skipped countries.
using Diagnostics = std::vector<std::string>;

/// Mapper emitting ({country}, (1, cost, cost^2)).
Mapper<ClickRecord> country_mapper();

struct CountryEstimate {
    std::string country;
    double theta_hat = 0.0;
    std::uint64_t n_clicks = 0;
    std::uint64_t n_queries = 0;
    std::uint64_t n_users = 0;
};

/// theta_hat = sum / n per country cell. Only n_clicks is known from a
/// country cube; unit counts are left 0 (variance_report fills them).
std::vector<CountryEstimate> point_estimates(const DataCube& country_cube, Diagnostics* diagnostics = nullptr);

struct UnitVariance {
    std::string country;
    std::uint64_t clicks = 0;
    std::uint64_t units = 0;
    double theta_hat = 0.0;
    double variance = 0.0;
};

/// (1/M) * ((M/N)^2 (1/M) sum Z^2 - theta^2) with theta = sum Z / N, clamped
/// at 0 against rounding. With M = N and Z = y this is the click-level form.
double clustered_variance(double clicks, double units, double sum_z, double sum_z_sq) noexcept;

/// Naive click-level variance from a country cube.
std::vector<UnitVariance> click_variance(const DataCube& country_cube, Diagnostics* diagnostics = nullptr);

/// Variance treating `unit` as independent. Runs a second MapReduce keyed by
/// (country, unit id) to collect the per-unit totals Z.
std::vector<UnitVariance> unit_variance(std::span<const std::vector<ClickRecord>> shards, Unit unit,
                                        MapReduceOptions options = {}, Diagnostics* diagnostics = nullptr);

std::vector<UnitVariance> user_variance(std::span<const std::vector<ClickRecord>> shards,
                                        MapReduceOptions options = {}, Diagnostics* diagnostics = nullptr);
std::vector<UnitVariance> query_variance(std::span<const std::vector<ClickRecord>> shards,
                                         MapReduceOptions options = {}, Diagnostics* diagnostics = nullptr);

using WeightFn = std::function<std::uint32_t(Fingerprint64 unit_hash, std::uint64_t b)>;

struct BootstrapOptions {
    std::size_t B = 1000;
    Unit unit = Unit::user;
    /// Mixed into the unit fingerprint; 0 leaves h(u) untouched.
    std::uint64_t salt = 0;
    /// Replicate weight source; defaults to the Poisson(1) fingerprint scheme.
    WeightFn weight;
};

using KeyFn = std::function<CubeKey(const ClickRecord&)>;

/// Wraps a key extractor into a mapper that also emits, for every replicate
/// b, the pair (w, w * cost) with w the weight of the record's unit.
Mapper<ClickRecord> attach_bootstrap(KeyFn key, const BootstrapOptions& options);

struct BootstrapSe {
    std::string country;
    double se = 0.0;
    std::size_t replicates_used = 0;
    std::size_t replicates_dropped = 0;
};

/// Sample standard deviation of the replicate ratios (weighted sum /
/// weighted count) of one cell. Replicates with zero weight are dropped.
/// Throws insufficient_data_error when fewer than two replicates remain.
BootstrapSe bootstrap_se(const CubeKey& key, const AggTuple& cell);

/// Per-cell bootstrap SE for a country cube with boot columns. Throws
/// std::invalid_argument when the cube carries fewer than 2 replicates.
std::vector<BootstrapSe> bootstrap_se(const DataCube& country_cube);

/// Classical multinomial bootstrap SE of the mean, for comparison.
double multinomial_bootstrap_se(std::span<const double> sample, std::size_t B, std::uint64_t seed);

struct VarianceReport {
    std::string country;
    double theta_hat = 0.0;
    std::uint64_t n_clicks = 0;
    std::uint64_t n_queries = 0;
    std::uint64_t n_users = 0;
    double s2_click = 0.0;
    double v2_query = 0.0;
    double v2_user = 0.0;
    /// NaN when the run carried fewer than two replicates.
    double se_boot = 0.0;
    std::size_t B = 0;
    std::size_t replicates_dropped = 0;
};

struct ReportOptions {
    std::size_t B = 1000;
    Unit unit = Unit::user;
    std::uint64_t salt = 0;
    std::size_t shards = 16;
    unsigned workers = 0;
};

/// Full pipeline: shard, country cube with boot columns, query and user
/// passes, then the per-country report sorted by country.
std::vector<VarianceReport> variance_report(std::span<const ClickRecord> log, const ReportOptions& options,
                                            Diagnostics* diagnostics = nullptr);

/// country, theta_hat, s_click, s_query, s_user, se_boot, then each SE
/// divided by s_user (ratio_click, ratio_query, ratio_boot).
void write_report_csv(std::ostream& out, std::span<const VarianceReport> reports);

}  // namespace clickcube
