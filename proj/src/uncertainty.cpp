#include "clickcube/uncertainty.hpp"

#include "clickcube/csv_io.hpp"

#include <cmath>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

namespace clickcube {

namespace {

void note(Diagnostics* diagnostics, std::string message) {
    if (diagnostics) diagnostics->push_back(std::move(message));
}

const std::string& country_of(const CubeKey& key) {
    if (key.arity() == 0) throw std::invalid_argument("country cube keys must have at least one component");
    return key.components.front();
}

}  // namespace

Unit parse_unit(std::string_view name) {
    if (name == "click") return Unit::click;
    if (name == "query") return Unit::query;
    if (name == "user") return Unit::user;
    throw std::invalid_argument("unknown unit '" + std::string(name) + "' (expected click, query or user)");
}

std::string_view to_string(Unit unit) noexcept {
    switch (unit) {
        case Unit::click: return "click";
        case Unit::query: return "query";
        case Unit::user: return "user";
    }
    return "?";
}

std::string_view unit_id(const ClickRecord& record, Unit unit) noexcept {
    switch (unit) {
        case Unit::click: return record.click_id;
        case Unit::query: return record.query_id;
        case Unit::user: return record.user_id;
    }
    return record.click_id;
}

Mapper<ClickRecord> country_mapper() {
    return [](const ClickRecord& r) { return std::vector<Emission>{{CubeKey{r.country}, AggTuple::of(r.cost)}}; };
}

std::vector<CountryEstimate> point_estimates(const DataCube& country_cube, Diagnostics* diagnostics) {
    std::vector<CountryEstimate> out;
    for (const auto& [key, cell] : country_cube) {
        if (cell.n == 0) {
            note(diagnostics, "country " + country_of(key) + ": no clicks, skipped");
            continue;
        }
        out.push_back(CountryEstimate{country_of(key), cell.sum / static_cast<double>(cell.n), cell.n, 0, 0});
    }
    return out;
}

double clustered_variance(double clicks, double units, double sum_z, double sum_z_sq) noexcept {
    const double theta = sum_z / clicks;
    const double scale = units / clicks;
    const double v = (scale * scale * sum_z_sq / units - theta * theta) / units;
    return v > 0.0 ? v : 0.0;
}

std::vector<UnitVariance> click_variance(const DataCube& country_cube, Diagnostics* diagnostics) {
    std::vector<UnitVariance> out;
    for (const auto& [key, cell] : country_cube) {
        if (cell.n == 0) {
            note(diagnostics, "country " + country_of(key) + ": no clicks, skipped");
            continue;
        }
        const auto n = static_cast<double>(cell.n);
        const double theta = cell.sum / n;
        const double s2 = (cell.sum_sq / n - theta * theta) / n;
        out.push_back(UnitVariance{country_of(key), cell.n, cell.n, theta, s2 > 0.0 ? s2 : 0.0});
    }
    return out;
}

std::vector<UnitVariance> unit_variance(std::span<const std::vector<ClickRecord>> shards, Unit unit,
                                        MapReduceOptions options, Diagnostics* diagnostics) {
    const Mapper<ClickRecord> mapper = [unit](const ClickRecord& r) {
        return std::vector<Emission>{{CubeKey{r.country, std::string(unit_id(r, unit))}, AggTuple::of(r.cost)}};
    };
    const DataCube per_unit = map_reduce(shards, mapper, options);

    struct Totals {
        std::uint64_t clicks = 0;
        std::uint64_t units = 0;
        double sum_z = 0.0;
        double sum_z_sq = 0.0;
    };
    std::map<std::string, Totals> by_country;
    for (const auto& [key, cell] : per_unit) {
        auto& t = by_country[key.components[0]];
        t.clicks += cell.n;
        t.units += 1;
        t.sum_z += cell.sum;
        t.sum_z_sq += cell.sum * cell.sum;
    }

    std::vector<UnitVariance> out;
    for (const auto& [country, t] : by_country) {
        if (t.clicks == 0 || t.units == 0) {
            note(diagnostics, "country " + country + ": no " + std::string(to_string(unit)) + "s, skipped");
            continue;
        }
        const auto n = static_cast<double>(t.clicks);
        out.push_back(UnitVariance{country, t.clicks, t.units, t.sum_z / n,
                                   clustered_variance(n, static_cast<double>(t.units), t.sum_z, t.sum_z_sq)});
    }
    return out;
}

std::vector<UnitVariance> user_variance(std::span<const std::vector<ClickRecord>> shards, MapReduceOptions options,
                                        Diagnostics* diagnostics) {
    return unit_variance(shards, Unit::user, options, diagnostics);
}

std::vector<UnitVariance> query_variance(std::span<const std::vector<ClickRecord>> shards, MapReduceOptions options,
                                         Diagnostics* diagnostics) {
    return unit_variance(shards, Unit::query, options, diagnostics);
}

Mapper<ClickRecord> attach_bootstrap(KeyFn key, const BootstrapOptions& options) {
    if (options.B == 0) throw std::invalid_argument("attach_bootstrap: B must be at least 1");
    if (!key) throw std::invalid_argument("attach_bootstrap: key extractor is empty");
    return [key = std::move(key), options](const ClickRecord& r) {
        Emission e{key(r), AggTuple::of(r.cost)};
        Fingerprint64 h = fingerprint(unit_id(r, options.unit));
        if (options.salt != 0) h.value ^= mix13(options.salt);
        e.value.boot.resize(options.B);
        for (std::size_t b = 0; b < options.B; ++b) {
            const std::uint32_t w = options.weight ? options.weight(h, b) : replicate_weight(h, b);
            e.value.boot[b] = ReplicateSum{w, w * r.cost};
        }
        return std::vector<Emission>{std::move(e)};
    };
}

BootstrapSe bootstrap_se(const CubeKey& key, const AggTuple& cell) {
    if (cell.boot.size() < 2) {
        throw std::invalid_argument("bootstrap_se: need at least 2 replicates, cell has " +
                                    std::to_string(cell.boot.size()));
    }
    double mean = 0.0, m2 = 0.0;
    std::size_t used = 0;
    for (const auto& rep : cell.boot) {
        if (rep.weight == 0) continue;
        const double x = rep.weighted_sum / static_cast<double>(rep.weight);
        ++used;
        const double d = x - mean;
        mean += d / static_cast<double>(used);
        m2 += d * (x - mean);
    }
    const std::string country = key.arity() ? key.components.front() : std::string();
    if (used < 2) {
        throw insufficient_data_error("bootstrap_se: country " + country + " has " + std::to_string(used) +
                                      " non-empty replicates");
    }
    return BootstrapSe{country, std::sqrt(m2 / static_cast<double>(used - 1)), used, cell.boot.size() - used};
}

std::vector<BootstrapSe> bootstrap_se(const DataCube& country_cube) {
    if (country_cube.replicates() < 2) {
        throw std::invalid_argument("bootstrap_se: cube carries " + std::to_string(country_cube.replicates()) +
                                    " replicates, need at least 2");
    }
    std::vector<BootstrapSe> out;
    for (const auto& [key, cell] : country_cube) out.push_back(bootstrap_se(key, cell));
    return out;
}

double multinomial_bootstrap_se(std::span<const double> sample, std::size_t B, std::uint64_t seed) {
    if (sample.empty()) throw std::invalid_argument("multinomial_bootstrap_se: empty sample");
    if (B < 2) throw std::invalid_argument("multinomial_bootstrap_se: B must be at least 2");
    SplitMix64 rng(derive_seed(seed, "multinomial"));
    std::uniform_int_distribution<std::size_t> pick(0, sample.size() - 1);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < sample.size(); ++i) s += sample[pick(rng)];
        const double x = s / static_cast<double>(sample.size());
        const double d = x - mean;
        mean += d / static_cast<double>(b + 1);
        m2 += d * (x - mean);
    }
    return std::sqrt(m2 / static_cast<double>(B - 1));
}

std::vector<VarianceReport> variance_report(std::span<const ClickRecord> log, const ReportOptions& options,
                                            Diagnostics* diagnostics) {
    const auto shards = shard(log, options.shards);
    const std::span<const std::vector<ClickRecord>> shard_view(shards);
    const MapReduceOptions mr{options.workers};

    const KeyFn country_key = [](const ClickRecord& r) { return CubeKey{r.country}; };
    const DataCube cube =
        options.B > 0
            ? map_reduce(shard_view, attach_bootstrap(country_key, {options.B, options.unit, options.salt, {}}), mr)
            : map_reduce(shard_view, country_mapper(), mr);

    std::map<std::string, VarianceReport> rows;
    for (const auto& v : click_variance(cube, diagnostics)) {
        auto& row = rows[v.country];
        row.country = v.country;
        row.theta_hat = v.theta_hat;
        row.n_clicks = v.clicks;
        row.s2_click = v.variance;
        row.B = options.B;
        row.se_boot = std::nan("");
    }
    for (const auto& v : query_variance(shard_view, mr, diagnostics)) {
        if (auto it = rows.find(v.country); it != rows.end()) {
            it->second.v2_query = v.variance;
            it->second.n_queries = v.units;
        }
    }
    for (const auto& v : user_variance(shard_view, mr, diagnostics)) {
        if (auto it = rows.find(v.country); it != rows.end()) {
            it->second.v2_user = v.variance;
            it->second.n_users = v.units;
        }
    }
    if (options.B >= 2) {
        for (const auto& [key, cell] : cube) {
            auto it = rows.find(key.components.front());
            if (it == rows.end()) continue;
            try {
                const auto se = bootstrap_se(key, cell);
                it->second.se_boot = se.se;
                it->second.replicates_dropped = se.replicates_dropped;
                if (se.replicates_dropped) {
                    note(diagnostics, "country " + se.country + ": dropped " + std::to_string(se.replicates_dropped) +
                                          " empty replicates");
                }
            } catch (const insufficient_data_error& e) {
                note(diagnostics, e.what());
            }
        }
    } else if (options.B == 1) {
        note(diagnostics, "B = 1: bootstrap SE needs at least 2 replicates, se_boot reported as NaN");
    }

    std::vector<VarianceReport> out;
    out.reserve(rows.size());
    for (auto& [country, row] : rows) out.push_back(std::move(row));
    return out;
}

void write_report_csv(std::ostream& out, std::span<const VarianceReport> reports) {
    out << "country,theta_hat,s_click,s_query,s_user,se_boot,ratio_click,ratio_query,ratio_boot\n";
    for (const auto& r : reports) {
        const double s_click = std::sqrt(r.s2_click);
        const double s_query = std::sqrt(r.v2_query);
        const double s_user = std::sqrt(r.v2_user);
        const auto ratio = [s_user](double se) { return s_user > 0.0 ? se / s_user : std::nan(""); };
        out << csv_escape(r.country) << ',' << format_double(r.theta_hat) << ',' << format_double(s_click) << ','
            << format_double(s_query) << ',' << format_double(s_user) << ',' << format_double(r.se_boot) << ','
            << format_double(ratio(s_click)) << ',' << format_double(ratio(s_query)) << ','
            << format_double(ratio(r.se_boot)) << '\n';
    }
}

}  // namespace clickcube
