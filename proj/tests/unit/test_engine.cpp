#include "clickcube/engine.hpp"
#include "clickcube/uncertainty.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace clickcube;

namespace {

std::vector<ClickRecord> random_log(std::size_t n, std::uint64_t seed, std::size_t users = 200) {
    std::mt19937_64 rng(seed);
    std::lognormal_distribution<double> cost(0.0, 1.0);
    std::vector<ClickRecord> log;
    log.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = rng() % users;
        const auto q = rng() % 3;
        log.push_back(ClickRecord{"k" + std::to_string(i), "u" + std::to_string(u),
                                  "u" + std::to_string(u) + "-q" + std::to_string(q), "c" + std::to_string(u % 4),
                                  cost(rng)});
    }
    return log;
}

struct OracleCell {
    std::uint64_t n = 0;
    double sum = 0, sum_sq = 0;
};

// Single-pass sequential aggregation over the unsharded log.
std::map<std::vector<std::string>, OracleCell> sequential(const std::vector<ClickRecord>& log, bool with_user) {
    std::map<std::vector<std::string>, OracleCell> out;
    for (const auto& r : log) {
        std::vector<std::string> key{r.country};
        if (with_user) key.push_back(r.user_id);
        auto& c = out[key];
        ++c.n;
        c.sum += r.cost;
        c.sum_sq += r.cost * r.cost;
    }
    return out;
}

Mapper<ClickRecord> country_user_mapper() {
    return [](const ClickRecord& r) {
        return std::vector<Emission>{{CubeKey{r.country, r.user_id}, AggTuple::of(r.cost)}};
    };
}

bool rel_close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)}); }

bool cubes_close(const DataCube& a, const DataCube& b, double tol) {
    if (a.size() != b.size()) return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        const auto &x = ia->second, &y = ib->second;
        if (x.n != y.n || x.boot.size() != y.boot.size()) return false;
        if (!rel_close(x.sum, y.sum, tol) || !rel_close(x.sum_sq, y.sum_sq, tol)) return false;
        for (std::size_t k = 0; k < x.boot.size(); ++k) {
            if (x.boot[k].weight != y.boot[k].weight) return false;
            if (!rel_close(x.boot[k].weighted_sum, y.boot[k].weighted_sum, tol)) return false;
        }
    }
    return true;
}

AggTuple random_tuple(std::mt19937_64& rng, std::size_t B) {
    std::uniform_real_distribution<double> d(0.0, 100.0);
    AggTuple t;
    t.n = rng() % 50 + 1;
    t.sum = d(rng);
    t.sum_sq = d(rng) * d(rng);
    for (std::size_t b = 0; b < B; ++b) t.boot.push_back({rng() % 10, d(rng)});
    return t;
}

}  // namespace

TEST_CASE("shard") {
    SUBCASE("empty input gives K empty shards") {
        const auto s = shard({}, 4);
        CHECK(s.size() == 4);
        CHECK(std::all_of(s.begin(), s.end(), [](const auto& v) { return v.empty(); }));
    }
    SUBCASE("single record, single shard") {
        const std::vector<ClickRecord> one{{"k", "u", "q", "c", 1.0}};
        const auto s = shard(one, 1);
        REQUIRE(s.size() == 1);
        CHECK(s[0] == one);
    }
    SUBCASE("K = 0 is rejected") { CHECK_THROWS_AS(shard({}, 0), std::invalid_argument); }
    SUBCASE("sizes are binomial and the union is a permutation") {
        const auto log = random_log(10000, 3);
        const auto s = shard(log, 16);
        const double sd = std::sqrt(10000.0 / 16 * 15 / 16);
        std::vector<std::string> ids;
        for (const auto& part : s) {
            CHECK(std::abs(static_cast<double>(part.size()) - 625.0) <= 5 * sd);
            for (const auto& r : part) ids.push_back(r.click_id);
        }
        std::vector<std::string> expected;
        for (const auto& r : log) expected.push_back(r.click_id);
        std::sort(ids.begin(), ids.end());
        std::sort(expected.begin(), expected.end());
        CHECK(ids == expected);
    }
    SUBCASE("same-user clicks scatter") {
        std::vector<ClickRecord> log;
        for (int i = 0; i < 100; ++i) log.push_back({"k" + std::to_string(i), "u", "q", "c", 1.0});
        const auto s = shard(log, 8);
        CHECK(std::count_if(s.begin(), s.end(), [](const auto& v) { return !v.empty(); }) > 1);
    }
}

TEST_CASE("AggTuple monoid laws") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t B = trial % 3;
        const auto a = random_tuple(rng, B), b = random_tuple(rng, B), c = random_tuple(rng, B);
        const auto left = combine(a, combine(b, c));
        const auto right = combine(combine(a, b), c);
        CHECK(left.n == right.n);
        CHECK(rel_close(left.sum, right.sum, 1e-12));
        CHECK(rel_close(left.sum_sq, right.sum_sq, 1e-12));
        for (std::size_t k = 0; k < B; ++k) {
            CHECK(left.boot[k].weight == right.boot[k].weight);
            CHECK(rel_close(left.boot[k].weighted_sum, right.boot[k].weighted_sum, 1e-12));
        }
        CHECK(combine(a, AggTuple{}) == a);
        CHECK(combine(AggTuple{}, a) == a);
        CHECK(combine(a, b) == combine(b, a));
    }
}

TEST_CASE("AggTuple rejects replicate length mismatch") {
    AggTuple a = AggTuple::of(1.0);
    a.boot = {{1, 1.0}, {0, 0.0}};
    AggTuple b = AggTuple::of(2.0);
    b.boot = {{1, 2.0}};
    CHECK_THROWS_AS(a += b, invalid_state_error);
}

TEST_CASE("map_reduce") {
    SUBCASE("empty shards give an empty cube") {
        const std::vector<std::vector<ClickRecord>> shards(3);
        CHECK(map_reduce(shards, country_mapper()).empty());
    }
    SUBCASE("single emission") {
        const std::vector<std::vector<ClickRecord>> shards{{{"k", "u", "q", "c", 3.0}}};
        const auto cube = map_reduce(shards, country_mapper());
        REQUIRE(cube.size() == 1);
        const auto t = cube.lookup(CubeKey{"c"});
        CHECK(t.n == 1);
        CHECK(t.sum == 3.0);
        CHECK(t.sum_sq == 9.0);
        CHECK(t.boot.empty());
    }
    SUBCASE("matches a sequential aggregation") {
        const auto log = random_log(5000, 5);
        for (bool with_user : {false, true}) {
            const auto oracle = sequential(log, with_user);
            const auto cube = map_reduce(shard(log, 7), with_user ? country_user_mapper() : country_mapper());
            REQUIRE(cube.size() == oracle.size());
            for (const auto& [key, cell] : oracle) {
                const auto t = cube.lookup(CubeKey(key));
                CHECK(t.n == cell.n);
                CHECK(rel_close(t.sum, cell.sum, 1e-12));
                CHECK(rel_close(t.sum_sq, cell.sum_sq, 1e-12));
            }
        }
    }
    SUBCASE("shard count, order and parallelism do not matter") {
        auto log = random_log(20000, 9);
        const auto mapper = attach_bootstrap([](const ClickRecord& r) { return CubeKey{r.country}; },
                                             BootstrapOptions{20, Unit::user, 0, {}});
        const auto reference = map_reduce(shard(log, 1), mapper, {1, 1});
        for (std::size_t K : {2, 7, 64}) {
            for (unsigned workers : {1u, 3u}) {
                CHECK(cubes_close(map_reduce(shard(log, K), mapper, {workers, 5}), reference, 1e-12));
            }
        }
        std::mt19937_64 rng(1);
        std::shuffle(log.begin(), log.end(), rng);
        CHECK(cubes_close(map_reduce(shard(log, 7), mapper), reference, 1e-12));
    }
    SUBCASE("worker count does not change the bits") {
        const auto log = random_log(20000, 10);
        const auto shards = shard(log, 16);
        CHECK(map_reduce(shards, country_user_mapper(), {1, 16}) == map_reduce(shards, country_user_mapper(), {4, 16}));
    }
    SUBCASE("mismatched replicate lengths are an invalid state") {
        const std::vector<std::vector<ClickRecord>> shards{{{"k1", "u", "q", "c", 1.0}}, {{"k2", "u", "q", "c", 2.0}}};
        const Mapper<ClickRecord> mapper = [](const ClickRecord& r) {
            AggTuple t = AggTuple::of(r.cost);
            t.boot.resize(r.click_id == "k1" ? 2 : 3, ReplicateSum{1, r.cost});
            return std::vector<Emission>{{CubeKey{r.country}, t}};
        };
        CHECK_THROWS_AS(map_reduce(shards, mapper), invalid_state_error);
    }
    SUBCASE("mixed key arity is an invalid state") {
        const std::vector<std::vector<ClickRecord>> shards{{{"k1", "u", "q", "c", 1.0}}, {{"k2", "u", "q", "c", 2.0}}};
        const Mapper<ClickRecord> mapper = [](const ClickRecord& r) {
            return std::vector<Emission>{{r.click_id == "k1" ? CubeKey{"c"} : CubeKey{"c", "x"}, AggTuple::of(r.cost)}};
        };
        CHECK_THROWS_AS(map_reduce(shards, mapper), invalid_state_error);
    }
}

TEST_CASE("cube_lookup") {
    DataCube cube;
    AggTuple t = AggTuple::of(2.0);
    t.boot = {{1, 2.0}, {2, 4.0}};
    cube.accumulate(CubeKey{"a"}, t);

    CHECK(cube_lookup(cube, CubeKey{"a"}) == t);
    const auto absent = cube_lookup(cube, CubeKey{"zz"});
    CHECK(absent.n == 0);
    CHECK(absent.sum == 0.0);
    CHECK(absent.sum_sq == 0.0);
    CHECK(absent.boot.size() == 2);
    CHECK(absent.is_identity());
    CHECK_THROWS_AS(cube_lookup(cube, CubeKey{"a", "b"}), std::invalid_argument);
    CHECK(cube_lookup(DataCube{}, CubeKey{"a", "b"}).is_identity());

    SUBCASE("lookup after merge equals combine of lookups") {
        const auto log = random_log(3000, 21);
        const auto half = log.size() / 2;
        const std::vector<ClickRecord> first(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(half));
        const std::vector<ClickRecord> second(log.begin() + static_cast<std::ptrdiff_t>(half), log.end());
        const auto a = map_reduce(shard(first, 3), country_user_mapper());
        const auto b = map_reduce(shard(second, 3), country_user_mapper());
        const auto merged = DataCube::merge(a, b);
        for (const auto& [key, value] : merged) {
            const auto expected = combine(cube_lookup(a, key), cube_lookup(b, key));
            CHECK(value.n == expected.n);
            CHECK(rel_close(value.sum, expected.sum, 1e-12));
        }
        CHECK(cubes_close(merged, map_reduce(shard(log, 3), country_user_mapper()), 1e-12));
    }
}

TEST_CASE("record and log validation") {
    CHECK_NOTHROW(validate_record({"k", "u", "q", "c", 0.0}));
    CHECK_THROWS_AS(validate_record({"k", "u", "q", "c", -1.0}), std::invalid_argument);
    CHECK_THROWS_AS(validate_record({"k", "u", "q", "c", std::nan("")}), std::invalid_argument);
    CHECK_THROWS_AS(validate_record({"k", "u", "q", "c", INFINITY}), std::invalid_argument);

    const std::vector<ClickRecord> dup{{"k", "u", "q", "c", 1.0}, {"k", "u", "q", "c", 1.0}};
    CHECK_THROWS_AS(validate_log(dup), std::invalid_argument);
    const std::vector<ClickRecord> shared_query{{"k1", "u1", "q", "c", 1.0}, {"k2", "u2", "q", "c", 1.0}};
    CHECK_THROWS_AS(validate_log(shared_query), std::invalid_argument);
    CHECK_NOTHROW(validate_log(random_log(500, 1)));
}
