#pragma once

// In-process MapReduce over sharded click logs.
//
// Records are partitioned into shards, each shard is mapped and pre-combined
// locally (the per-mapper combiner), partial results are shuffled by key and
// every key is reduced by folding the partials in shard-index order. The fold
// order is fixed, so for a given shard count the output does not depend on
// the number of workers.

#include "clickcube/errors.hpp"
#include "clickcube/fingerprint.hpp"
#include "clickcube/parallel.hpp"

#include <compare>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace clickcube {

struct ClickRecord {
    std::string click_id;
    std::string user_id;
    std::string query_id;
    std::string country;
    double cost = 0.0;

    friend bool operator==(const ClickRecord&, const ClickRecord&) = default;
};

/// Checks the per-record invariant (finite, nonnegative cost).
void validate_record(const ClickRecord& record);

/// Checks the per-log invariants: unique click ids and each query belonging
/// to exactly one user. Throws std::invalid_argument naming the offender.
void validate_log(std::span<const ClickRecord> records);

struct CubeKey {
    std::vector<std::string> components;

    CubeKey() = default;
    CubeKey(std::initializer_list<std::string> parts) : components(parts) {}
    explicit CubeKey(std::vector<std::string> parts) : components(std::move(parts)) {}

    std::size_t arity() const noexcept { return components.size(); }

    friend bool operator==(const CubeKey&, const CubeKey&) = default;
    friend auto operator<=>(const CubeKey&, const CubeKey&) = default;
};

/// Replicate-b pair of a bootstrap-carrying tuple.
struct ReplicateSum {
    std::uint64_t weight = 0;
    double weighted_sum = 0.0;

    friend bool operator==(const ReplicateSum&, const ReplicateSum&) = default;
};

/// Commutative-monoid cube payload: (n, sum, sum of squares) plus optional
/// bootstrap replicate pairs. The default value is the identity.
struct AggTuple {
    std::uint64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::vector<ReplicateSum> boot;

    /// Tuple for a single observation y, without replicates.
    static AggTuple of(double y) { return AggTuple{1, y, y * y, {}}; }

    /// True for the empty tuple and for all-zero tuples of any replicate count.
    bool is_identity() const noexcept {
        if (n != 0 || sum != 0.0 || sum_sq != 0.0) return false;
        for (const auto& r : boot) {
            if (r.weight != 0 || r.weighted_sum != 0.0) return false;
        }
        return true;
    }
    std::size_t replicates() const noexcept { return boot.size(); }

    /// Monoid combine. Throws invalid_state_error when both sides carry
    /// replicate vectors of different lengths.
    AggTuple& operator+=(const AggTuple& other);

    friend bool operator==(const AggTuple&, const AggTuple&) = default;
};

AggTuple combine(AggTuple a, const AggTuple& b);

/// Key-sorted association from CubeKey to AggTuple. Immutable once built by
/// map_reduce; safe to share across threads.
class DataCube {
public:
    using Entries = std::map<CubeKey, AggTuple>;
    using const_iterator = Entries::const_iterator;

    DataCube() = default;

    /// Folds `value` into the cell for `key`.
    void accumulate(const CubeKey& key, const AggTuple& value);

    /// Stored tuple, or the identity for an absent key. Throws
    /// std::invalid_argument when the key arity differs from the cube's.
    AggTuple lookup(const CubeKey& key) const;

    /// Key arity; 0 while the cube is empty.
    std::size_t arity() const noexcept { return arity_; }
    /// Replicate count B carried by the cells; 0 when there are no boot columns.
    std::size_t replicates() const noexcept { return replicates_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    const Entries& entries() const noexcept { return entries_; }
    const_iterator begin() const noexcept { return entries_.begin(); }
    const_iterator end() const noexcept { return entries_.end(); }

    /// Cell-wise combination of two cubes.
    static DataCube merge(const DataCube& a, const DataCube& b);

    friend bool operator==(const DataCube&, const DataCube&) = default;

private:
    void check_arity(const CubeKey& key) const;

    Entries entries_;
    std::size_t arity_ = 0;
    std::size_t replicates_ = 0;
    bool shaped_ = false;
};

AggTuple cube_lookup(const DataCube& cube, const CubeKey& key);

/// Partitions records into K shards by fingerprint(id) mod K, keeping input
/// order within each shard.
template <class Record, class IdFn>
std::vector<std::vector<Record>> shard_by(std::span<const Record> records, std::size_t K, IdFn&& id_of) {
    if (K == 0) throw std::invalid_argument("shard: shard count must be at least 1");
    std::vector<std::vector<Record>> shards(K);
    for (const auto& r : records) {
        shards[fingerprint(id_of(r)).value % K].push_back(r);
    }
    return shards;
}

/// Shards click records by click_id fingerprint.
std::vector<std::vector<ClickRecord>> shard(std::span<const ClickRecord> records, std::size_t K);

struct Emission {
    CubeKey key;
    AggTuple value;
};

template <class Record>
using Mapper = std::function<std::vector<Emission>(const Record&)>;

struct MapReduceOptions {
    /// Concurrent mapper/reducer tasks; 0 means hardware concurrency.
    unsigned workers = 0;
    /// Number of disjoint key ranges reduced concurrently.
    std::size_t reduce_partitions = 16;
};

template <class Record>
DataCube map_reduce(std::span<const std::vector<Record>> shards, const Mapper<Record>& mapper,
                    MapReduceOptions options = {}) {
    // Map + combine, one partial cube per shard.
    std::vector<DataCube> partials(shards.size());
    parallel_for(shards.size(), options.workers, [&](std::size_t s) {
        DataCube local;
        for (const Record& record : shards[s]) {
            for (const Emission& e : mapper(record)) local.accumulate(e.key, e.value);
        }
        partials[s] = std::move(local);
    });

    // Shuffle: the sorted union of keys, split into contiguous ranges.
    std::set<CubeKey> key_set;
    for (const auto& p : partials) {
        for (const auto& [key, value] : p) {
            if (!key_set.empty() && key.arity() != key_set.begin()->arity()) {
                throw invalid_state_error("map_reduce: emissions with different key arity");
            }
            key_set.insert(key);
        }
    }
    const std::vector<const CubeKey*> keys = [&] {
        std::vector<const CubeKey*> out;
        out.reserve(key_set.size());
        for (const auto& key : key_set) out.push_back(&key);
        return out;
    }();

    const std::size_t parts = std::max<std::size_t>(1, std::min(options.reduce_partitions, keys.size()));
    std::vector<std::vector<std::pair<CubeKey, AggTuple>>> reduced(parts);
    parallel_for(parts, options.workers, [&](std::size_t part) {
        const auto range = chunk_range(keys.size(), parts, part);
        auto& out = reduced[part];
        out.reserve(range.end - range.begin);
        for (std::size_t i = range.begin; i < range.end; ++i) {
            AggTuple acc;
            for (const auto& p : partials) {
                auto it = p.entries().find(*keys[i]);
                if (it != p.end()) acc += it->second;
            }
            out.emplace_back(*keys[i], std::move(acc));
        }
    });

    DataCube cube;
    for (auto& part : reduced) {
        for (auto& [key, value] : part) cube.accumulate(key, value);
    }
    return cube;
}

template <class Record>
DataCube map_reduce(const std::vector<std::vector<Record>>& shards, const Mapper<Record>& mapper,
                    MapReduceOptions options = {}) {
    return map_reduce(std::span<const std::vector<Record>>(shards), mapper, options);
}

}  // namespace clickcube
