#include "clickcube/engine.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace clickcube {

void validate_record(const ClickRecord& record) {
    if (!std::isfinite(record.cost) || record.cost < 0.0) {
        throw std::invalid_argument("click " + record.click_id + ": cost must be finite and nonnegative");
    }
}

void validate_log(std::span<const ClickRecord> records) {
    std::unordered_set<std::string_view> clicks;
    std::unordered_map<std::string_view, std::string_view> query_owner;
    clicks.reserve(records.size());
    for (const auto& r : records) {
        validate_record(r);
        if (!clicks.insert(r.click_id).second) {
            throw std::invalid_argument("duplicate click_id " + r.click_id);
        }
        auto [it, inserted] = query_owner.try_emplace(r.query_id, r.user_id);
        if (!inserted && it->second != r.user_id) {
            throw std::invalid_argument("query " + r.query_id + " belongs to more than one user");
        }
    }
}

AggTuple& AggTuple::operator+=(const AggTuple& other) {
    if (other.is_identity()) return *this;
    if (is_identity()) {
        *this = other;
        return *this;
    }
    if (boot.size() != other.boot.size()) {
        throw invalid_state_error("AggTuple: cannot combine " + std::to_string(boot.size()) + " and " +
                                  std::to_string(other.boot.size()) + " bootstrap replicates");
    }
    n += other.n;
    sum += other.sum;
    sum_sq += other.sum_sq;
    for (std::size_t b = 0; b < boot.size(); ++b) {
        boot[b].weight += other.boot[b].weight;
        boot[b].weighted_sum += other.boot[b].weighted_sum;
    }
    return *this;
}

AggTuple combine(AggTuple a, const AggTuple& b) {
    a += b;
    return a;
}

void DataCube::check_arity(const CubeKey& key) const {
    if (!entries_.empty() && key.arity() != arity_) {
        throw std::invalid_argument("cube key arity " + std::to_string(key.arity()) + " does not match cube arity " +
                                    std::to_string(arity_));
    }
}

void DataCube::accumulate(const CubeKey& key, const AggTuple& value) {
    if (!entries_.empty() && key.arity() != arity_) {
        throw invalid_state_error("cube key arity " + std::to_string(key.arity()) + " does not match cube arity " +
                                  std::to_string(arity_));
    }
    if (!value.is_identity()) {
        if (shaped_ && value.boot.size() != replicates_) {
            throw invalid_state_error("cube carries " + std::to_string(replicates_) + " replicates, got " +
                                      std::to_string(value.boot.size()));
        }
        replicates_ = value.boot.size();
        shaped_ = true;
    }
    entries_[key] += value;
    arity_ = key.arity();
}

AggTuple DataCube::lookup(const CubeKey& key) const {
    check_arity(key);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;
    AggTuple identity;
    identity.boot.resize(replicates_);
    return identity;
}

DataCube DataCube::merge(const DataCube& a, const DataCube& b) {
    DataCube out = a;
    for (const auto& [key, value] : b) out.accumulate(key, value);
    return out;
}

AggTuple cube_lookup(const DataCube& cube, const CubeKey& key) { return cube.lookup(key); }

std::vector<std::vector<ClickRecord>> shard(std::span<const ClickRecord> records, std::size_t K) {
    return shard_by(records, K, [](const ClickRecord& r) -> std::string_view { return r.click_id; });
}

}  // namespace clickcube
