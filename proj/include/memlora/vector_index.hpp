#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/memory_bank.hpp"

namespace memlora {

struct QueryResult {
    MemoryId id = 0;
    double distance = 0.0; // Euclidean, >= 0

    friend bool operator==(const QueryResult&, const QueryResult&) = default;
};

// Exact brute-force Euclidean index keyed by memory id. The first upsert
// fixes the dimension. Value type: copy it to take a snapshot.
class VectorIndex {
public:
    static constexpr int kFormatVersion = 1;
    static constexpr std::size_t kDefaultK = 10;

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    bool contains(MemoryId id) const { return records_.count(id) != 0; }
    std::vector<MemoryId> ids() const;
    const std::vector<double>* vector(MemoryId id) const;

    // Throws DimensionError on mismatch and std::invalid_argument on
    // NaN/Inf components or an empty vector.
    void upsert(MemoryId id, std::span<const double> vector);

    // Returns false (and logs) when the id is unknown.
    bool remove(MemoryId id);

    // min(k, size()) nearest records, ascending distance, ties by id.
    std::vector<QueryResult> search_knn(std::span<const double> query, std::size_t k) const;

    // JSON Lines: header {format_version, dimension, count} and one
    // {id, vector} per record. Doubles print in shortest round-trip form.
    std::string persist() const;
    static VectorIndex load(std::string_view bytes);

    friend bool operator==(const VectorIndex&, const VectorIndex&) = default;

private:
    std::size_t dimension_ = 0;
    std::map<MemoryId, std::vector<double>> records_;
};

} // namespace memlora
