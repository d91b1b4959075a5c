#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "memlora/errors.hpp"
#include "memlora/vector_index.hpp"

using namespace memlora;

namespace {

// Linear scan, sorted by (distance, id).
std::vector<QueryResult> scan(const VectorIndex& index, const std::vector<double>& q, std::size_t k) {
    std::vector<std::pair<double, MemoryId>> all;
    for (MemoryId id : index.ids()) {
        const auto& v = *index.vector(id);
        double s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - q[i]) * (v[i] - q[i]);
        all.emplace_back(s, id);
    }
    std::sort(all.begin(), all.end());
    all.resize(std::min(k, all.size()));
    std::vector<QueryResult> out;
    for (auto& [d, id] : all) out.push_back({id, std::sqrt(d)});
    return out;
}

} // namespace

TEST(VectorIndex, FirstUpsertFixesDimension) {
    VectorIndex index;
    index.upsert(1, std::vector<double>{1, 2, 3});
    EXPECT_EQ(index.dimension(), 3u);
    EXPECT_THROW(index.upsert(2, std::vector<double>{1, 2}), DimensionError);
    EXPECT_THROW(index.search_knn(std::vector<double>{1, 2}, 3), DimensionError);
    EXPECT_THROW(index.upsert(3, std::vector<double>{1, NAN, 3}), std::invalid_argument);
    EXPECT_THROW(index.upsert(3, std::vector<double>{}), std::invalid_argument);
}

TEST(VectorIndex, UpsertReplacesAndRemoveForgets) {
    VectorIndex index;
    index.upsert(1, std::vector<double>{0, 0});
    index.upsert(1, std::vector<double>{3, 4});
    EXPECT_EQ(index.size(), 1u);
    const auto hits = index.search_knn(std::vector<double>{0, 0}, 5);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_DOUBLE_EQ(hits[0].distance, 5.0);
    EXPECT_TRUE(index.remove(1));
    EXPECT_FALSE(index.remove(1));
    EXPECT_TRUE(index.search_knn(std::vector<double>{0, 0}, 5).empty());
}

TEST(VectorIndex, TiesBreakByAscendingId) {
    VectorIndex index;
    index.upsert(9, std::vector<double>{1, 0});
    index.upsert(2, std::vector<double>{-1, 0});
    index.upsert(5, std::vector<double>{0, 1});
    index.upsert(7, std::vector<double>{0, 2});
    const auto hits = index.search_knn(std::vector<double>{0, 0}, 3);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].id, 2u);
    EXPECT_EQ(hits[1].id, 5u);
    EXPECT_EQ(hits[2].id, 9u);
}

TEST(VectorIndex, PersistRoundTripsExactly) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    VectorIndex index;
    for (MemoryId id = 0; id < 50; ++id) {
        std::vector<double> v(7);
        for (auto& x : v) x = g(rng) * 1e-3;
        index.upsert(id * 3, v);
    }
    const auto bytes = index.persist();
    const auto loaded = VectorIndex::load(bytes);
    EXPECT_EQ(loaded, index);
    EXPECT_EQ(loaded.persist(), bytes);
    EXPECT_THROW(VectorIndex::load(bytes.substr(0, bytes.size() / 2)), DecodeError);
}

TEST(VectorIndexProperty, MatchesLinearScan) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 64)(rng);
        const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 1000)(rng);
        // Small integer grids make exact ties common.
        const bool grid = trial % 2 == 0;
        std::uniform_int_distribution<int> cell(-2, 2);
        std::normal_distribution<double> g;
        auto draw = [&] {
            std::vector<double> v(dim);
            for (auto& x : v) x = grid ? cell(rng) : g(rng);
            return v;
        };
        VectorIndex index;
        std::uniform_int_distribution<MemoryId> id(0, 5000);
        for (std::size_t i = 0; i < n; ++i) index.upsert(id(rng), draw());
        if (index.empty()) continue;
        const auto q = draw();
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 20)(rng);
        const auto got = index.search_knn(q, k);
        const auto want = scan(index, q, k);
        ASSERT_EQ(got.size(), want.size()) << "trial " << trial;
        for (std::size_t i = 0; i < got.size(); ++i) {
            ASSERT_EQ(got[i].id, want[i].id) << "trial " << trial << " rank " << i;
            ASSERT_NEAR(got[i].distance, want[i].distance, 1e-9 * (1 + want[i].distance));
        }
    }
}
