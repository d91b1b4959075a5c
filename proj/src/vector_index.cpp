#include "memlora/vector_index.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "memlora/errors.hpp"

namespace memlora {

std::vector<MemoryId> VectorIndex::ids() const {
    std::vector<MemoryId> out;
    out.reserve(records_.size());
    for (const auto& [id, vec] : records_) out.push_back(id);
    return out;
}

const std::vector<double>* VectorIndex::vector(MemoryId id) const {
    auto it = records_.find(id);
    return it == records_.end() ? nullptr : &it->second;
}

void VectorIndex::upsert(MemoryId id, std::span<const double> vector) {
    if (vector.empty()) throw std::invalid_argument("embedding vector is empty");
    for (double v : vector) {
        if (!std::isfinite(v)) throw std::invalid_argument("embedding has a non-finite component");
    }
    if (dimension_ == 0) {
        dimension_ = vector.size();
    } else if (vector.size() != dimension_) {
        throw DimensionError("vector of dimension " + std::to_string(vector.size()) +
                             " does not fit index of dimension " + std::to_string(dimension_));
    }
    records_[id].assign(vector.begin(), vector.end());
}

bool VectorIndex::remove(MemoryId id) {
    if (records_.erase(id) == 0) {
        spdlog::debug("vector index: remove of unknown id {} ignored", id);
        return false;
    }
    return true;
}

std::vector<QueryResult> VectorIndex::search_knn(std::span<const double> query, std::size_t k) const {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    if (records_.empty()) return {};
    if (query.size() != dimension_) {
        throw DimensionError("query of dimension " + std::to_string(query.size()) +
                             " does not fit index of dimension " + std::to_string(dimension_));
    }

    struct Candidate {
        double squared;
        MemoryId id;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(records_.size());
    for (const auto& [id, vec] : records_) {
        double sum = 0.0;
        for (std::size_t d = 0; d < dimension_; ++d) {
            const double diff = vec[d] - query[d];
            sum += diff * diff;
        }
        candidates.push_back({sum, id});
    }

    const std::size_t take = std::min(k, candidates.size());
    auto closer = [](const Candidate& a, const Candidate& b) {
        return a.squared < b.squared || (a.squared == b.squared && a.id < b.id);
    };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                      candidates.end(), closer);

    std::vector<QueryResult> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back({candidates[i].id, std::sqrt(candidates[i].squared)});
    }
    return out;
}

std::string VectorIndex::persist() const {
    std::string out;
    nlohmann::ordered_json header;
    header["format_version"] = kFormatVersion;
    header["dimension"] = dimension_;
    header["count"] = records_.size();
    out += header.dump();
    out += '\n';
    for (const auto& [id, vec] : records_) {
        nlohmann::ordered_json line;
        line["id"] = id;
        line["vector"] = vec;
        out += line.dump();
        out += '\n';
    }
    return out;
}

VectorIndex VectorIndex::load(std::string_view bytes) {
    if (bytes.empty() || bytes.back() != '\n') throw DecodeError("index payload is truncated");

    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start < bytes.size();) {
        auto end = bytes.find('\n', start);
        lines.push_back(bytes.substr(start, end - start));
        start = end + 1;
    }

    auto parse = [](std::string_view line) {
        auto value = nlohmann::json::parse(line, nullptr, false);
        if (value.is_discarded() || !value.is_object()) throw DecodeError("index line is not a JSON object");
        return value;
    };

    VectorIndex index;
    try {
        auto header = parse(lines.front());
        if (header.at("format_version").get<int>() != kFormatVersion) {
            throw DecodeError("unsupported index format_version");
        }
        const auto dimension = header.at("dimension").get<std::size_t>();
        const auto count = header.at("count").get<std::size_t>();
        if (lines.size() - 1 != count) throw DecodeError("index record count mismatch");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            auto line = parse(lines[i]);
            auto id = line.at("id").get<MemoryId>();
            auto vec = line.at("vector").get<std::vector<double>>();
            if (vec.size() != dimension) throw DecodeError("index record has wrong dimension");
            if (index.records_.count(id)) throw DecodeError("duplicate id in index");
            index.upsert(id, vec);
        }
        index.dimension_ = dimension;
    } catch (const nlohmann::json::exception& e) {
        throw DecodeError(std::string("malformed index payload: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw DecodeError(std::string("invalid index record: ") + e.what());
    }
    return index;
}

} // namespace memlora
