#include "memlora/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "memlora/errors.hpp"
#include "memlora/parse.hpp"
#include "memlora/stemmer.hpp"

namespace memlora {

std::vector<std::string> metric_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            current.push_back(static_cast<char>(std::tolower(u)));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

double rouge1_f(std::string_view candidate, std::string_view reference, bool* empty_input) {
    const auto cand = metric_tokens(candidate);
    const auto ref = metric_tokens(reference);
    if (empty_input) *empty_input = cand.empty() || ref.empty();
    if (cand.empty() || ref.empty()) return 0.0;

    std::map<std::string, int> ref_counts;
    for (const auto& t : ref) ++ref_counts[t];
    std::map<std::string, int> cand_counts;
    for (const auto& t : cand) ++cand_counts[t];
    int overlap = 0;
    for (const auto& [t, n] : cand_counts)
        if (auto it = ref_counts.find(t); it != ref_counts.end()) overlap += std::min(n, it->second);
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

double meteor(std::string_view candidate, std::string_view reference) {
    const auto cand = metric_tokens(candidate);
    const auto ref = metric_tokens(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    std::vector<int> cand_to_ref(cand.size(), -1);
    std::vector<bool> ref_used(ref.size(), false);

    auto align = [&](auto&& same) {
        for (std::size_t i = 0; i < cand.size(); ++i) {
            if (cand_to_ref[i] >= 0) continue;
            // Continue the previous word's chunk when possible, otherwise take
            // the leftmost free reference word.
            int chosen = -1;
            if (i > 0 && cand_to_ref[i - 1] >= 0) {
                const auto next = static_cast<std::size_t>(cand_to_ref[i - 1] + 1);
                if (next < ref.size() && !ref_used[next] && same(i, next)) chosen = static_cast<int>(next);
            }
            for (std::size_t j = 0; chosen < 0 && j < ref.size(); ++j)
                if (!ref_used[j] && same(i, j)) chosen = static_cast<int>(j);
            if (chosen >= 0) {
                cand_to_ref[i] = chosen;
                ref_used[static_cast<std::size_t>(chosen)] = true;
            }
        }
    };
    align([&](std::size_t i, std::size_t j) { return cand[i] == ref[j]; });
    std::vector<std::string> cand_stems, ref_stems;
    for (const auto& t : cand) cand_stems.push_back(porter_stem(t));
    for (const auto& t : ref) ref_stems.push_back(porter_stem(t));
    align([&](std::size_t i, std::size_t j) { return cand_stems[i] == ref_stems[j]; });

    int matches = 0;
    int chunks = 0;
    int prev_ref = -2;
    bool prev_matched = false;
    for (std::size_t i = 0; i < cand.size(); ++i) {
        const int j = cand_to_ref[i];
        if (j < 0) {
            prev_matched = false;
            continue;
        }
        ++matches;
        if (!(prev_matched && j == prev_ref + 1)) ++chunks;
        prev_ref = j;
        prev_matched = true;
    }
    if (matches == 0) return 0.0;

    const double p = static_cast<double>(matches) / static_cast<double>(cand.size());
    const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
    const double fmean = 10.0 * p * r / (r + 9.0 * p);
    const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
    const double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("cosine of vectors with different dimensions");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double token_match_f1(const std::vector<std::vector<double>>& candidate,
                      const std::vector<std::vector<double>>& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    auto directed = [](const auto& from, const auto& to) {
        double total = 0.0;
        for (const auto& f : from) {
            double best = -1.0;
            for (const auto& t : to) best = std::max(best, cosine_similarity(f, t));
            total += best;
        }
        return total / static_cast<double>(from.size());
    };
    const double p = directed(candidate, reference);
    const double r = directed(reference, candidate);
    if (p + r <= 0.0) return 0.0;
    return std::clamp(2.0 * p * r / (p + r), 0.0, 1.0);
}

SemanticScores semantic_sim(std::string_view candidate, std::string_view reference, Backend& backend,
                            const std::string& embedding_model) {
    SemanticScores scores;
    if (trim(candidate).empty() || trim(reference).empty()) {
        // Nothing to embed: no similarity, but not a backend failure either.
        scores.sbert_sim = 0.0;
        if (backend.supports_token_embeddings()) scores.bertscore_f1 = 0.0;
        return scores;
    }
    const EmbeddingRequest request{embedding_model, {std::string(candidate), std::string(reference)}};
    try {
        const auto sentence = backend.embed(request);
        check_embedding_response(request, sentence);
        scores.sbert_sim = std::clamp(cosine_similarity(sentence.vectors[0], sentence.vectors[1]), 0.0, 1.0);
        if (backend.supports_token_embeddings()) {
            const auto tokens = backend.embed_tokens(request);
            if (tokens.tokens.size() != 2) throw BackendError(BackendErrorKind::MalformedBody, "token embedding count");
            scores.bertscore_f1 = token_match_f1(tokens.tokens[0], tokens.tokens[1]);
        }
    } catch (const Error& e) {
        spdlog::warn("semantic similarity unavailable: {}", e.what());
        return SemanticScores{std::nullopt, std::nullopt, true};
    }
    return scores;
}

} // namespace memlora
