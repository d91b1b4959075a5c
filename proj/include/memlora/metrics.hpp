#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/backend.hpp"

namespace memlora {

// Lowercased maximal runs of ASCII letters and digits.
std::vector<std::string> metric_tokens(std::string_view text);

// Unigram F1 with clipped counts. `empty_input` is set when either side has
// no tokens (the score is then 0).
double rouge1_f(std::string_view candidate, std::string_view reference, bool* empty_input = nullptr);

// METEOR with exact and Porter-stem matching stages (no synonym stage).
// Fmean = 10PR / (R + 9P), penalty = 0.5 (chunks / matches)^3.
double meteor(std::string_view candidate, std::string_view reference);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

// Greedy token matching F1 over token embeddings, clamped to [0, 1].
double token_match_f1(const std::vector<std::vector<double>>& candidate,
                      const std::vector<std::vector<double>>& reference);

struct SemanticScores {
    std::optional<double> sbert_sim;    // sentence cosine clamped to [0, 1]
    std::optional<double> bertscore_f1; // only with per-token embeddings
    bool failed = false;                // backend error, both absent
};

SemanticScores semantic_sim(std::string_view candidate, std::string_view reference, Backend& backend,
                            const std::string& embedding_model);

} // namespace memlora
