#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memlora/backend.hpp"
#include "memlora/corpus.hpp"
#include "memlora/distill.hpp"

namespace memlora {

inline constexpr std::size_t kInstructionTypes = 8;
inline constexpr std::size_t kSelectedTypes = 3;

struct InstructionRanking {
    std::array<std::optional<double>, kInstructionTypes> accuracy; // absent: nothing scored
    std::array<std::size_t, kInstructionTypes> scored{};
    std::array<std::size_t, kInstructionTypes> skipped{};
    std::vector<int> selected; // 1-based types, lowest accuracy first
};

// The three lowest accuracies, ties to the lower index. Types without an
// accuracy are never selected.
std::vector<int> select_hardest_types(const std::array<std::optional<double>, kInstructionTypes>& accuracy);

struct ForgeImage {
    std::string path;
    std::string hash; // SHA-256 of the bytes
    ImagePayload payload;
    std::string split;
};

struct ForgeBackends {
    Backend& teacher;
    std::string teacher_model = "teacher";
    Backend& validator;
    std::string validator_model = "validator";
};

struct VqaBenchItem {
    std::string image_hash;
    std::string image_path;
    int type = 0;
    std::string question;
    std::string answer; // normalized single word
    std::string reason;
    std::string split;

    friend bool operator==(const VqaBenchItem&, const VqaBenchItem&) = default;
};

// One teacher item for (image, type). A reply that does not parse or whose
// answer is not a single word is asked for again once; nullopt after that.
std::optional<VqaBenchItem> generate_item(const ForgeImage& image, int type, Backend& teacher,
                                          const std::string& teacher_model,
                                          const PromptCatalog& catalog = PromptCatalog::builtin());

// For each instruction type: teacher items on the validation images, then
// the validator answers them; accuracy is the exact-match rate.
InstructionRanking rank_instruction_types(std::span<const ForgeImage> validation_images, const ForgeBackends& backends,
                                          const PromptCatalog& catalog = PromptCatalog::builtin());

struct ForgeSet {
    std::vector<VqaBenchItem> items;
    std::size_t dropped = 0;
};

ForgeSet generate_vqa_set(std::span<const ForgeImage> images, const std::vector<int>& types, Backend& teacher,
                          const std::string& teacher_model, const PromptCatalog& catalog = PromptCatalog::builtin(),
                          std::size_t jobs = 1);

// Removes every item whose image hash occurs in more than one split.
std::vector<VqaBenchItem> dedup_across_splits(const std::vector<VqaBenchItem>& items);

// Turn images of every conversation tagged with its split; repeated content
// within a split is kept once.
std::vector<ForgeImage> collect_split_images(const Corpus& corpus, const ConversationSplit& split);

// {image_hash, image_path, type, question, answer, reason, split} per line.
std::string benchmark_to_jsonl(const std::vector<VqaBenchItem>& items);

struct ForgeReport {
    InstructionRanking ranking;
    std::vector<VqaBenchItem> items;
    std::size_t dropped = 0;
    std::size_t removed_by_dedup = 0;
};

ForgeReport run_vqa_forge(const Corpus& corpus, const ForgeBackends& backends,
                          const PromptCatalog& catalog = PromptCatalog::builtin(), std::size_t jobs = 1);

} // namespace memlora
