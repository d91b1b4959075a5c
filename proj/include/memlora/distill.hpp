#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/corpus.hpp"
#include "memlora/pipeline.hpp"

namespace memlora {

struct ConversationSplit {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

// Orders ids with embedded numbers by value, so "C2" < "C10".
bool natural_less(std::string_view a, std::string_view b);

// Sorts ids naturally; the first ~10% go to validation, the next ~20% to
// test and the rest to training (each at least one conversation). Ten
// conversations C1..C10 give val {C1}, test {C2, C3}, train {C4..C10}.
// Throws DataError for fewer than three conversations or repeated ids.
ConversationSplit split_dataset(std::vector<std::string> conversation_ids);

enum class Provenance { TeacherOutput, GroundTruth };

std::string_view to_string(Provenance provenance);

struct TrainingExample {
    Stage stage = Stage::Extraction;
    std::string input;
    std::string target;
    Provenance provenance = Provenance::TeacherOutput;
    std::string conversation_id;

    friend bool operator==(const TrainingExample&, const TrainingExample&) = default;
};

struct DistillResult {
    std::vector<TrainingExample> examples;
    std::size_t dropped = 0;
};

// Teacher banks built while generating update data, keyed by conversation.
using TeacherBanks = std::map<std::string, MemoryState>;

// Teacher calls use the reduced prompts and the teacher's base model; a reply
// that does not parse drops that example.
DistillResult gen_teacher_extraction(const std::vector<const Conversation*>& conversations,
                                     const MemoryPipeline& teacher);

// Chains extraction into update per conversation. The uncleaned teacher ops
// are applied to the teacher bank; the targets keep only non-NONE ops.
DistillResult gen_teacher_update(const std::vector<const Conversation*>& conversations, const MemoryPipeline& teacher,
                                 TeacherBanks* banks_out = nullptr);

// Inputs retrieve from the frozen teacher bank; targets are gold answers.
DistillResult gen_generation_targets(const std::vector<const Conversation*>& conversations,
                                     const TeacherBanks& banks, const MemoryPipeline& pipeline);

DistillResult gen_vqa_targets(const std::vector<const Conversation*>& conversations, const Corpus& corpus,
                              const PromptCatalog& catalog = PromptCatalog::builtin());

// One JSON object per line: {stage, input, target, provenance, conversation_id}.
std::string examples_to_jsonl(const std::vector<TrainingExample>& examples);

struct DistillOutput {
    std::map<std::string, std::filesystem::path> files; // split -> path
    std::map<std::string, std::size_t> counts;
    std::map<std::string, std::size_t> dropped;
};

// Writes `{stage}.train.examples` and `{stage}.val.examples` into out_dir.
DistillOutput distill_stage(const Corpus& corpus, Stage stage, const MemoryPipeline& teacher,
                            const std::filesystem::path& out_dir);

std::vector<const Conversation*> select_conversations(const Corpus& corpus, const std::vector<std::string>& ids);

} // namespace memlora
