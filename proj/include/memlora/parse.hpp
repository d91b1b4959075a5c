#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memlora/memory_bank.hpp"

namespace memlora {

// Returns the last balanced top-level object in `raw` that has
// `required_key` as a member. Braces inside JSON strings are ignored, an
// unclosed brace restarts the scan one character later, and objects written
// with doubled `{{ }}` delimiters are accepted.
nlohmann::json extract_final_json(std::string_view raw, std::string_view required_key);

struct ParsedFacts {
    KnowledgeFacts facts;
};

// Duplicate ids keep the last op; the dropped ones are reported here so the
// caller can carry them into its ApplyLog.
struct ParsedOps {
    std::vector<MemoryOp> ops;
    std::vector<ApplyRecord> dropped;
};

enum class JudgeLabel { Correct, Wrong };

std::string_view to_string(JudgeLabel label);

struct VqaAnswer {
    std::string answer; // normalized single token
    std::string reason;
};

// Teacher-generated benchmark item before any normalization.
struct VqaItem {
    std::string question;
    std::string answer;
    std::string reason;
};

ParsedFacts parse_facts(std::string_view raw);
ParsedOps parse_memory_ops(std::string_view raw);

// Drops NONE ops, keeping the remaining order: the training target for the
// update stage only carries changes caused by the new facts.
ParsedOps clean_update_target(const ParsedOps& parsed);

JudgeLabel parse_judge_label(std::string_view raw);
VqaAnswer parse_vqa_answer(std::string_view raw);
VqaItem parse_vqa_item(std::string_view raw);

// Lowercase, trim, keep the first whitespace-delimited token, strip trailing
// punctuation.
std::string normalize_vqa_answer(std::string_view answer);
bool is_single_word(std::string_view answer);

// Compact JSON in the form Python's json.dumps produces (", " and ": "
// separators, non-ASCII kept as UTF-8). Used for training targets.
std::string python_style_dump(const nlohmann::ordered_json& value);

// {"facts": [...]}
std::string serialize_facts(const KnowledgeFacts& facts);
// {"memory": [{"id": "6", "text": "...", "event": "ADD"}, ...]}
std::string serialize_memory_ops(const std::vector<MemoryOp>& ops);

std::string trim(std::string_view text);
std::string to_lower_ascii(std::string_view text);

} // namespace memlora
