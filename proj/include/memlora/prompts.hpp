#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/backend.hpp"
#include "memlora/memory_bank.hpp"

namespace memlora {

// MEM0: the long instruction prompts of the original memory system.
// MEMLORA: the reduced prompts used with trained expert adapters.
enum class PromptVariant { Mem0, MemLora };

std::string_view to_string(PromptVariant variant);
std::optional<PromptVariant> prompt_variant_from_string(std::string_view text);

// Placeholders are `{identifier}`. Anything else in braces, including the
// doubled `{{ }}` of the JSON examples, is literal text.
struct PromptTemplate {
    std::string name;
    std::optional<PromptVariant> variant;
    std::optional<Stage> stage;
    std::string body;
    std::uint64_t checksum = 0; // fnv1a64(body)

    std::vector<std::string> placeholders() const; // sorted, unique
};

namespace templates {
inline constexpr std::string_view kExtractionMem0 = "extraction.mem0";
inline constexpr std::string_view kExtractionMemLora = "extraction.memlora";
inline constexpr std::string_view kUpdateMem0 = "update.mem0";
inline constexpr std::string_view kUpdateMemLora = "update.memlora";
inline constexpr std::string_view kGeneration = "generation";
inline constexpr std::string_view kVqaAnswer = "vqa.answer";
inline constexpr std::string_view kVqaTeacher = "vqa.teacher";
inline constexpr std::string_view kJudge = "judge";
} // namespace templates

// Immutable set of templates. The built-in catalog verifies every body
// against its recorded checksum when first used.
class PromptCatalog {
public:
    static const PromptCatalog& builtin();

    // Replaces templates with `<name>.txt` files found in `dir`. An override
    // must use exactly the placeholders of the template it replaces.
    PromptCatalog with_overrides(const std::filesystem::path& dir) const;

    const PromptTemplate& get(std::string_view name) const;
    std::vector<std::string> names() const;

private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

using PromptBindings = std::map<std::string, std::string, std::less<>>;

// Single pass: substituted values are never rescanned for placeholders.
std::string render(const PromptTemplate& tmpl, const PromptBindings& bindings);

// `today` (YYYY-MM-DD) is only used by the MEM0 template; the caller owns
// the clock.
std::string render_extraction(PromptVariant variant, std::string_view conversation_window,
                              const std::optional<std::string>& today = std::nullopt,
                              const PromptCatalog& catalog = PromptCatalog::builtin());

std::string render_update(PromptVariant variant, std::span<const MemoryEntry> old_memories,
                          const KnowledgeFacts& new_facts, const PromptCatalog& catalog = PromptCatalog::builtin());

// `memories` in retrieval rank order, best first.
std::string render_generation(std::string_view question, std::span<const std::string> memories,
                              const PromptCatalog& catalog = PromptCatalog::builtin());

std::string render_vqa(std::string_view question, const PromptCatalog& catalog = PromptCatalog::builtin());

std::string render_judge(std::string_view question, std::string_view gold_answer, std::string_view generated_answer,
                         const PromptCatalog& catalog = PromptCatalog::builtin());

// Question-generation prompt for one of the eight instruction types (1-based).
std::string render_vqa_teacher(int instruction_index, const PromptCatalog& catalog = PromptCatalog::builtin());

// [{"id": "0", "text": "..."}, ...] with four-space indentation, ids quoted.
std::string render_old_memories(std::span<const MemoryEntry> memories);
// ["fact", ...]
std::string render_fact_list(const KnowledgeFacts& facts);

struct VqaInstruction {
    int index;
    std::string_view text;
};

const std::array<VqaInstruction, 8>& vqa_instructions();

} // namespace memlora
