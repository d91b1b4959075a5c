#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/backend.hpp"
#include "memlora/corpus.hpp"
#include "memlora/errors.hpp"
#include "memlora/memory_bank.hpp"
#include "memlora/parse.hpp"
#include "memlora/prompts.hpp"
#include "memlora/vector_index.hpp"

namespace memlora {

struct StageTrace {
    Stage stage = Stage::Generation;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency_seconds = 0.0;
    std::optional<std::string> adapter_name;

    friend bool operator==(const StageTrace&, const StageTrace&) = default;
};

struct PipelineConfig {
    static constexpr std::size_t kDefaultUpdateContextCap = 20;

    PromptVariant variant = PromptVariant::MemLora;
    std::size_t retrieval_k = VectorIndex::kDefaultK;
    std::size_t update_context_cap = kDefaultUpdateContextCap;
    std::string model = "base";
    std::string embedding_model = "embedder";
    std::map<Stage, std::string> adapters;  // missing stage: base model
    std::map<Stage, int> max_output_tokens; // missing stage: stage default
    std::optional<std::string> today;       // YYYY-MM-DD, MEM0 prompts only
    const PromptCatalog* catalog = nullptr; // null: built-in templates

    void validate() const; // throws ConfigError
    AdapterHandle adapter_for(Stage stage) const;
    int max_tokens_for(Stage stage) const;
    const PromptCatalog& prompts() const;
};

// A bank and its index, kept with identical id sets.
struct MemoryState {
    MemoryBank bank;
    VectorIndex index;

    friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

// A stage that could not produce a usable result. Carries the model text
// that failed to parse (if any) and the traces recorded before the failure.
class StageError : public Error {
public:
    StageError(Stage stage, const std::string& detail, std::string raw_text = {},
               std::optional<ParseErrorKind> parse_kind = std::nullopt,
               std::optional<BackendErrorKind> backend_kind = std::nullopt);

    Stage stage() const noexcept { return stage_; }
    const std::string& raw_text() const noexcept { return raw_text_; }
    std::optional<ParseErrorKind> parse_kind() const noexcept { return parse_kind_; }
    std::optional<BackendErrorKind> backend_kind() const noexcept { return backend_kind_; }

    std::vector<StageTrace> partial_traces;

private:
    Stage stage_;
    std::string raw_text_;
    std::optional<ParseErrorKind> parse_kind_;
    std::optional<BackendErrorKind> backend_kind_;
};

struct ConversationResult {
    MemoryState state;
    std::vector<StageTrace> traces;
    std::size_t windows = 0;
    std::size_t updates = 0;

    double total_latency_seconds() const;
};

// Text sent after an unparseable reply, asking the model to try again.
inline constexpr std::string_view kReformatRequest =
    "Your previous reply could not be parsed. Reply again with only the JSON object in the requested format.";

// Runs the extraction -> update -> generation stages against one backend,
// routing each call to the stage's adapter. Holds no mutable state; a
// conversation's memory lives in the MemoryState the caller passes in.
class MemoryPipeline {
public:
    MemoryPipeline(Backend& backend, PipelineConfig config);

    const PipelineConfig& config() const noexcept { return config_; }
    Backend& backend() const noexcept { return backend_; }

    // One backend call for `stage`, recorded in `traces` when given.
    GenerationResponse call(Stage stage, std::vector<Message> messages, std::vector<StageTrace>* traces) const;

    KnowledgeFacts run_extraction(std::string_view conversation_window, std::vector<StageTrace>* traces = nullptr) const;

    // Atomic: on any failure `state` is left untouched.
    ApplyLog run_update(MemoryState& state, const KnowledgeFacts& facts,
                        std::vector<StageTrace>* traces = nullptr) const;

    std::string run_generation(const MemoryState& state, std::string_view question,
                               std::vector<StageTrace>* traces = nullptr) const;

    VqaAnswer answer_vqa(const ImagePayload& image, std::string_view question,
                         std::vector<StageTrace>* traces = nullptr) const;

    ConversationResult run_conversation(const Conversation& conversation, const std::string& run_id) const;

    // Union of the top-k memories of every fact, deduplicated, capped at
    // update_context_cap by best distance, returned in ascending id order.
    std::vector<MemoryEntry> retrieve_for_update(const MemoryState& state, const KnowledgeFacts& facts) const;

    // Texts of the top-k memories for a question, best first.
    std::vector<std::string> retrieve_for_question(const MemoryState& state, std::string_view question) const;

    // Applies parsed ops to the bank and mirrors the net changes into the
    // index. Atomic like run_update.
    ApplyLog commit_ops(MemoryState& state, const ParsedOps& parsed) const;

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const;

private:
    template <typename Result, typename Parser>
    Result call_and_parse(Stage stage, std::vector<Message> messages, Parser parse,
                          std::vector<StageTrace>* traces) const;

    Backend& backend_;
    PipelineConfig config_;
};

} // namespace memlora
