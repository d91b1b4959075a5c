#include "memlora/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <utility>

#include <spdlog/spdlog.h>

namespace memlora {

StageError::StageError(Stage stage, const std::string& detail, std::string raw_text,
                       std::optional<ParseErrorKind> parse_kind, std::optional<BackendErrorKind> backend_kind)
    : Error(std::string(to_string(stage)) + " stage failed: " + detail),
      stage_(stage),
      raw_text_(std::move(raw_text)),
      parse_kind_(parse_kind),
      backend_kind_(backend_kind) {}

void PipelineConfig::validate() const {
    if (retrieval_k < 1) throw ConfigError("retrieval_k must be at least 1");
    if (update_context_cap < 1) throw ConfigError("update_context_cap must be at least 1");
    if (model.empty()) throw ConfigError("model must be nonempty");
    for (const auto& [stage, tokens] : max_output_tokens)
        if (tokens < 1) throw ConfigError("max_output_tokens for " + std::string(to_string(stage)) + " must be positive");
    for (const auto& [stage, name] : adapters)
        if (name.empty()) throw ConfigError("adapter name for " + std::string(to_string(stage)) + " is empty");
}

AdapterHandle PipelineConfig::adapter_for(Stage stage) const {
    AdapterHandle handle{stage, std::nullopt};
    if (auto it = adapters.find(stage); it != adapters.end()) handle.adapter_name = it->second;
    return handle;
}

int PipelineConfig::max_tokens_for(Stage stage) const {
    if (auto it = max_output_tokens.find(stage); it != max_output_tokens.end()) return it->second;
    return default_max_output_tokens(stage);
}

const PromptCatalog& PipelineConfig::prompts() const { return catalog ? *catalog : PromptCatalog::builtin(); }

double ConversationResult::total_latency_seconds() const {
    return std::accumulate(traces.begin(), traces.end(), 0.0,
                           [](double acc, const StageTrace& t) { return acc + t.latency_seconds; });
}

MemoryPipeline::MemoryPipeline(Backend& backend, PipelineConfig config) : backend_(backend), config_(std::move(config)) {
    config_.validate();
}

GenerationResponse MemoryPipeline::call(Stage stage, std::vector<Message> messages,
                                        std::vector<StageTrace>* traces) const {
    GenerationRequest request;
    request.model = config_.model;
    request.adapter = config_.adapter_for(stage);
    request.messages = std::move(messages);
    request.temperature = 0.0;
    request.max_output_tokens = config_.max_tokens_for(stage);
    auto response = backend_.generate(request);
    if (traces)
        traces->push_back({stage, response.prompt_tokens, response.completion_tokens, response.latency_seconds,
                           request.adapter.adapter_name});
    return response;
}

template <typename Result, typename Parser>
Result MemoryPipeline::call_and_parse(Stage stage, std::vector<Message> messages, Parser parse,
                                      std::vector<StageTrace>* traces) const {
    try {
        auto first = call(stage, messages, traces);
        try {
            return parse(first.text);
        } catch (const ParseError& e) {
            spdlog::warn("{} output unparseable ({}), asking once more", to_string(stage), e.what());
        }
        messages.push_back({Role::Assistant, first.text, std::nullopt});
        messages.push_back({Role::User, std::string(kReformatRequest), std::nullopt});
        auto second = call(stage, std::move(messages), traces);
        try {
            return parse(second.text);
        } catch (const ParseError& e) {
            throw StageError(stage, e.what(), second.text, e.kind());
        }
    } catch (const BackendError& e) {
        if (e.kind() == BackendErrorKind::Capability) throw;
        throw StageError(stage, e.what(), {}, std::nullopt, e.kind());
    }
}

std::vector<std::vector<double>> MemoryPipeline::embed(const std::vector<std::string>& texts) const {
    if (texts.empty()) return {};
    auto response = backend_.embed({config_.embedding_model, texts});
    check_embedding_response({config_.embedding_model, texts}, response);
    return std::move(response.vectors);
}

KnowledgeFacts MemoryPipeline::run_extraction(std::string_view conversation_window,
                                              std::vector<StageTrace>* traces) const {
    const auto prompt = render_extraction(config_.variant, conversation_window, config_.today, config_.prompts());
    return call_and_parse<KnowledgeFacts>(
        Stage::Extraction, {{Role::User, prompt, std::nullopt}},
        [](const std::string& raw) { return parse_facts(raw).facts; }, traces);
}

std::vector<MemoryEntry> MemoryPipeline::retrieve_for_update(const MemoryState& state,
                                                             const KnowledgeFacts& facts) const {
    if (state.index.empty() || facts.empty()) return {};
    const auto vectors = embed(facts.facts);
    std::map<MemoryId, double> best;
    for (const auto& v : vectors) {
        for (const auto& hit : state.index.search_knn(v, config_.retrieval_k)) {
            auto [it, inserted] = best.emplace(hit.id, hit.distance);
            if (!inserted) it->second = std::min(it->second, hit.distance);
        }
    }
    std::vector<std::pair<double, MemoryId>> ranked;
    for (const auto& [id, d] : best) ranked.emplace_back(d, id);
    std::sort(ranked.begin(), ranked.end());
    if (ranked.size() > config_.update_context_cap) ranked.resize(config_.update_context_cap);

    std::vector<MemoryId> ids;
    for (const auto& [d, id] : ranked) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    std::vector<MemoryEntry> out;
    for (auto id : ids)
        if (const auto* e = state.bank.find(id)) out.push_back(*e);
    return out;
}

std::vector<std::string> MemoryPipeline::retrieve_for_question(const MemoryState& state,
                                                               std::string_view question) const {
    if (state.index.empty()) return {};
    const auto vectors = embed({std::string(question)});
    std::vector<std::string> out;
    for (const auto& hit : state.index.search_knn(vectors.front(), config_.retrieval_k))
        if (const auto* e = state.bank.find(hit.id)) out.push_back(e->text);
    return out;
}

ApplyLog MemoryPipeline::commit_ops(MemoryState& state, const ParsedOps& parsed) const {
    auto result = apply_ops(state.bank, parsed.ops);
    ApplyLog log;
    log.records = parsed.dropped;
    log.records.insert(log.records.end(), result.log.records.begin(), result.log.records.end());
    log.changes = result.log.changes;

    std::vector<std::string> texts;
    for (const auto& change : log.changes)
        if (change.event != MemoryEvent::Delete) texts.push_back(change.text);
    const auto vectors = embed(texts);

    VectorIndex index = state.index;
    std::size_t next_vector = 0;
    for (const auto& change : log.changes) {
        if (change.event == MemoryEvent::Delete)
            index.remove(change.id);
        else
            index.upsert(change.id, vectors[next_vector++]);
    }
    if (index.ids() != result.bank.ids()) throw std::logic_error("bank and index id sets diverged after update");

    state.bank = std::move(result.bank);
    state.index = std::move(index);
    return log;
}

ApplyLog MemoryPipeline::run_update(MemoryState& state, const KnowledgeFacts& facts,
                                    std::vector<StageTrace>* traces) const {
    if (facts.empty()) return {};
    try {
        const auto context = retrieve_for_update(state, facts);
        const auto prompt = render_update(config_.variant, context, facts, config_.prompts());
        const auto parsed = call_and_parse<ParsedOps>(
            Stage::Update, {{Role::User, prompt, std::nullopt}},
            [](const std::string& raw) { return parse_memory_ops(raw); }, traces);
        return commit_ops(state, parsed);
    } catch (const BackendError& e) {
        // Embedding failures: the state has not been touched yet.
        throw StageError(Stage::Update, e.what(), {}, std::nullopt, e.kind());
    }
}

std::string MemoryPipeline::run_generation(const MemoryState& state, std::string_view question,
                                           std::vector<StageTrace>* traces) const {
    const auto memories = retrieve_for_question(state, question);
    const auto prompt = render_generation(question, memories, config_.prompts());
    return call(Stage::Generation, {{Role::User, prompt, std::nullopt}}, traces).text;
}

VqaAnswer MemoryPipeline::answer_vqa(const ImagePayload& image, std::string_view question,
                                     std::vector<StageTrace>* traces) const {
    if (!backend_.supports_vision())
        throw BackendError(BackendErrorKind::Capability, "backend cannot take images for the vqa stage");
    const auto prompt = render_vqa(question, config_.prompts());
    return call_and_parse<VqaAnswer>(
        Stage::VqaGeneration, {{Role::User, prompt, image}},
        [](const std::string& raw) { return parse_vqa_answer(raw); }, traces);
}

ConversationResult MemoryPipeline::run_conversation(const Conversation& conversation, const std::string& run_id) const {
    ConversationResult result;
    result.state.bank = MemoryBank(run_id);
    try {
        for (const auto& window : turn_windows(conversation)) {
            ++result.windows;
            const auto facts = run_extraction(window.text, &result.traces);
            if (facts.empty()) continue;
            run_update(result.state, facts, &result.traces);
            ++result.updates;
        }
    } catch (StageError& e) {
        e.partial_traces = result.traces;
        throw;
    }
    spdlog::info("conversation {}: {} windows, {} updates, {} memories", conversation.conversation_id,
                 result.windows, result.updates, result.state.bank.size());
    return result;
}

} // namespace memlora
