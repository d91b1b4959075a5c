#include "test_support.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "memlora/corpus.hpp"
#include "memlora/errors.hpp"
#include "memlora/evaluation.hpp"
#include "memlora/hashing.hpp"
#include "memlora/prompts.hpp"

namespace memlora::testing {

std::filesystem::path fixture_path(const std::string& relative) {
    return std::filesystem::path(MEMLORA_FIXTURES) / relative;
}

std::string read_fixture(const std::string& relative) { return read_file(fixture_path(relative)); }

const std::vector<std::string>& school_memories() {
    static const std::vector<std::string> memories = {
        "Name is John",
        "Passionate about improving infrastructure",
        "Shared a picture of a school after receiving funding",
        "Loves helping the community",
        "Wants schools and infrastructure to be properly funded",
        "Passionate about improving education",
    };
    return memories;
}

MemoryBank school_bank(const std::string& run_id) {
    MemoryBank bank(run_id);
    MemoryId id = 0;
    for (const auto& text : school_memories()) bank.insert(id++, text);
    return bank;
}

MemoryState school_state(const MemoryPipeline& pipeline, const std::string& run_id) {
    MemoryState state{school_bank(run_id), {}};
    const auto vectors = pipeline.embed(school_memories());
    for (std::size_t i = 0; i < vectors.size(); ++i) state.index.upsert(static_cast<MemoryId>(i), vectors[i]);
    return state;
}

MockScript mock_script(const nlohmann::json& script) { return MockScript::from_json(script.dump()); }

MockBackend mock_backend(const nlohmann::json& script) { return MockBackend(mock_script(script)); }

PipelineConfig golden_pipeline_config() {
    const auto app = AppConfig::from_json(read_fixture("golden/config.json"));
    return app.pipeline_config();
}

GoldenRun run_golden() {
    const auto corpus = load_corpus(fixture_path("golden/corpus.json"));
    MockBackend backend(MockScript::load_file(fixture_path("golden/mock_script.json").string()));
    MemoryPipeline pipeline(backend, golden_pipeline_config());

    const auto& conv = corpus.at("G1");
    const auto ingested = pipeline.run_conversation(conv, conv.conversation_id);

    QaEvalOptions options;
    options.judge_model = "base";
    const auto evaluated = full_pipeline_evaluate({&conv}, pipeline, backend, options);
    return {ingested.state.bank.snapshot(), ingested.state.index.persist(),
            qa_report_json(evaluated).dump(2) + "\n"};
}

Corpus synthetic_corpus(std::size_t n, bool with_vqa) {
    Corpus corpus;
    for (std::size_t k = 1; k <= n; ++k) {
        const std::string id = "C" + std::to_string(k);
        Conversation c;
        c.conversation_id = id;
        Session s;
        s.session_id = "S1";
        s.turns = {{"Ann", "What is new with you, " + id + "?", {}, "S1", 0},
                   {"Bob", "In " + id + " I adopted a cat named Tom" + std::to_string(k) + ".", {}, "S1", 1},
                   {"Ann", "Lovely.", {}, "S1", 2}};
        c.sessions.push_back(s);
        c.qa.push_back({id + ":q0", "What is the cat called?", "Tom" + std::to_string(k), "single-hop"});
        if (with_vqa) c.vqa.push_back({"img" + std::to_string(k) + ".png", "What animal?", "cat", "whiskers"});
        corpus.conversations.push_back(std::move(c));
    }
    return corpus;
}

nlohmann::json synthetic_teacher_script(std::size_t n) {
    nlohmann::json rules = nlohmann::json::array();
    for (std::size_t k = n; k >= 1; --k) {
        const std::string id = "C" + std::to_string(k);
        const std::string fact = id + " owner adopted cat Tom" + std::to_string(k);
        // Update before extraction: the update prompt quotes the facts.
        rules.push_back({{"stage", "update"},
                         {"contains", {"\"" + fact + "\""}},
                         {"response", nlohmann::json{{"memory",
                                                      {{{"id", "0"}, {"text", fact}, {"event", "ADD"}},
                                                       {{"id", "9"}, {"text", "unrelated"}, {"event", "NONE"}}}}}
                                          .dump()}});
        rules.push_back({{"stage", "extraction"},
                         {"contains", {"In " + id + " I adopted"}},
                         {"response", nlohmann::json{{"facts", {fact}}}.dump()}});
    }
    rules.push_back({{"stage", "extraction"}, {"response", R"({"facts": []})"}});
    return {{"rules", rules}};
}

std::vector<ForgeImage> forge_images(std::size_t n, const std::string& split) {
    std::vector<ForgeImage> images;
    for (std::size_t i = 0; i < n; ++i) {
        ImagePayload payload{"image-" + std::to_string(i), "image/png"};
        images.push_back({"img" + std::to_string(i) + ".png", sha256_hex(payload.bytes), payload, split});
    }
    return images;
}

nlohmann::json forge_teacher_script() {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& instruction : vqa_instructions()) {
        const auto question = "Q" + std::to_string(instruction.index) + "?";
        rules.push_back({{"stage", "vqa"},
                         {"contains", {"Instruction:\n" + std::string(instruction.text)}},
                         {"response", nlohmann::json{{"question", question}, {"answer", "Yes"}, {"reason", "seen"}}.dump()}});
    }
    return {{"vision", true}, {"rules", rules}};
}

GenerationResponse ScriptedValidator::generate(const GenerationRequest& request) {
    check_generation_request(*this, request);
    const auto prompt = request.prompt_text();
    const auto q = prompt.find("Question: Q");
    if (q == std::string::npos || !request.messages.front().image) throw BackendError(BackendErrorKind::ScriptMiss, prompt);
    const int type = std::stoi(prompt.substr(q + 11));
    const int image = std::stoi(request.messages.front().image->bytes.substr(6));
    const bool right = image < correct_.at(static_cast<std::size_t>(type - 1));
    GenerationResponse response;
    response.text = nlohmann::json{{"answer", right ? "yes" : "no"}, {"reason", "scripted"}}.dump();
    response.prompt_tokens = whitespace_token_count(prompt);
    response.completion_tokens = whitespace_token_count(response.text);
    response.latency_seconds = 0.01;
    return response;
}

std::filesystem::path temp_dir(const std::string& name) {
    static std::uint64_t counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("memlora-" + name + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

OracleBank oracle_apply(OracleBank bank, const std::vector<MemoryOp>& ops) {
    for (const auto& op : ops) {
        switch (op.event) {
        case MemoryEvent::Add:
        case MemoryEvent::Update: {
            if (op.text.empty()) break;
            if (op.event == MemoryEvent::Update && bank.entries.count(op.id)) {
                bank.entries[op.id] = op.text;
                break;
            }
            MemoryId id = op.id;
            if (bank.entries.count(id)) id = bank.next_id;
            bank.entries[id] = op.text;
            bank.next_id = std::max(bank.next_id, id + 1);
            break;
        }
        case MemoryEvent::Delete:
            bank.entries.erase(op.id);
            break;
        case MemoryEvent::None:
            break;
        }
    }
    return bank;
}

std::vector<MemoryOp> random_ops(std::mt19937_64& rng, std::size_t max_ops, MemoryId id_range) {
    std::uniform_int_distribution<std::size_t> count(0, max_ops);
    std::uniform_int_distribution<int> event(0, 3);
    std::uniform_int_distribution<MemoryId> id(0, id_range);
    std::uniform_int_distribution<int> text(0, 9);
    std::vector<MemoryOp> ops(count(rng));
    for (auto& op : ops) {
        op.event = static_cast<MemoryEvent>(event(rng));
        op.id = id(rng);
        const int t = text(rng);
        // Roughly one in ten ADD/UPDATE ops carries no text.
        if (op.event == MemoryEvent::Add || op.event == MemoryEvent::Update)
            op.text = t == 0 ? "" : "fact " + std::to_string(t) + "-" + std::to_string(op.id);
        if (op.event == MemoryEvent::Update && t % 2) op.old_memory = "old";
    }
    return ops;
}

MemoryBank random_bank(std::mt19937_64& rng, std::size_t max_entries, MemoryId id_range) {
    std::uniform_int_distribution<std::size_t> count(0, max_entries);
    std::uniform_int_distribution<MemoryId> id(0, id_range);
    MemoryBank bank("random");
    const std::size_t n = count(rng);
    while (bank.size() < n) {
        const MemoryId candidate = id(rng);
        if (!bank.contains(candidate)) bank.insert(candidate, "seed " + std::to_string(candidate));
    }
    return bank;
}

} // namespace memlora::testing
