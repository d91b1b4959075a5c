#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memlora/backend.hpp"

namespace memlora {

// One canned answer. Matching is stateless: a rule applies when every
// populated matcher agrees with the request, and the first applicable rule
// in script order wins.
struct MockRule {
    std::optional<Stage> stage;                              // absent: any stage
    std::optional<std::optional<std::string>> adapter;       // absent: any; nullopt inside: base only
    std::vector<std::string> contains;                       // all must occur in the prompt text
    std::vector<std::string> not_contains;                   // none may occur
    std::string response;
    std::optional<std::int64_t> prompt_tokens;               // absent: whitespace fallback
    std::optional<std::int64_t> completion_tokens;
    std::optional<double> latency_seconds;

    bool matches(const GenerationRequest& request) const;
};

struct MockScript {
    std::vector<MockRule> rules;
    bool vision = false;
    bool token_embeddings = false;
    std::size_t embedding_dimension = 32;
    std::uint64_t embedding_seed = 0x6d656d6c6f7261ULL;
    double default_latency_seconds = 0.01;
    std::map<std::string, std::vector<double>> fixed_embeddings; // exact text -> vector

    // Script file format (JSON object):
    //   {"vision": bool, "token_embeddings": bool,
    //    "embedding": {"dimension": n, "seed": n},
    //    "default_latency_seconds": x,
    //    "fixed_embeddings": {"text": [..]},
    //    "rules": [{"stage", "adapter", "contains", "not_contains", "response",
    //               "prompt_tokens", "completion_tokens", "latency_seconds"}]}
    static MockScript from_json(const std::string& text);
    static MockScript load_file(const std::string& path);
};

// Deterministic in-process backend for tests and --mock-script runs. No
// network, no sleeping: latencies are the scripted synthetic values.
class MockBackend final : public Backend {
public:
    explicit MockBackend(MockScript script);

    GenerationResponse generate(const GenerationRequest& request) override;
    EmbeddingResponse embed(const EmbeddingRequest& request) override;
    TokenEmbeddingResponse embed_tokens(const EmbeddingRequest& request) override;

    bool supports_vision() const override { return script_.vision; }
    bool supports_token_embeddings() const override { return script_.token_embeddings; }

    const MockScript& script() const noexcept { return script_; }
    std::size_t generate_calls() const noexcept { return generate_calls_.load(); }
    std::size_t embed_calls() const noexcept { return embed_calls_.load(); }

    // The seeded hash projection behind embed(): lowercase alphanumeric
    // words are hashed, each seeds a splitmix64 stream that fills one
    // pseudo-random direction, and the word directions are summed and
    // L2-normalised.
    static std::vector<double> hash_embedding(const std::string& text, std::size_t dimension, std::uint64_t seed);
    static std::vector<std::string> embedding_words(const std::string& text);

private:
    MockScript script_;
    std::atomic<std::size_t> generate_calls_{0};
    std::atomic<std::size_t> embed_calls_{0};
};

} // namespace memlora
