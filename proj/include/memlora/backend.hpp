#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memlora {

enum class Stage { Extraction, Update, Generation, VqaGeneration };

std::string_view to_string(Stage stage);
std::optional<Stage> stage_from_string(std::string_view text);
inline constexpr Stage kAllStages[] = {Stage::Extraction, Stage::Update, Stage::Generation,
                                       Stage::VqaGeneration};

// Which expert serves a call. No adapter name means the base model.
struct AdapterHandle {
    Stage stage = Stage::Generation;
    std::optional<std::string> adapter_name;

    friend bool operator==(const AdapterHandle&, const AdapterHandle&) = default;
};

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);

// Opaque image bytes; decoding is the backend's business.
struct ImagePayload {
    std::string bytes;
    std::string media_type = "image/jpeg";

    friend bool operator==(const ImagePayload&, const ImagePayload&) = default;
};

struct Message {
    Role role = Role::User;
    std::string text;
    std::optional<ImagePayload> image;
};

struct GenerationRequest {
    std::string model;
    AdapterHandle adapter;
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_output_tokens = 256;

    // Concatenated message texts, the thing mock rules match against.
    std::string prompt_text() const;
    bool has_images() const;
    void validate() const; // throws std::invalid_argument
};

struct GenerationResponse {
    std::string text;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency_seconds = 0.0;
    bool token_counts_authoritative = false;
};

struct EmbeddingRequest {
    std::string model;
    std::vector<std::string> inputs;
};

struct EmbeddingResponse {
    std::vector<std::vector<double>> vectors;
};

// Per-token vectors for each input, used for the token-matching similarity.
struct TokenEmbeddingResponse {
    std::vector<std::vector<std::vector<double>>> tokens;
};

// Default output budgets per stage.
int default_max_output_tokens(Stage stage);

// Counts whitespace-delimited tokens; the fallback when a backend reports
// no usage numbers.
std::int64_t whitespace_token_count(std::string_view text);

class Backend {
public:
    virtual ~Backend() = default;

    virtual GenerationResponse generate(const GenerationRequest& request) = 0;
    virtual EmbeddingResponse embed(const EmbeddingRequest& request) = 0;

    virtual bool supports_vision() const { return false; }
    virtual bool supports_token_embeddings() const { return false; }
    virtual TokenEmbeddingResponse embed_tokens(const EmbeddingRequest& request);
};

// Shared request checks every backend runs before doing any work: request
// shape plus vision capability for VQA and image-bearing calls.
void check_generation_request(const Backend& backend, const GenerationRequest& request);
void check_embedding_request(const EmbeddingRequest& request);
void check_embedding_response(const EmbeddingRequest& request, const EmbeddingResponse& response);

} // namespace memlora
