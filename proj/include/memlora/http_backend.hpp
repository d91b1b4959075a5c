#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>

#include "memlora/backend.hpp"

namespace memlora {

enum class WireApi {
    Native,          // POST /generate, /embed with bodies mirroring the request types
    ChatCompletions, // POST /v1/chat/completions, /v1/embeddings
};

struct HttpBackendOptions {
    std::string base_url = "http://127.0.0.1:8080";
    WireApi api = WireApi::Native;
    std::string bearer_token;
    double timeout_seconds = 120.0;
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{250};
    int max_in_flight = 4;
    bool vision = false;
    bool token_embeddings = false; // server implements /embed_tokens (native only)
};

// Out-of-process inference client. Safe for concurrent calls; at most
// max_in_flight requests are on the wire at once.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options);
    ~HttpBackend() override;

    GenerationResponse generate(const GenerationRequest& request) override;
    EmbeddingResponse embed(const EmbeddingRequest& request) override;
    TokenEmbeddingResponse embed_tokens(const EmbeddingRequest& request) override;

    bool supports_vision() const override { return options_.vision; }
    bool supports_token_embeddings() const override {
        return options_.token_embeddings && options_.api == WireApi::Native;
    }

    const HttpBackendOptions& options() const noexcept { return options_; }

    // Number of HTTP attempts made so far, retries included.
    std::size_t attempts() const noexcept;

private:
    std::string post_json(const std::string& path, const std::string& body);

    HttpBackendOptions options_;
    std::string origin_; // scheme://host[:port]
    std::string prefix_; // path prefix from base_url, no trailing slash
    std::counting_semaphore<1024> in_flight_;
    struct Counters;
    std::unique_ptr<Counters> counters_;
};

// Native wire encodings, exposed for tests and for servers written against
// this client.
std::string encode_generate_body(const GenerationRequest& request);
std::string encode_chat_completions_body(const GenerationRequest& request);
GenerationResponse decode_generate_body(const std::string& body, const GenerationRequest& request);
GenerationResponse decode_chat_completions_body(const std::string& body, const GenerationRequest& request);

} // namespace memlora
