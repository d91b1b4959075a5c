#include "memlora/backend.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "memlora/errors.hpp"

namespace memlora {

std::string_view to_string(Stage stage) {
    switch (stage) {
    case Stage::Extraction: return "extraction";
    case Stage::Update: return "update";
    case Stage::Generation: return "generation";
    case Stage::VqaGeneration: return "vqa";
    }
    return "generation";
}

std::optional<Stage> stage_from_string(std::string_view text) {
    for (Stage s : kAllStages) {
        if (to_string(s) == text) return s;
    }
    if (text == "vqa_generation") return Stage::VqaGeneration;
    return std::nullopt;
}

std::string_view to_string(Role role) {
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

std::string GenerationRequest::prompt_text() const {
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i) out += '\n';
        out += messages[i].text;
    }
    return out;
}

bool GenerationRequest::has_images() const {
    for (const auto& m : messages) {
        if (m.image) return true;
    }
    return false;
}

void GenerationRequest::validate() const {
    if (messages.empty()) throw std::invalid_argument("generation request needs at least one message");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
    if (max_output_tokens <= 0) throw std::invalid_argument("max_output_tokens must be positive");
}

int default_max_output_tokens(Stage stage) {
    switch (stage) {
    case Stage::Extraction: return 256;
    case Stage::Update: return 512;
    case Stage::Generation: return 256;
    case Stage::VqaGeneration: return 128;
    }
    return 256;
}

std::int64_t whitespace_token_count(std::string_view text) {
    std::int64_t count = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

TokenEmbeddingResponse Backend::embed_tokens(const EmbeddingRequest&) {
    throw BackendError(BackendErrorKind::Capability, "backend does not expose token embeddings");
}

void check_generation_request(const Backend& backend, const GenerationRequest& request) {
    request.validate();
    if (!backend.supports_vision()) {
        if (request.adapter.stage == Stage::VqaGeneration) {
            throw BackendError(BackendErrorKind::Capability,
                               "VQA generation requires a vision-capable backend");
        }
        if (request.has_images()) {
            throw BackendError(BackendErrorKind::Capability,
                               "image payloads require a vision-capable backend");
        }
    }
}

void check_embedding_request(const EmbeddingRequest& request) {
    if (request.inputs.empty()) throw std::invalid_argument("embedding request needs at least one input");
}

void check_embedding_response(const EmbeddingRequest& request, const EmbeddingResponse& response) {
    if (response.vectors.size() != request.inputs.size()) {
        throw BackendError(BackendErrorKind::MalformedBody, "embedding count does not match input count");
    }
    for (const auto& v : response.vectors) {
        if (v.empty() || v.size() != response.vectors.front().size()) {
            throw BackendError(BackendErrorKind::MalformedBody, "embeddings have inconsistent dimension");
        }
        for (double x : v) {
            if (!std::isfinite(x)) {
                throw BackendError(BackendErrorKind::MalformedBody, "embedding has a non-finite component");
            }
        }
    }
}

} // namespace memlora
