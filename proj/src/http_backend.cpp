#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "memlora/http_backend.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "memlora/errors.hpp"

namespace memlora {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

struct HttpBackend::Counters {
    std::atomic<std::size_t> attempts{0};
};

namespace {

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(std::counting_semaphore<1024>& sem) : sem_(sem) { sem_.acquire(); }
    ~SemaphoreGuard() { sem_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    std::counting_semaphore<1024>& sem_;
};

template <typename T>
T field_or(const json& obj, const char* key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return fallback;
    return it->get<T>();
}

void fill_token_counts(GenerationResponse& response, const json* prompt_tokens, const json* completion_tokens,
                       const GenerationRequest& request) {
    if (prompt_tokens && completion_tokens && prompt_tokens->is_number_integer() &&
        completion_tokens->is_number_integer()) {
        response.prompt_tokens = prompt_tokens->get<std::int64_t>();
        response.completion_tokens = completion_tokens->get<std::int64_t>();
        response.token_counts_authoritative = response.prompt_tokens >= 0 && response.completion_tokens >= 0;
        if (response.token_counts_authoritative) return;
    }
    response.prompt_tokens = whitespace_token_count(request.prompt_text());
    response.completion_tokens = whitespace_token_count(response.text);
    response.token_counts_authoritative = false;
}

json parse_body(const std::string& body) {
    auto value = json::parse(body, nullptr, false);
    if (value.is_discarded() || !value.is_object()) {
        throw BackendError(BackendErrorKind::MalformedBody, "response body is not a JSON object");
    }
    return value;
}

} // namespace

std::string encode_generate_body(const GenerationRequest& request) {
    ojson body;
    body["model"] = request.model;
    // Base-model calls carry no adapter object at all.
    if (request.adapter.adapter_name) {
        body["adapter"] = {{"stage", std::string(to_string(request.adapter.stage))},
                           {"adapter_name", *request.adapter.adapter_name}};
    }
    body["messages"] = ojson::array();
    for (const auto& m : request.messages) {
        ojson msg;
        msg["role"] = std::string(to_string(m.role));
        msg["text"] = m.text;
        if (m.image) {
            msg["image_payload"] = {{"data", httplib::detail::base64_encode(m.image->bytes)},
                                    {"media_type", m.image->media_type}};
        }
        body["messages"].push_back(msg);
    }
    body["temperature"] = request.temperature;
    body["max_output_tokens"] = request.max_output_tokens;
    return body.dump();
}

std::string encode_chat_completions_body(const GenerationRequest& request) {
    ojson body;
    // OpenAI-compatible servers (vLLM, llama.cpp server) route LoRA adapters
    // by serving them under their own model name.
    body["model"] = request.adapter.adapter_name.value_or(request.model);
    body["messages"] = ojson::array();
    for (const auto& m : request.messages) {
        ojson msg;
        msg["role"] = std::string(to_string(m.role));
        if (m.image) {
            ojson parts = ojson::array();
            parts.push_back({{"type", "text"}, {"text", m.text}});
            parts.push_back({{"type", "image_url"},
                             {"image_url",
                              {{"url", "data:" + m.image->media_type + ";base64," +
                                           httplib::detail::base64_encode(m.image->bytes)}}}});
            msg["content"] = parts;
        } else {
            msg["content"] = m.text;
        }
        body["messages"].push_back(msg);
    }
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    return body.dump();
}

GenerationResponse decode_generate_body(const std::string& body, const GenerationRequest& request) {
    auto value = parse_body(body);
    auto text = value.find("text");
    if (text == value.end() || !text->is_string()) {
        throw BackendError(BackendErrorKind::MalformedBody, "generate response lacks 'text'");
    }
    GenerationResponse response;
    response.text = text->get<std::string>();
    auto pt = value.find("prompt_tokens");
    auto ct = value.find("completion_tokens");
    fill_token_counts(response, pt == value.end() ? nullptr : &*pt, ct == value.end() ? nullptr : &*ct, request);
    return response;
}

GenerationResponse decode_chat_completions_body(const std::string& body, const GenerationRequest& request) {
    auto value = parse_body(body);
    GenerationResponse response;
    try {
        const auto& content = value.at("choices").at(0).at("message").at("content");
        response.text = content.is_null() ? std::string() : content.get<std::string>();
    } catch (const json::exception&) {
        throw BackendError(BackendErrorKind::MalformedBody, "chat completion lacks choices[0].message.content");
    }
    const json* pt = nullptr;
    const json* ct = nullptr;
    if (auto usage = value.find("usage"); usage != value.end() && usage->is_object()) {
        if (auto it = usage->find("prompt_tokens"); it != usage->end()) pt = &*it;
        if (auto it = usage->find("completion_tokens"); it != usage->end()) ct = &*it;
    }
    fill_token_counts(response, pt, ct, request);
    return response;
}

HttpBackend::HttpBackend(HttpBackendOptions options)
    : options_(std::move(options)),
      in_flight_(std::clamp(options_.max_in_flight, 1, 1024)),
      counters_(std::make_unique<Counters>()) {
    if (options_.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");
    const auto scheme_end = options_.base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("backend url must start with http:// or https://: " + options_.base_url);
    }
    const auto path_start = options_.base_url.find('/', scheme_end + 3);
    origin_ = options_.base_url.substr(0, path_start);
    if (path_start != std::string::npos) {
        prefix_ = options_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }
}

HttpBackend::~HttpBackend() = default;

std::size_t HttpBackend::attempts() const noexcept { return counters_->attempts.load(); }

std::string HttpBackend::post_json(const std::string& path, const std::string& body) {
    SemaphoreGuard guard(in_flight_);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(options_.timeout_seconds));

    for (int attempt = 1;; ++attempt) {
        counters_->attempts.fetch_add(1);
        try {
            httplib::Client client(origin_);
            client.set_connection_timeout(timeout);
            client.set_read_timeout(timeout);
            client.set_write_timeout(timeout);
            if (!options_.bearer_token.empty()) client.set_bearer_token_auth(options_.bearer_token);

            auto result = client.Post(prefix_ + path, body, "application/json");
            if (!result) {
                const auto err = result.error();
                const auto kind = err == httplib::Error::ConnectionTimeout ? BackendErrorKind::Timeout
                                                                           : BackendErrorKind::Transport;
                throw BackendError(kind, "POST " + path + ": " + httplib::to_string(err));
            }
            if (result->status < 200 || result->status >= 300) {
                throw BackendError(BackendErrorKind::Status,
                                   "POST " + path + " returned HTTP " + std::to_string(result->status),
                                   result->status);
            }
            return result->body;
        } catch (const BackendError& e) {
            if (!e.retryable() || attempt >= options_.max_attempts) {
                if (attempt > 1) spdlog::warn("backend: giving up on {} after {} attempts", path, attempt);
                throw;
            }
            const auto delay = options_.backoff_base * (1 << (attempt - 1));
            spdlog::warn("backend: attempt {} on {} failed ({}), retrying in {} ms", attempt, path, e.what(),
                         delay.count());
            std::this_thread::sleep_for(delay);
        }
    }
}

GenerationResponse HttpBackend::generate(const GenerationRequest& request) {
    check_generation_request(*this, request);
    const bool native = options_.api == WireApi::Native;
    const auto start = std::chrono::steady_clock::now();
    const auto body = post_json(native ? "/generate" : "/v1/chat/completions",
                                native ? encode_generate_body(request) : encode_chat_completions_body(request));
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    auto response = native ? decode_generate_body(body, request) : decode_chat_completions_body(body, request);
    response.latency_seconds = std::max(elapsed.count(), 1e-9);
    return response;
}

EmbeddingResponse HttpBackend::embed(const EmbeddingRequest& request) {
    check_embedding_request(request);
    EmbeddingResponse response;
    try {
        if (options_.api == WireApi::Native) {
            ojson body{{"model", request.model}, {"inputs", request.inputs}};
            auto value = parse_body(post_json("/embed", body.dump()));
            response.vectors = value.at("vectors").get<std::vector<std::vector<double>>>();
        } else {
            ojson body{{"model", request.model}, {"input", request.inputs}};
            auto value = parse_body(post_json("/v1/embeddings", body.dump()));
            auto data = value.at("data");
            response.vectors.resize(data.size());
            for (std::size_t i = 0; i < data.size(); ++i) {
                const auto index = field_or<std::size_t>(data[i], "index", i);
                if (index >= data.size()) throw BackendError(BackendErrorKind::MalformedBody, "bad embedding index");
                response.vectors[index] = data[i].at("embedding").get<std::vector<double>>();
            }
        }
    } catch (const json::exception& e) {
        throw BackendError(BackendErrorKind::MalformedBody, std::string("embedding response: ") + e.what());
    }
    check_embedding_response(request, response);
    return response;
}

TokenEmbeddingResponse HttpBackend::embed_tokens(const EmbeddingRequest& request) {
    if (!supports_token_embeddings()) return Backend::embed_tokens(request);
    check_embedding_request(request);
    ojson body{{"model", request.model}, {"inputs", request.inputs}};
    auto value = parse_body(post_json("/embed_tokens", body.dump()));
    TokenEmbeddingResponse response;
    try {
        response.tokens = value.at("tokens").get<std::vector<std::vector<std::vector<double>>>>();
    } catch (const json::exception& e) {
        throw BackendError(BackendErrorKind::MalformedBody, std::string("token embedding response: ") + e.what());
    }
    if (response.tokens.size() != request.inputs.size()) {
        throw BackendError(BackendErrorKind::MalformedBody, "token embedding count does not match input count");
    }
    return response;
}

} // namespace memlora
