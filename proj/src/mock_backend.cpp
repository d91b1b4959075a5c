#include "memlora/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memlora/errors.hpp"
#include "memlora/hashing.hpp"

namespace memlora {

using json = nlohmann::json;

bool MockRule::matches(const GenerationRequest& request) const {
    if (stage && *stage != request.adapter.stage) return false;
    if (adapter && *adapter != request.adapter.adapter_name) return false;
    const auto prompt = request.prompt_text();
    for (const auto& needle : contains) {
        if (prompt.find(needle) == std::string::npos) return false;
    }
    for (const auto& needle : not_contains) {
        if (prompt.find(needle) != std::string::npos) return false;
    }
    return true;
}

namespace {

std::vector<std::string> string_list(const json& value, const char* key) {
    auto it = value.find(key);
    if (it == value.end() || it->is_null()) return {};
    if (it->is_string()) return {it->get<std::string>()};
    return it->get<std::vector<std::string>>();
}

MockRule parse_rule(const json& value) {
    static const char* const kKeys[] = {"stage",    "adapter",       "contains",          "not_contains",
                                        "response", "prompt_tokens", "completion_tokens", "latency_seconds"};
    for (const auto& [key, unused] : value.items()) {
        if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
            std::end(kKeys)) {
            throw ConfigError("unknown mock rule key '" + key + "'");
        }
    }
    MockRule rule;
    if (auto it = value.find("stage"); it != value.end() && !it->is_null()) {
        auto stage = stage_from_string(it->get<std::string>());
        if (!stage) throw ConfigError("unknown stage in mock rule: " + it->get<std::string>());
        rule.stage = stage;
    }
    if (auto it = value.find("adapter"); it != value.end()) {
        rule.adapter = it->is_null() ? std::optional<std::string>{} : std::optional<std::string>{it->get<std::string>()};
    }
    rule.contains = string_list(value, "contains");
    rule.not_contains = string_list(value, "not_contains");
    rule.response = value.at("response").get<std::string>();
    if (auto it = value.find("prompt_tokens"); it != value.end()) rule.prompt_tokens = it->get<std::int64_t>();
    if (auto it = value.find("completion_tokens"); it != value.end()) {
        rule.completion_tokens = it->get<std::int64_t>();
    }
    if (auto it = value.find("latency_seconds"); it != value.end()) rule.latency_seconds = it->get<double>();
    if (rule.latency_seconds && !(*rule.latency_seconds > 0.0)) {
        throw ConfigError("mock rule latency_seconds must be positive");
    }
    return rule;
}

} // namespace

MockScript MockScript::from_json(const std::string& text) {
    auto value = json::parse(text, nullptr, false);
    if (value.is_discarded() || !value.is_object()) throw ConfigError("mock script is not a JSON object");

    static const char* const kKeys[] = {"rules", "vision", "token_embeddings", "embedding",
                                        "default_latency_seconds", "fixed_embeddings"};
    for (const auto& [key, unused] : value.items()) {
        if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
            std::end(kKeys)) {
            throw ConfigError("unknown mock script key '" + key + "'");
        }
    }

    MockScript script;
    try {
        script.vision = value.value("vision", false);
        script.token_embeddings = value.value("token_embeddings", false);
        script.default_latency_seconds = value.value("default_latency_seconds", script.default_latency_seconds);
        if (auto it = value.find("embedding"); it != value.end()) {
            script.embedding_dimension = it->value("dimension", script.embedding_dimension);
            script.embedding_seed = it->value("seed", script.embedding_seed);
        }
        if (auto it = value.find("fixed_embeddings"); it != value.end()) {
            for (const auto& [key, vec] : it->items()) {
                script.fixed_embeddings[key] = vec.get<std::vector<double>>();
                if (script.fixed_embeddings[key].size() != script.embedding_dimension) {
                    throw ConfigError("fixed embedding for '" + key + "' has the wrong dimension");
                }
            }
        }
        if (auto it = value.find("rules"); it != value.end()) {
            for (const auto& rule : *it) script.rules.push_back(parse_rule(rule));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed mock script: ") + e.what());
    }
    if (script.embedding_dimension == 0) throw ConfigError("mock embedding dimension must be positive");
    if (!(script.default_latency_seconds > 0.0)) throw ConfigError("mock default latency must be positive");
    return script;
}

MockScript MockScript::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read mock script " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

MockBackend::MockBackend(MockScript script) : script_(std::move(script)) {}

GenerationResponse MockBackend::generate(const GenerationRequest& request) {
    check_generation_request(*this, request);
    generate_calls_.fetch_add(1);
    for (const auto& rule : script_.rules) {
        if (!rule.matches(request)) continue;
        GenerationResponse response;
        response.text = rule.response;
        response.token_counts_authoritative = rule.prompt_tokens.has_value() && rule.completion_tokens.has_value();
        response.prompt_tokens = response.token_counts_authoritative ? *rule.prompt_tokens
                                                                     : whitespace_token_count(request.prompt_text());
        response.completion_tokens = response.token_counts_authoritative ? *rule.completion_tokens
                                                                         : whitespace_token_count(rule.response);
        response.latency_seconds = rule.latency_seconds.value_or(script_.default_latency_seconds);
        return response;
    }
    const auto prompt = request.prompt_text();
    throw BackendError(BackendErrorKind::ScriptMiss,
                       "no mock rule for stage " + std::string(to_string(request.adapter.stage)) + ", adapter " +
                           request.adapter.adapter_name.value_or("<base>") + ", prompt digest " +
                           hex64(fnv1a64(prompt)) + " (starts: \"" + prompt.substr(0, 80) + "\")");
}

std::vector<std::string> MockBackend::embedding_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

namespace {

std::vector<double> word_direction(const std::string& word, std::size_t dimension, std::uint64_t seed) {
    std::uint64_t state = fnv1a64(word) ^ seed;
    std::vector<double> out(dimension);
    for (auto& x : out) {
        const auto bits = splitmix64(state) >> 11;             // 53 random bits
        x = static_cast<double>(bits) * 0x1.0p-53 * 2.0 - 1.0; // uniform in [-1, 1)
    }
    return out;
}

void normalise(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& x : v) x /= norm;
    }
}

} // namespace

std::vector<double> MockBackend::hash_embedding(const std::string& text, std::size_t dimension, std::uint64_t seed) {
    auto words = embedding_words(text);
    if (words.empty()) words.push_back(text);
    std::vector<double> sum(dimension, 0.0);
    for (const auto& w : words) {
        auto dir = word_direction(w, dimension, seed);
        for (std::size_t d = 0; d < dimension; ++d) sum[d] += dir[d];
    }
    normalise(sum);
    return sum;
}

EmbeddingResponse MockBackend::embed(const EmbeddingRequest& request) {
    check_embedding_request(request);
    embed_calls_.fetch_add(1);
    EmbeddingResponse response;
    for (const auto& input : request.inputs) {
        if (auto it = script_.fixed_embeddings.find(input); it != script_.fixed_embeddings.end()) {
            response.vectors.push_back(it->second);
        } else {
            response.vectors.push_back(hash_embedding(input, script_.embedding_dimension, script_.embedding_seed));
        }
    }
    return response;
}

TokenEmbeddingResponse MockBackend::embed_tokens(const EmbeddingRequest& request) {
    if (!script_.token_embeddings) return Backend::embed_tokens(request);
    check_embedding_request(request);
    TokenEmbeddingResponse response;
    for (const auto& input : request.inputs) {
        std::vector<std::vector<double>> tokens;
        for (const auto& word : embedding_words(input)) {
            auto v = word_direction(word, script_.embedding_dimension, script_.embedding_seed);
            normalise(v);
            tokens.push_back(std::move(v));
        }
        response.tokens.push_back(std::move(tokens));
    }
    return response;
}

} // namespace memlora
