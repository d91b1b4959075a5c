#include "memlora/config.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "memlora/corpus.hpp"
#include "memlora/errors.hpp"

namespace memlora {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    if (!obj.is_object()) throw ConfigError("config key " + (prefix.empty() ? "<root>" : prefix) + " must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key)) throw ConfigError("unknown config key: " + prefix + (prefix.empty() ? "" : ".") + key);
}

template <typename T>
T get_as(const json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key " + key + " has the wrong type");
    }
}

Stage stage_key(const std::string& key, const std::string& prefix) {
    const auto stage = stage_from_string(key);
    if (!stage) throw ConfigError("unknown config key: " + prefix + "." + key);
    return *stage;
}

BackendConfig backend_from_json(const json& obj, const std::string& prefix) {
    reject_unknown(obj, {"url", "api", "model", "embedding_model", "token", "timeout_seconds", "max_attempts",
                         "max_in_flight", "vision", "token_embeddings"},
                   prefix);
    BackendConfig b;
    if (obj.contains("url")) b.url = get_as<std::string>(obj["url"], prefix + ".url");
    if (obj.contains("api")) b.api = wire_api_from_string(get_as<std::string>(obj["api"], prefix + ".api"));
    if (obj.contains("model")) b.model = get_as<std::string>(obj["model"], prefix + ".model");
    if (obj.contains("embedding_model"))
        b.embedding_model = get_as<std::string>(obj["embedding_model"], prefix + ".embedding_model");
    if (obj.contains("token")) b.token = get_as<std::string>(obj["token"], prefix + ".token");
    if (obj.contains("timeout_seconds"))
        b.timeout_seconds = get_as<double>(obj["timeout_seconds"], prefix + ".timeout_seconds");
    if (obj.contains("max_attempts")) b.max_attempts = get_as<int>(obj["max_attempts"], prefix + ".max_attempts");
    if (obj.contains("max_in_flight")) b.max_in_flight = get_as<int>(obj["max_in_flight"], prefix + ".max_in_flight");
    if (obj.contains("vision")) b.vision = get_as<bool>(obj["vision"], prefix + ".vision");
    if (obj.contains("token_embeddings"))
        b.token_embeddings = get_as<bool>(obj["token_embeddings"], prefix + ".token_embeddings");
    return b;
}

std::string upper(std::string text) {
    for (auto& c : text) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return text;
}

} // namespace

WireApi wire_api_from_string(const std::string& text) {
    if (text == "native") return WireApi::Native;
    if (text == "chat_completions" || text == "openai") return WireApi::ChatCompletions;
    throw ConfigError("unknown backend api: " + text);
}

HttpBackendOptions BackendConfig::http_options() const {
    HttpBackendOptions o;
    o.base_url = url;
    o.api = api;
    o.bearer_token = token;
    o.timeout_seconds = timeout_seconds;
    o.max_attempts = max_attempts;
    o.max_in_flight = max_in_flight;
    o.vision = vision;
    o.token_embeddings = token_embeddings;
    return o;
}

AppConfig AppConfig::from_json(const std::string& text) {
    const auto root = json::parse(text, nullptr, false);
    if (root.is_discarded()) throw ConfigError("config is not valid JSON");
    reject_unknown(root, {"variant", "retrieval_k", "update_context_cap", "backends", "adapters", "max_output_tokens",
                          "today", "paths", "mock_script"},
                   "");
    AppConfig c;
    if (root.contains("variant")) {
        const auto v = prompt_variant_from_string(get_as<std::string>(root["variant"], "variant"));
        if (!v) throw ConfigError("config key variant must be MEM0 or MEMLORA");
        c.variant = *v;
    }
    if (root.contains("retrieval_k")) c.retrieval_k = get_as<std::size_t>(root["retrieval_k"], "retrieval_k");
    if (root.contains("update_context_cap"))
        c.update_context_cap = get_as<std::size_t>(root["update_context_cap"], "update_context_cap");
    if (root.contains("backends")) {
        reject_unknown(root["backends"], {std::begin(kBackendRoles), std::end(kBackendRoles)}, "backends");
        for (const auto& [role, value] : root["backends"].items())
            c.backends[role] = backend_from_json(value, "backends." + role);
    }
    if (root.contains("adapters")) {
        reject_unknown(root["adapters"], {"extraction", "update", "generation", "vqa"}, "adapters");
        for (const auto& [key, value] : root["adapters"].items()) {
            if (value.is_null()) continue;
            c.adapters[stage_key(key, "adapters")] = get_as<std::string>(value, "adapters." + key);
        }
    }
    if (root.contains("max_output_tokens")) {
        reject_unknown(root["max_output_tokens"], {"extraction", "update", "generation", "vqa"}, "max_output_tokens");
        for (const auto& [key, value] : root["max_output_tokens"].items())
            c.max_output_tokens[stage_key(key, "max_output_tokens")] = get_as<int>(value, "max_output_tokens." + key);
    }
    if (root.contains("today")) c.today = get_as<std::string>(root["today"], "today");
    if (root.contains("paths")) {
        const auto& p = root["paths"];
        reject_unknown(p, {"corpus", "banks", "indexes", "reports", "prompts"}, "paths");
        if (p.contains("corpus")) c.corpus = get_as<std::string>(p["corpus"], "paths.corpus");
        if (p.contains("banks")) c.banks = get_as<std::string>(p["banks"], "paths.banks");
        if (p.contains("indexes")) c.indexes = get_as<std::string>(p["indexes"], "paths.indexes");
        if (p.contains("reports")) c.reports = get_as<std::string>(p["reports"], "paths.reports");
        if (p.contains("prompts")) c.prompts = get_as<std::string>(p["prompts"], "paths.prompts");
    }
    if (root.contains("mock_script")) c.mock_script = get_as<std::string>(root["mock_script"], "mock_script");
    c.validate();
    return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
    return from_json(read_file(path));
}

void AppConfig::apply_env(const std::function<const char*(const char*)>& getenv) {
    for (const char* role : kBackendRoles) {
        const std::string base = "MEMLORA_" + upper(role) + "_";
        const char* url = getenv((base + "URL").c_str());
        const char* token = getenv((base + "TOKEN").c_str());
        const char* model = getenv((base + "MODEL").c_str());
        if (!url && !token && !model) continue;
        auto& b = backends.try_emplace(role, backend_for(role)).first->second;
        if (url) b.url = url;
        if (token) b.token = token;
        if (model) b.model = model;
    }
    if (const char* mock = getenv("MEMLORA_MOCK_SCRIPT"); mock && *mock) mock_script = mock;
}

void AppConfig::validate() const {
    if (retrieval_k < 1) throw ConfigError("config key retrieval_k must be at least 1");
    if (update_context_cap < 1) throw ConfigError("config key update_context_cap must be at least 1");
    for (const auto& [role, b] : backends) {
        if (b.url.empty()) throw ConfigError("config key backends." + role + ".url must be nonempty");
        if (b.max_attempts < 1) throw ConfigError("config key backends." + role + ".max_attempts must be positive");
        if (b.max_in_flight < 1 || b.max_in_flight > 1024)
            throw ConfigError("config key backends." + role + ".max_in_flight must be in 1..1024");
        if (!(b.timeout_seconds > 0)) throw ConfigError("config key backends." + role + ".timeout_seconds must be positive");
    }
    for (const auto& [stage, name] : adapters)
        if (name.empty()) throw ConfigError("config key adapters." + std::string(to_string(stage)) + " is empty");
    for (const auto& [stage, n] : max_output_tokens)
        if (n < 1) throw ConfigError("config key max_output_tokens." + std::string(to_string(stage)) + " must be positive");
}

BackendConfig AppConfig::backend_for(const std::string& role) const {
    if (auto it = backends.find(role); it != backends.end()) return it->second;
    if (auto it = backends.find("backend"); it != backends.end()) return it->second;
    return {};
}

PipelineConfig AppConfig::pipeline_config(const PromptCatalog* catalog) const {
    const auto main = backend_for("backend");
    PipelineConfig p;
    p.variant = variant;
    p.retrieval_k = retrieval_k;
    p.update_context_cap = update_context_cap;
    p.model = main.model;
    p.embedding_model = main.embedding_model;
    p.adapters = adapters;
    p.max_output_tokens = max_output_tokens;
    p.today = today;
    p.catalog = catalog;
    return p;
}

} // namespace memlora
