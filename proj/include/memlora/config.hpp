#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "memlora/backend.hpp"
#include "memlora/http_backend.hpp"
#include "memlora/pipeline.hpp"
#include "memlora/prompts.hpp"

namespace memlora {

struct BackendConfig {
    std::string url = "http://127.0.0.1:8080";
    WireApi api = WireApi::Native;
    std::string model = "base";
    std::string embedding_model = "embedder";
    std::string token;
    double timeout_seconds = 120.0;
    int max_attempts = 3;
    int max_in_flight = 4;
    bool vision = false;
    bool token_embeddings = false;

    HttpBackendOptions http_options() const;
};

// Backends by role. "backend" serves the pipeline and embeddings; the other
// roles fall back to it when not configured.
inline constexpr const char* kBackendRoles[] = {"backend", "judge", "teacher", "validator"};

struct AppConfig {
    PromptVariant variant = PromptVariant::MemLora;
    std::size_t retrieval_k = VectorIndex::kDefaultK;
    std::size_t update_context_cap = PipelineConfig::kDefaultUpdateContextCap;
    std::map<std::string, BackendConfig> backends; // by role
    std::map<Stage, std::string> adapters;
    std::map<Stage, int> max_output_tokens;
    std::optional<std::string> today;
    std::filesystem::path corpus;
    std::filesystem::path banks = "banks";
    std::filesystem::path indexes = "indexes";
    std::filesystem::path reports = "reports";
    std::filesystem::path prompts; // template override directory
    std::optional<std::filesystem::path> mock_script;

    // Unknown keys anywhere raise ConfigError naming the dotted key path.
    static AppConfig from_json(const std::string& text);
    static AppConfig load(const std::filesystem::path& path);

    // MEMLORA_<ROLE>_URL, MEMLORA_<ROLE>_TOKEN, MEMLORA_<ROLE>_MODEL and
    // MEMLORA_MOCK_SCRIPT. `getenv` is injectable for tests.
    void apply_env(const std::function<const char*(const char*)>& getenv);

    void validate() const;

    // Role config, falling back to "backend" (and then to defaults).
    BackendConfig backend_for(const std::string& role) const;
    PipelineConfig pipeline_config(const PromptCatalog* catalog = nullptr) const;
};

WireApi wire_api_from_string(const std::string& text);

} // namespace memlora
