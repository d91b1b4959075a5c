// memlora: command-line entry point for ingestion, question answering,
// distillation data, evaluation, benchmarking and VQA benchmark building.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "memlora/config.hpp"
#include "memlora/corpus.hpp"
#include "memlora/distill.hpp"
#include "memlora/errors.hpp"
#include "memlora/evaluation.hpp"
#include "memlora/http_backend.hpp"
#include "memlora/mock_backend.hpp"
#include "memlora/pipeline.hpp"
#include "memlora/vqa_forge.hpp"

namespace fs = std::filesystem;
using namespace memlora;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitData = 4;

struct GlobalOptions {
    std::string config_path;
    std::string mock_script;
    std::size_t jobs = 1;
    std::string variant;
    std::size_t retrieval_k = 0;
    std::string backend_url;
    std::string today;
    std::string prompts_dir;
    std::string log_level = "warn";
};

// Everything a command needs, built once from config + env + flags.
struct Runtime {
    AppConfig config;
    std::optional<PromptCatalog> catalog;
    std::map<std::string, std::shared_ptr<Backend>> backends;

    Backend& backend(const std::string& role) { return *backends.at(role); }
    const PromptCatalog& prompts() const { return catalog ? *catalog : PromptCatalog::builtin(); }

    PipelineConfig pipeline_config() const {
        auto p = config.pipeline_config(catalog ? &*catalog : nullptr);
        if (p.variant == PromptVariant::Mem0 && !p.today) p.today = today_iso();
        return p;
    }

    static std::string today_iso() {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        localtime_r(&now, &tm);
        char buf[16];
        std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
        return buf;
    }
};

Runtime make_runtime(const GlobalOptions& g) {
    Runtime rt;
    if (!g.config_path.empty()) rt.config = AppConfig::load(g.config_path);
    rt.config.apply_env([](const char* name) { return std::getenv(name); });
    // Flags take precedence over the environment and the file.
    if (!g.mock_script.empty()) rt.config.mock_script = g.mock_script;
    if (!g.variant.empty()) {
        const auto v = prompt_variant_from_string(g.variant);
        if (!v) throw ConfigError("--variant must be MEM0 or MEMLORA");
        rt.config.variant = *v;
    }
    if (g.retrieval_k) rt.config.retrieval_k = g.retrieval_k;
    if (!g.backend_url.empty()) {
        auto b = rt.config.backend_for("backend");
        b.url = g.backend_url;
        rt.config.backends["backend"] = b;
    }
    if (!g.today.empty()) rt.config.today = g.today;
    if (!g.prompts_dir.empty()) rt.config.prompts = g.prompts_dir;
    rt.config.validate();

    if (!rt.config.prompts.empty()) rt.catalog = PromptCatalog::builtin().with_overrides(rt.config.prompts);

    if (rt.config.mock_script) {
        auto mock = std::make_shared<MockBackend>(MockScript::load_file(rt.config.mock_script->string()));
        for (const char* role : kBackendRoles) rt.backends[role] = mock;
    } else {
        for (const char* role : kBackendRoles) {
            const bool own = rt.config.backends.count(role) != 0;
            if (!own && std::string(role) != "backend") continue;
            rt.backends[role] = std::make_shared<HttpBackend>(rt.config.backend_for(role).http_options());
        }
        for (const char* role : kBackendRoles)
            if (!rt.backends.count(role)) rt.backends[role] = rt.backends.at("backend");
    }
    return rt;
}

fs::path bank_path(const Runtime& rt, const std::string& id) { return rt.config.banks / (id + ".bank.jsonl"); }
fs::path index_path(const Runtime& rt, const std::string& id) { return rt.config.indexes / (id + ".index.jsonl"); }

std::string pretty(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

void emit(const std::string& out_path, const std::string& bytes) {
    if (out_path.empty() || out_path == "-")
        std::cout << bytes;
    else
        write_file_atomic(out_path, bytes);
}

Corpus corpus_from(const Runtime& rt, const std::string& arg) {
    const fs::path path = arg.empty() ? rt.config.corpus : fs::path(arg);
    if (path.empty()) throw ConfigError("no corpus given (argument or paths.corpus)");
    return load_corpus(path);
}

std::vector<std::string> split_ids(const Corpus& corpus, const std::string& which) {
    std::vector<std::string> ids;
    for (const auto& c : corpus.conversations) ids.push_back(c.conversation_id);
    if (which == "all") return ids;
    const auto split = split_dataset(ids);
    if (which == "train") return split.train;
    if (which == "val") return split.val;
    if (which == "test") return split.test;
    throw ConfigError("--split must be train, val, test or all");
}

int cmd_ingest(Runtime& rt, const std::string& corpus_arg, const std::string& conversation) {
    const auto corpus = corpus_from(rt, corpus_arg);
    MemoryPipeline pipeline(rt.backend("backend"), rt.pipeline_config());
    std::vector<std::string> ids;
    if (!conversation.empty()) {
        ids.push_back(conversation);
    } else {
        for (const auto& c : corpus.conversations) ids.push_back(c.conversation_id);
    }
    // An empty corpus still yields one (empty) bank, named after the corpus file.
    if (ids.empty()) ids.push_back(fs::path(corpus_arg.empty() ? rt.config.corpus : fs::path(corpus_arg)).stem().string());
    nlohmann::ordered_json summary = nlohmann::ordered_json::array();
    for (const auto& id : ids) {
        MemoryState state;
        state.bank = MemoryBank(id);
        std::size_t windows = 0;
        if (!corpus.conversations.empty()) {
            auto result = pipeline.run_conversation(corpus.at(id), id);
            state = std::move(result.state);
            windows = result.windows;
        }
        write_file_atomic(bank_path(rt, id), state.bank.snapshot());
        write_file_atomic(index_path(rt, id), state.index.persist());
        summary.push_back({{"conversation_id", id},
                           {"windows", windows},
                           {"memories", state.bank.size()},
                           {"bank", bank_path(rt, id).string()},
                           {"index", index_path(rt, id).string()}});
    }
    std::cout << pretty(summary);
    return kExitOk;
}

int cmd_ask(Runtime& rt, const std::string& question, const std::string& bank_file, std::string index_file) {
    if (index_file.empty()) {
        std::string derived = bank_file;
        const std::string suffix = ".bank.jsonl";
        if (derived.size() > suffix.size() && derived.ends_with(suffix)) {
            derived.replace(derived.size() - suffix.size(), suffix.size(), ".index.jsonl");
            const auto name = fs::path(derived).filename();
            index_file = (rt.config.indexes / name).string();
            if (!fs::exists(index_file)) index_file = derived;
        }
    }
    if (index_file.empty()) throw ConfigError("--index is required when the bank file name is not <id>.bank.jsonl");
    MemoryState state{MemoryBank::load(read_file(bank_file)), VectorIndex::load(read_file(index_file))};
    if (state.bank.ids() != state.index.ids()) throw DataError("bank and index hold different ids");
    MemoryPipeline pipeline(rt.backend("backend"), rt.pipeline_config());
    std::cout << pipeline.run_generation(state, question) << "\n";
    return kExitOk;
}

int cmd_distill(Runtime& rt, const std::string& corpus_arg, const std::string& stage_name, const std::string& out_dir) {
    const auto stage = stage_from_string(stage_name);
    if (!stage) throw ConfigError("--stage must be extraction, update, generation or vqa");
    const auto corpus = corpus_from(rt, corpus_arg);
    auto teacher_config = rt.pipeline_config();
    const auto teacher_backend = rt.config.backend_for("teacher");
    teacher_config.model = teacher_backend.model;
    teacher_config.embedding_model = rt.config.backend_for("backend").embedding_model;
    teacher_config.adapters.clear();
    teacher_config.variant = PromptVariant::MemLora;
    // Teacher generates, the main backend embeds.
    struct TeacherRouter final : Backend {
        Backend& gen;
        Backend& emb;
        TeacherRouter(Backend& g, Backend& e) : gen(g), emb(e) {}
        GenerationResponse generate(const GenerationRequest& r) override { return gen.generate(r); }
        EmbeddingResponse embed(const EmbeddingRequest& r) override { return emb.embed(r); }
        bool supports_vision() const override { return gen.supports_vision(); }
    } router(rt.backend("teacher"), rt.backend("backend"));
    MemoryPipeline teacher(router, teacher_config);
    const auto output = distill_stage(corpus, *stage, teacher, out_dir);
    nlohmann::ordered_json summary;
    summary["stage"] = std::string(to_string(*stage));
    for (const auto& [split, path] : output.files)
        summary[split] = {{"path", path.string()}, {"examples", output.counts.at(split)},
                          {"dropped", output.dropped.at(split)}};
    std::cout << pretty(summary);
    return kExitOk;
}

int cmd_eval(Runtime& rt, const std::string& kind, const std::string& corpus_arg, const std::string& split,
             const std::string& out, std::size_t jobs, bool no_semantic) {
    const auto corpus = corpus_from(rt, corpus_arg);
    const auto convs = select_conversations(corpus, split_ids(corpus, split));
    MemoryPipeline pipeline(rt.backend("backend"), rt.pipeline_config());
    if (kind == "qa") {
        QaEvalOptions options;
        options.judge_model = rt.config.backend_for("judge").model;
        options.jobs = jobs;
        options.semantic = !no_semantic;
        const auto result = full_pipeline_evaluate(convs, pipeline, rt.backend("judge"), options);
        emit(out, pretty(qa_report_json(result)));
        std::cerr << "L=" << result.metrics.L << " J=" << result.judge.J << "\n";
    } else if (kind == "vqa") {
        const auto result = evaluate_vqa(convs, corpus, pipeline);
        emit(out, pretty(vqa_report_json(result)));
        std::cerr << "V=" << result.V << "\n";
    } else {
        throw ConfigError("eval kind must be qa or vqa");
    }
    return kExitOk;
}

int cmd_bench(Runtime& rt, const std::string& corpus_arg, const std::string& conversation, std::size_t questions,
              const std::string& out) {
    const auto corpus = corpus_from(rt, corpus_arg);
    MemoryPipeline pipeline(rt.backend("backend"), rt.pipeline_config());
    std::vector<const Conversation*> convs;
    if (!conversation.empty())
        convs.push_back(&corpus.at(conversation));
    else
        for (const auto& c : corpus.conversations) convs.push_back(&c);

    std::vector<StageTrace> traces;
    for (const auto* conv : convs) {
        auto result = pipeline.run_conversation(*conv, conv->conversation_id);
        traces.insert(traces.end(), result.traces.begin(), result.traces.end());
        std::size_t asked = 0;
        for (const auto& qa : conv->qa) {
            if (questions && asked++ >= questions) break;
            pipeline.run_generation(result.state, qa.question, &traces);
        }
    }
    if (traces.empty()) throw DataError("nothing to benchmark: the corpus slice produced no model calls");
    nlohmann::ordered_json report;
    report["overall"] = to_json(efficiency_stats(traces));
    nlohmann::ordered_json stages;
    for (Stage stage : kAllStages) {
        std::vector<StageTrace> subset;
        for (const auto& t : traces)
            if (t.stage == stage) subset.push_back(t);
        if (subset.empty()) continue;
        stages[std::string(to_string(stage))] = to_json(efficiency_stats(subset));
    }
    report["stages"] = stages;
    emit(out, pretty(report));
    return kExitOk;
}

int cmd_vqa_gen(Runtime& rt, const std::string& corpus_arg, const std::string& out, std::size_t jobs) {
    const auto corpus = corpus_from(rt, corpus_arg);
    ForgeBackends backends{rt.backend("teacher"), rt.config.backend_for("teacher").model, rt.backend("validator"),
                           rt.config.backend_for("validator").model};
    const auto report = run_vqa_forge(corpus, backends, rt.prompts(), jobs);
    emit(out, benchmark_to_jsonl(report.items));
    nlohmann::ordered_json summary;
    auto accuracy = nlohmann::ordered_json::array();
    for (const auto& a : report.ranking.accuracy)
        accuracy.push_back(a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json(nullptr));
    summary["accuracy_by_type"] = accuracy;
    summary["selected_types"] = report.ranking.selected;
    summary["items"] = report.items.size();
    summary["dropped"] = report.dropped;
    summary["removed_by_dedup"] = report.removed_by_dedup;
    std::cerr << summary.dump() << "\n";
    return kExitOk;
}

int cmd_search(Runtime& rt, const std::string& candidates_file, const std::string& corpus_arg, std::size_t jobs) {
    const auto doc = nlohmann::json::parse(read_file(candidates_file), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ConfigError("candidates file must be a JSON object");
    std::map<Stage, std::vector<std::string>> candidates;
    for (const auto& [key, value] : doc.items()) {
        const auto stage = stage_from_string(key);
        if (!stage) throw ConfigError("unknown stage in candidates file: " + key);
        if (!value.is_array()) throw ConfigError("candidates for " + key + " must be a list");
        for (const auto& name : value) {
            if (!name.is_null() && !name.is_string()) throw ConfigError("candidate names must be strings or null");
            candidates[*stage].push_back(name.is_null() ? "" : name.get<std::string>());
        }
    }
    const auto corpus = corpus_from(rt, corpus_arg);
    const auto convs = select_conversations(corpus, split_ids(corpus, "val"));
    const auto base = rt.pipeline_config();
    auto evaluate = [&](const AdapterAssignment& assignment) {
        auto cfg = base;
        for (const auto& [stage, name] : assignment) {
            if (name.empty())
                cfg.adapters.erase(stage);
            else
                cfg.adapters[stage] = name;
        }
        MemoryPipeline pipeline(rt.backend("backend"), cfg);
        QaEvalOptions options;
        options.judge_model = rt.config.backend_for("judge").model;
        options.jobs = jobs;
        const auto result = full_pipeline_evaluate(convs, pipeline, rt.backend("judge"), options);
        return std::make_pair(result.judge.J, result.metrics.L);
    };
    const auto result = combination_search(candidates, evaluate);
    nlohmann::ordered_json out;
    auto describe = [](const CombinationScore& s) {
        nlohmann::ordered_json j;
        nlohmann::ordered_json assignment;
        for (const auto& [stage, name] : s.assignment)
            assignment[std::string(to_string(stage))] = name.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(name);
        j["assignment"] = assignment;
        j["J"] = s.J;
        j["L"] = s.L;
        return j;
    };
    out["best"] = describe(result.best);
    out["evaluated"] = nlohmann::ordered_json::array();
    for (const auto& s : result.evaluated) out["evaluated"].push_back(describe(s));
    std::cout << pretty(out);
    return kExitOk;
}

int report_error(const std::string& kind, const std::string& message, int code) {
    nlohmann::ordered_json record;
    record["error"] = kind;
    record["message"] = message;
    record["exit_code"] = code;
    std::cerr << record.dump() << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"memlora: memory pipeline with per-stage expert adapters"};
    app.require_subcommand(1);
    GlobalOptions g;
    app.add_option("--config", g.config_path, "Configuration file (JSON)");
    app.add_option("--mock-script", g.mock_script, "Serve every backend role from this mock script (no network)");
    app.add_option("--jobs", g.jobs, "Parallel conversations/questions")->check(CLI::Range(1, 256));
    app.add_option("--variant", g.variant, "Prompt variant: MEM0 or MEMLORA");
    app.add_option("--k", g.retrieval_k, "Retrieval depth")->check(CLI::Range(1, 100000));
    app.add_option("--backend-url", g.backend_url, "Main backend URL");
    app.add_option("--today", g.today, "Date injected into MEM0 extraction prompts (YYYY-MM-DD)");
    app.add_option("--prompts", g.prompts_dir, "Prompt template override directory");
    app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error or off");

    std::string corpus, conversation, question, bank, index, stage, out, split = "test", kind, candidates;
    std::size_t bench_questions = 0;
    bool no_semantic = false;

    auto* ingest = app.add_subcommand("ingest", "Build the memory bank and index of conversations");
    ingest->add_option("corpus", corpus, "Corpus file");
    ingest->add_option("--conversation", conversation, "Conversation id (default: all)");

    auto* ask = app.add_subcommand("ask", "Answer a question from a stored bank");
    ask->add_option("question", question, "Question")->required();
    ask->add_option("--bank", bank, "Bank file")->required();
    ask->add_option("--index", index, "Index file (default: derived from the bank name)");

    auto* distill = app.add_subcommand("distill", "Emit teacher training examples for one stage");
    distill->add_option("corpus", corpus, "Corpus file");
    distill->add_option("--stage", stage, "extraction, update, generation or vqa")->required();
    distill->add_option("--out", out, "Output directory")->default_val("distill");

    auto* eval = app.add_subcommand("eval", "Evaluate QA (L, J) or VQA (V)");
    eval->add_option("kind", kind, "qa or vqa")->required()->check(CLI::IsMember({"qa", "vqa"}));
    eval->add_option("corpus", corpus, "Corpus file");
    eval->add_option("--split", split, "train, val, test or all")->default_val("test");
    eval->add_option("--out", out, "Report file (default: stdout)");
    eval->add_flag("--no-semantic", no_semantic, "Skip embedding-based metrics");

    auto* bench = app.add_subcommand("bench", "Replay a corpus slice and report tok/s, tok/ans, s/ans");
    bench->add_option("corpus", corpus, "Corpus file");
    bench->add_option("--conversation", conversation, "Conversation id (default: all)");
    bench->add_option("--questions", bench_questions, "Questions per conversation (0: all)");
    bench->add_option("--out", out, "Report file (default: stdout)");

    auto* vqa_gen = app.add_subcommand("vqa-gen", "Rank instruction types and build the VQA benchmark");
    vqa_gen->add_option("corpus", corpus, "Corpus file");
    vqa_gen->add_option("--out", out, "Benchmark file (default: stdout)");

    auto* search = app.add_subcommand("search-experts", "Pick the best adapter per stage on the validation split");
    search->add_option("candidates", candidates, "Candidates file: {\"extraction\": [..], ...}")->required();
    search->add_option("--corpus", corpus, "Corpus file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("usage", e.what(), kExitConfig);
    }

    auto logger = spdlog::stderr_color_mt("memlora");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        Runtime rt = make_runtime(g);
        if (*ingest) return cmd_ingest(rt, corpus, conversation);
        if (*ask) return cmd_ask(rt, question, bank, index);
        if (*distill) return cmd_distill(rt, corpus, stage, out);
        if (*eval) return cmd_eval(rt, kind, corpus, split, out, g.jobs, no_semantic);
        if (*bench) return cmd_bench(rt, corpus, conversation, bench_questions, out);
        if (*vqa_gen) return cmd_vqa_gen(rt, corpus, out, g.jobs);
        if (*search) return cmd_search(rt, candidates, corpus, g.jobs);
    } catch (const ConfigError& e) {
        return report_error("config", e.what(), kExitConfig);
    } catch (const PromptError& e) {
        return report_error("config", e.what(), kExitConfig);
    } catch (const BackendError& e) {
        return report_error("backend", e.what(), kExitBackend);
    } catch (const StageError& e) {
        return report_error("backend", e.what(), kExitBackend);
    } catch (const DataError& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const DecodeError& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const ParseError& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const DimensionError& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const std::invalid_argument& e) {
        return report_error("data", e.what(), kExitData);
    } catch (const std::exception& e) {
        return report_error("internal", e.what(), 1);
    }
    return kExitOk;
}
