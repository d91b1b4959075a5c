#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memlora/backend.hpp"
#include "memlora/corpus.hpp"
#include "memlora/parse.hpp"
#include "memlora/pipeline.hpp"

namespace memlora {

namespace metric_names {
inline constexpr const char* kRouge1 = "rouge1_f";
inline constexpr const char* kMeteor = "meteor";
inline constexpr const char* kBertScore = "bertscore_f1";
inline constexpr const char* kSbert = "sbert_sim";
} // namespace metric_names

struct SampleScores {
    double rouge1 = 0.0;
    double meteor = 0.0;
    std::optional<double> sbert;
    std::optional<double> bertscore;
};

struct MetricReport {
    double rouge1_f = 0.0;
    double meteor = 0.0;
    std::optional<double> bertscore_f1;
    std::optional<double> sbert_sim;
    double L = 0.0;                           // 100 x mean of enabled sub-metrics
    std::vector<std::string> enabled_metrics; // fixed order: rouge1, meteor, bertscore, sbert
    std::vector<std::string> flags;           // why a metric is missing, degenerate inputs
};

// Means over samples. A semantic metric is enabled only when every sample
// has a value for it. Throws std::invalid_argument for zero samples.
MetricReport metric_report(std::span<const SampleScores> samples);

SampleScores score_sample(std::string_view answer, std::string_view gold, Backend* embedder,
                          const std::string& embedding_model, std::vector<std::string>* flags = nullptr);

struct JudgeSample {
    std::string question;
    std::string gold;
    std::string generated;
};

struct JudgeVerdict {
    JudgeLabel label = JudgeLabel::Wrong;
    std::string explanation; // raw judge reply, or why the sample was forced WRONG
    bool forced = false;     // ambiguous reply or backend failure
};

struct JudgeOutcome {
    double J = 0.0; // 100 x CORRECT / samples
    std::vector<JudgeVerdict> verdicts;
    std::size_t forced_wrong = 0;
};

// Temperature-0 judge calls on the base judge model. Ambiguous replies and
// failed calls count as WRONG. Throws std::invalid_argument for zero samples.
JudgeOutcome judge_J(std::span<const JudgeSample> samples, Backend& judge, const std::string& judge_model,
                     const PromptCatalog& catalog = PromptCatalog::builtin(), std::size_t jobs = 1);

JudgeVerdict judge_one(const JudgeSample& sample, Backend& judge, const std::string& judge_model,
                       const PromptCatalog& catalog = PromptCatalog::builtin());

// Lowercase and trim both sides, then exact match.
bool vqa_match(std::string_view prediction, std::string_view reference);
double vqa_V(std::span<const std::string> predictions, std::span<const std::string> references);

// round(100 (j_expert - j_base) / j_base); j_base must be positive.
int delta_J(double j_expert, double j_base);

struct EfficiencyReport {
    double tok_per_s = 0.0;
    double tok_per_ans = 0.0;
    double s_per_ans = 0.0;
    std::size_t calls = 0;
};

EfficiencyReport efficiency_stats(std::span<const StageTrace> traces);

nlohmann::ordered_json to_json(const MetricReport& report);
nlohmann::ordered_json to_json(const EfficiencyReport& report);

using AdapterAssignment = std::map<Stage, std::string>; // empty name: base model

struct CombinationScore {
    AdapterAssignment assignment;
    double J = 0.0;
    double L = 0.0;
};

struct CombinationResult {
    CombinationScore best;
    std::vector<CombinationScore> evaluated; // enumeration order
};

// True when `a` ranks above `b`: higher J, then higher L, then the
// lexicographically smaller adapter names in stage order.
bool better_combination(const CombinationScore& a, const CombinationScore& b);

using CombinationEvaluator = std::function<std::pair<double, double>(const AdapterAssignment&)>; // (J, L)

// Evaluates every assignment in the Cartesian product of the candidates.
CombinationResult combination_search(const std::map<Stage, std::vector<std::string>>& candidates,
                                     const CombinationEvaluator& evaluate);

struct QaEvalOptions {
    std::string judge_model = "judge";
    bool semantic = true;
    std::size_t jobs = 1;
};

struct QaRecord {
    std::string conversation_id;
    std::string question_id;
    std::string category;
    std::string question;
    std::string answer;
    std::string gold;
    SampleScores scores;
    JudgeVerdict verdict;
};

struct QaEvalResult {
    std::vector<QaRecord> records;
    MetricReport metrics;
    JudgeOutcome judge;
    EfficiencyReport efficiency;
    std::vector<StageTrace> traces;
};

// Ingests each conversation into a fresh bank, answers its questions, then
// scores L and J. Conversations may run in parallel (`jobs`); results keep
// input order.
QaEvalResult full_pipeline_evaluate(const std::vector<const Conversation*>& conversations,
                                    const MemoryPipeline& pipeline, Backend& judge, const QaEvalOptions& options);

nlohmann::ordered_json qa_report_json(const QaEvalResult& result);

struct VqaRecordResult {
    std::string conversation_id;
    std::string question_id;
    std::string image;
    std::string question;
    std::string prediction;
    std::string gold;
    bool match = false;
    std::string error;
};

struct VqaEvalResult {
    std::vector<VqaRecordResult> records;
    double V = 0.0;
    std::optional<EfficiencyReport> efficiency;
    std::vector<StageTrace> traces;
};

VqaEvalResult evaluate_vqa(const std::vector<const Conversation*>& conversations, const Corpus& corpus,
                           const MemoryPipeline& pipeline);

nlohmann::ordered_json vqa_report_json(const VqaEvalResult& result);

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads; exceptions propagate
// (the first one by index).
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

} // namespace memlora
