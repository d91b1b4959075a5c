#include "memlora/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

#include <spdlog/spdlog.h>

#include "memlora/metrics.hpp"

namespace memlora {

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    if (jobs <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

SampleScores score_sample(std::string_view answer, std::string_view gold, Backend* embedder,
                          const std::string& embedding_model, std::vector<std::string>* flags) {
    SampleScores s;
    bool empty = false;
    s.rouge1 = rouge1_f(answer, gold, &empty);
    if (empty && flags) flags->push_back("empty_after_tokenization");
    s.meteor = meteor(answer, gold);
    if (embedder) {
        const auto sem = semantic_sim(answer, gold, *embedder, embedding_model);
        if (sem.failed && flags) flags->push_back("semantic_backend_failure");
        s.sbert = sem.sbert_sim;
        s.bertscore = sem.bertscore_f1;
    }
    return s;
}

MetricReport metric_report(std::span<const SampleScores> samples) {
    if (samples.empty()) throw std::invalid_argument("metric report needs at least one sample");
    const double n = static_cast<double>(samples.size());
    MetricReport report;
    double rouge = 0.0, met = 0.0, sbert = 0.0, bert = 0.0;
    bool all_sbert = true, all_bert = true;
    for (const auto& s : samples) {
        rouge += s.rouge1;
        met += s.meteor;
        if (s.sbert)
            sbert += *s.sbert;
        else
            all_sbert = false;
        if (s.bertscore)
            bert += *s.bertscore;
        else
            all_bert = false;
    }
    report.rouge1_f = rouge / n;
    report.meteor = met / n;
    report.enabled_metrics = {metric_names::kRouge1, metric_names::kMeteor};
    std::vector<double> enabled{report.rouge1_f, report.meteor};
    if (all_bert) {
        report.bertscore_f1 = bert / n;
        report.enabled_metrics.push_back(metric_names::kBertScore);
        enabled.push_back(*report.bertscore_f1);
    } else {
        report.flags.push_back("bertscore_f1 disabled: token embeddings unavailable for some samples");
    }
    if (all_sbert) {
        report.sbert_sim = sbert / n;
        report.enabled_metrics.push_back(metric_names::kSbert);
        enabled.push_back(*report.sbert_sim);
    } else {
        report.flags.push_back("sbert_sim disabled: sentence embeddings unavailable for some samples");
    }
    report.L = 100.0 * std::accumulate(enabled.begin(), enabled.end(), 0.0) / static_cast<double>(enabled.size());
    return report;
}

JudgeVerdict judge_one(const JudgeSample& sample, Backend& judge, const std::string& judge_model,
                       const PromptCatalog& catalog) {
    JudgeVerdict verdict;
    // An empty generated answer still deserves a verdict; the judge sees a
    // visible marker instead of nothing.
    const std::string generated = trim(sample.generated).empty() ? "(no answer)" : sample.generated;
    GenerationRequest request;
    request.model = judge_model;
    request.adapter = {Stage::Generation, std::nullopt};
    request.messages = {{Role::User, render_judge(sample.question, sample.gold, generated, catalog), std::nullopt}};
    request.temperature = 0.0;
    request.max_output_tokens = default_max_output_tokens(Stage::Generation);
    try {
        const auto response = judge.generate(request);
        verdict.explanation = response.text;
        verdict.label = parse_judge_label(response.text);
    } catch (const ParseError& e) {
        spdlog::warn("judge reply unusable, counting WRONG: {}", e.what());
        verdict.label = JudgeLabel::Wrong;
        verdict.forced = true;
    } catch (const BackendError& e) {
        spdlog::warn("judge call failed, counting WRONG: {}", e.what());
        verdict.label = JudgeLabel::Wrong;
        verdict.explanation = e.what();
        verdict.forced = true;
    }
    return verdict;
}

JudgeOutcome judge_J(std::span<const JudgeSample> samples, Backend& judge, const std::string& judge_model,
                     const PromptCatalog& catalog, std::size_t jobs) {
    if (samples.empty()) throw std::invalid_argument("judge score needs at least one sample");
    JudgeOutcome outcome;
    outcome.verdicts.resize(samples.size());
    parallel_for(samples.size(), jobs,
                 [&](std::size_t i) { outcome.verdicts[i] = judge_one(samples[i], judge, judge_model, catalog); });
    std::size_t correct = 0;
    for (const auto& v : outcome.verdicts) {
        if (v.label == JudgeLabel::Correct) ++correct;
        if (v.forced) ++outcome.forced_wrong;
    }
    outcome.J = 100.0 * static_cast<double>(correct) / static_cast<double>(samples.size());
    return outcome;
}

bool vqa_match(std::string_view prediction, std::string_view reference) {
    return to_lower_ascii(trim(prediction)) == to_lower_ascii(trim(reference));
}

double vqa_V(std::span<const std::string> predictions, std::span<const std::string> references) {
    if (predictions.size() != references.size())
        throw std::invalid_argument("vqa score needs as many predictions as references");
    if (predictions.empty()) throw std::invalid_argument("vqa score needs at least one sample");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (vqa_match(predictions[i], references[i])) ++hits;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

int delta_J(double j_expert, double j_base) {
    if (!(j_base > 0.0)) throw std::invalid_argument("base J must be positive");
    // Snap to 1e-6 first so decimal halves (757.4999...) round as written.
    const double pct = 100.0 * (j_expert - j_base) / j_base;
    return static_cast<int>(std::lround(std::round(pct * 1e6) / 1e6));
}

EfficiencyReport efficiency_stats(std::span<const StageTrace> traces) {
    if (traces.empty()) throw std::invalid_argument("efficiency needs at least one trace");
    double tokens = 0.0, latency = 0.0;
    for (const auto& t : traces) {
        if (t.completion_tokens < 0 || t.latency_seconds < 0.0) throw std::invalid_argument("negative trace values");
        tokens += static_cast<double>(t.completion_tokens);
        latency += t.latency_seconds;
    }
    if (latency <= 0.0) throw std::invalid_argument("efficiency needs positive total latency");
    const double n = static_cast<double>(traces.size());
    return {tokens / latency, tokens / n, latency / n, traces.size()};
}

nlohmann::ordered_json to_json(const MetricReport& report) {
    nlohmann::ordered_json j;
    j["rouge1_f"] = report.rouge1_f;
    j["meteor"] = report.meteor;
    j["bertscore_f1"] = report.bertscore_f1 ? nlohmann::ordered_json(*report.bertscore_f1) : nlohmann::ordered_json(nullptr);
    j["sbert_sim"] = report.sbert_sim ? nlohmann::ordered_json(*report.sbert_sim) : nlohmann::ordered_json(nullptr);
    j["L"] = report.L;
    j["enabled_metrics"] = report.enabled_metrics;
    j["flags"] = report.flags;
    return j;
}

nlohmann::ordered_json to_json(const EfficiencyReport& report) {
    nlohmann::ordered_json j;
    j["tok_per_s"] = report.tok_per_s;
    j["tok_per_ans"] = report.tok_per_ans;
    j["s_per_ans"] = report.s_per_ans;
    j["calls"] = report.calls;
    return j;
}

bool better_combination(const CombinationScore& a, const CombinationScore& b) {
    if (a.J != b.J) return a.J > b.J;
    if (a.L != b.L) return a.L > b.L;
    std::vector<std::string> na, nb;
    for (const auto& [stage, name] : a.assignment) na.push_back(name);
    for (const auto& [stage, name] : b.assignment) nb.push_back(name);
    return na < nb;
}

CombinationResult combination_search(const std::map<Stage, std::vector<std::string>>& candidates,
                                     const CombinationEvaluator& evaluate) {
    if (candidates.empty()) throw std::invalid_argument("no stages to search");
    std::vector<std::pair<Stage, std::vector<std::string>>> stages;
    for (const auto& [stage, names] : candidates) {
        if (names.empty())
            throw std::invalid_argument("empty candidate set for stage " + std::string(to_string(stage)));
        stages.emplace_back(stage, names);
    }

    CombinationResult result;
    std::vector<std::size_t> pos(stages.size(), 0);
    while (true) {
        CombinationScore score;
        for (std::size_t s = 0; s < stages.size(); ++s) score.assignment[stages[s].first] = stages[s].second[pos[s]];
        std::tie(score.J, score.L) = evaluate(score.assignment);
        if (result.evaluated.empty() || better_combination(score, result.best)) result.best = score;
        result.evaluated.push_back(std::move(score));

        // Odometer increment, last stage fastest.
        std::size_t s = stages.size();
        while (s > 0) {
            --s;
            if (++pos[s] < stages[s].second.size()) break;
            pos[s] = 0;
            if (s == 0) return result;
        }
    }
}

QaEvalResult full_pipeline_evaluate(const std::vector<const Conversation*>& conversations,
                                    const MemoryPipeline& pipeline, Backend& judge, const QaEvalOptions& options) {
    struct PerConversation {
        std::vector<QaRecord> records;
        std::vector<StageTrace> traces;
    };
    std::vector<PerConversation> parts(conversations.size());
    parallel_for(conversations.size(), options.jobs, [&](std::size_t c) {
        const auto& conv = *conversations[c];
        auto ingested = pipeline.run_conversation(conv, conv.conversation_id);
        auto& part = parts[c];
        part.traces = std::move(ingested.traces);
        for (const auto& qa : conv.qa) {
            QaRecord rec;
            rec.conversation_id = conv.conversation_id;
            rec.question_id = qa.question_id;
            rec.category = qa.category;
            rec.question = qa.question;
            rec.gold = qa.answer;
            rec.answer = pipeline.run_generation(ingested.state, qa.question, &part.traces);
            part.records.push_back(std::move(rec));
        }
    });

    QaEvalResult result;
    for (auto& part : parts) {
        for (auto& r : part.records) result.records.push_back(std::move(r));
        for (auto& t : part.traces) result.traces.push_back(t);
    }
    if (result.records.empty()) throw DataError("no questions to evaluate");

    std::vector<std::string> flags;
    Backend* embedder = options.semantic ? &pipeline.backend() : nullptr;
    std::vector<SampleScores> scores(result.records.size());
    std::vector<std::vector<std::string>> sample_flags(result.records.size());
    parallel_for(result.records.size(), options.jobs, [&](std::size_t i) {
        scores[i] = score_sample(result.records[i].answer, result.records[i].gold, embedder,
                                 pipeline.config().embedding_model, &sample_flags[i]);
    });
    std::set<std::string> unique_flags;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        result.records[i].scores = scores[i];
        unique_flags.insert(sample_flags[i].begin(), sample_flags[i].end());
    }
    result.metrics = metric_report(scores);
    if (!options.semantic) result.metrics.flags.push_back("semantic metrics not requested");
    result.metrics.flags.insert(result.metrics.flags.end(), unique_flags.begin(), unique_flags.end());

    std::vector<JudgeSample> samples;
    for (const auto& r : result.records) samples.push_back({r.question, r.gold, r.answer});
    result.judge = judge_J(samples, judge, options.judge_model, pipeline.config().prompts(), options.jobs);
    for (std::size_t i = 0; i < result.records.size(); ++i) result.records[i].verdict = result.judge.verdicts[i];
    result.efficiency = efficiency_stats(result.traces);
    return result;
}

namespace {

nlohmann::ordered_json optional_number(const std::optional<double>& value) {
    return value ? nlohmann::ordered_json(*value) : nlohmann::ordered_json(nullptr);
}

} // namespace

nlohmann::ordered_json qa_report_json(const QaEvalResult& result) {
    nlohmann::ordered_json report;
    auto records = nlohmann::ordered_json::array();
    for (const auto& r : result.records) {
        nlohmann::ordered_json j;
        j["question_id"] = r.question_id;
        j["conversation_id"] = r.conversation_id;
        j["category"] = r.category;
        j["question"] = r.question;
        j["answer"] = r.answer;
        j["gold"] = r.gold;
        j["rouge1"] = r.scores.rouge1;
        j["meteor"] = r.scores.meteor;
        j["sbert"] = optional_number(r.scores.sbert);
        j["bertscore"] = optional_number(r.scores.bertscore);
        j["judge_label"] = std::string(to_string(r.verdict.label));
        j["judge_forced"] = r.verdict.forced;
        records.push_back(std::move(j));
    }
    report["records"] = std::move(records);
    nlohmann::ordered_json aggregate;
    aggregate["samples"] = result.records.size();
    aggregate["L"] = result.metrics.L;
    aggregate["J"] = result.judge.J;
    aggregate["judge_forced_wrong"] = result.judge.forced_wrong;
    aggregate["metrics"] = to_json(result.metrics);
    aggregate["efficiency"] = to_json(result.efficiency);
    report["aggregate"] = std::move(aggregate);
    return report;
}

VqaEvalResult evaluate_vqa(const std::vector<const Conversation*>& conversations, const Corpus& corpus,
                           const MemoryPipeline& pipeline) {
    VqaEvalResult result;
    std::vector<std::string> predictions, references;
    for (const auto* conv : conversations) {
        std::size_t k = 0;
        for (const auto& item : conv->vqa) {
            VqaRecordResult rec;
            rec.conversation_id = conv->conversation_id;
            rec.question_id = conv->conversation_id + ":v" + std::to_string(k++);
            rec.image = item.image;
            rec.question = item.question;
            rec.gold = item.answer;
            const auto image = load_image(corpus, item.image);
            try {
                rec.prediction = pipeline.answer_vqa(image, item.question, &result.traces).answer;
            } catch (const StageError& e) {
                // Unanswerable counts as a miss rather than shrinking the set.
                rec.error = e.what();
                spdlog::warn("vqa item {} unanswered: {}", rec.question_id, e.what());
            }
            rec.match = vqa_match(rec.prediction, rec.gold);
            predictions.push_back(rec.prediction);
            references.push_back(rec.gold);
            result.records.push_back(std::move(rec));
        }
    }
    if (result.records.empty()) throw DataError("no vqa items to evaluate");
    result.V = vqa_V(predictions, references);
    if (!result.traces.empty()) result.efficiency = efficiency_stats(result.traces);
    return result;
}

nlohmann::ordered_json vqa_report_json(const VqaEvalResult& result) {
    nlohmann::ordered_json report;
    auto records = nlohmann::ordered_json::array();
    for (const auto& r : result.records) {
        nlohmann::ordered_json j;
        j["question_id"] = r.question_id;
        j["conversation_id"] = r.conversation_id;
        j["image"] = r.image;
        j["question"] = r.question;
        j["answer"] = r.prediction;
        j["gold"] = r.gold;
        j["match"] = r.match;
        if (!r.error.empty()) j["error"] = r.error;
        records.push_back(std::move(j));
    }
    report["records"] = std::move(records);
    nlohmann::ordered_json aggregate;
    aggregate["samples"] = result.records.size();
    aggregate["V"] = result.V;
    aggregate["efficiency"] = result.efficiency ? to_json(*result.efficiency) : nlohmann::ordered_json(nullptr);
    report["aggregate"] = std::move(aggregate);
    return report;
}

} // namespace memlora
