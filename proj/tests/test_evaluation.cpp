#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include "memlora/evaluation.hpp"
#include "test_support.hpp"

using namespace memlora;
using nlohmann::json;
namespace mt = memlora::testing;

TEST(DeltaJ, PublishedPairs) {
    EXPECT_EQ(delta_J(36.9, 29.6), 25);
    EXPECT_EQ(delta_J(42.1, 29.6), 42);
    EXPECT_EQ(delta_J(47.2, 24.9), 90);
    EXPECT_EQ(delta_J(44.6, 24.9), 79);
    EXPECT_EQ(delta_J(20.0, 40.0), -50);
    EXPECT_THROW(delta_J(1.0, 0.0), std::invalid_argument);
}

TEST(DeltaJProperty, MatchesIntegerRounding) {
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> tenths(1, 1000);
    for (int trial = 0; trial < 5000; ++trial) {
        const int base = tenths(rng), expert = tenths(rng);
        // round-half-away-from-zero of 100 (e - b) / b, in exact integer arithmetic
        const long num = 100L * (expert - base), den = base;
        const long q = num >= 0 ? (2 * num + den) / (2 * den) : -((-2 * num + den) / (2 * den));
        ASSERT_EQ(delta_J(expert / 10.0, base / 10.0), q) << expert << " " << base;
    }
}

TEST(Vqa, NormalizedExactMatch) {
    EXPECT_TRUE(vqa_match("No ", "no"));
    EXPECT_TRUE(vqa_match("  YES", "yes "));
    EXPECT_FALSE(vqa_match("four", "4"));
    EXPECT_FALSE(vqa_match("red.", "red"));
}

TEST(Vqa, GoldenSetScore) {
    const std::vector<std::string> pred = {"No ", "four", "Red", "3", "yes", "cat", "Blue", "two", "", "Left"};
    const std::vector<std::string> gold = {"no", "4", "red", "3", "no", "Cat", "blue", "2", "none", "left"};
    // Matches: 1, 3, 4, 6, 7, 10 -> 6 of 10.
    EXPECT_DOUBLE_EQ(vqa_V(pred, gold), 60.0);
    EXPECT_THROW(vqa_V(pred, std::vector<std::string>{"x"}), std::invalid_argument);
    EXPECT_THROW(vqa_V(std::vector<std::string>{}, std::vector<std::string>{}), std::invalid_argument);
}

TEST(Efficiency, DefinitionalArithmetic) {
    const std::vector<StageTrace> one = {{Stage::Generation, 10, 50, 0.5, std::nullopt}};
    const auto e = efficiency_stats(one);
    EXPECT_DOUBLE_EQ(e.tok_per_s, 100.0);
    EXPECT_DOUBLE_EQ(e.tok_per_ans, 50.0);
    EXPECT_DOUBLE_EQ(e.s_per_ans, 0.5);
    EXPECT_THROW(efficiency_stats(std::vector<StageTrace>{}), std::invalid_argument);
    EXPECT_THROW(efficiency_stats(std::vector<StageTrace>{{Stage::Update, 1, 1, 0.0, {}}}), std::invalid_argument);
}

TEST(Efficiency, ScriptedTracesThroughThePipeline) {
    auto backend = mt::mock_backend({{"rules",
                                      {{{"stage", "generation"}, {"contains", {"first"}}, {"response", "a"},
                                        {"prompt_tokens", 10}, {"completion_tokens", 30}, {"latency_seconds", 0.2}},
                                       {{"stage", "generation"}, {"response", "b"}, {"prompt_tokens", 10},
                                        {"completion_tokens", 90}, {"latency_seconds", 0.6}}}}});
    MemoryPipeline pipeline(backend, PipelineConfig{});
    std::vector<StageTrace> traces;
    pipeline.run_generation(MemoryState{}, "first question", &traces);
    pipeline.run_generation(MemoryState{}, "second question", &traces);
    const auto e = efficiency_stats(traces);
    EXPECT_NEAR(e.tok_per_s, 120.0 / 0.8, 1e-9);
    EXPECT_NEAR(e.tok_per_ans, 60.0, 1e-9);
    EXPECT_NEAR(e.s_per_ans, 0.4, 1e-9);
    EXPECT_EQ(e.calls, 2u);
}

TEST(Efficiency, PublishedRowIsInternallyConsistent) {
    // tok/ans divided by tok/s gives s/ans: 97.63 / 9.2 against 10.66.
    const double s_per_ans = 97.63 / 9.2;
    EXPECT_NEAR(s_per_ans, 10.61, 0.005);
    EXPECT_LT(std::abs(s_per_ans - 10.66) / 10.66, 0.01);
}

TEST(MetricReport, MeansAndEnabledMetrics) {
    std::vector<SampleScores> s(2);
    s[0] = {1.0, 0.5, 0.8, std::nullopt};
    s[1] = {0.0, 0.5, 0.6, std::nullopt};
    const auto r = metric_report(s);
    EXPECT_DOUBLE_EQ(r.rouge1_f, 0.5);
    EXPECT_DOUBLE_EQ(r.meteor, 0.5);
    EXPECT_NEAR(*r.sbert_sim, 0.7, 1e-12);
    EXPECT_FALSE(r.bertscore_f1);
    EXPECT_EQ(r.enabled_metrics, (std::vector<std::string>{"rouge1_f", "meteor", "sbert_sim"}));
    EXPECT_NEAR(r.L, 100.0 * (0.5 + 0.5 + 0.7) / 3, 1e-9);
    // One missing semantic score disables the metric for the report.
    s[1].sbert.reset();
    const auto partial = metric_report(s);
    EXPECT_FALSE(partial.sbert_sim);
    EXPECT_DOUBLE_EQ(partial.L, 50.0);
    EXPECT_THROW(metric_report(std::vector<SampleScores>{}), std::invalid_argument);
}

TEST(Judge, CountsForcedAndFailedAsWrong) {
    auto judge = mt::mock_backend({{"rules",
                                    {{{"contains", {"Generated answer: right"}}, {"response", R"({"label": "CORRECT"})"}},
                                     {{"contains", {"Generated answer: wrong"}}, {"response", "Off topic. WRONG"}},
                                     {{"contains", {"Generated answer: both"}}, {"response", "CORRECT? WRONG?"}},
                                     {{"contains", {"Generated answer: (no answer)"}}, {"response", "WRONG"}}}}});
    const std::vector<JudgeSample> samples = {
        {"q", "g", "right"}, {"q", "g", "wrong"}, {"q", "g", "both"}, {"q", "g", "unscripted"}, {"q", "g", "  "}};
    const auto out = judge_J(samples, judge, "judge", PromptCatalog::builtin(), 3);
    EXPECT_DOUBLE_EQ(out.J, 20.0);
    EXPECT_EQ(out.forced_wrong, 2u);
    EXPECT_FALSE(out.verdicts[1].forced);
    EXPECT_TRUE(out.verdicts[2].forced);
    EXPECT_TRUE(out.verdicts[3].forced);
    EXPECT_EQ(out.verdicts[4].label, JudgeLabel::Wrong);
    EXPECT_FALSE(out.verdicts[4].forced);
    EXPECT_THROW(judge_J(std::vector<JudgeSample>{}, judge, "judge"), std::invalid_argument);
}

namespace {

// Exhaustive argmax with an explicit key: max J, max L, then smallest names.
CombinationScore oracle_best(const std::vector<CombinationScore>& all) {
    auto key = [](const CombinationScore& c) {
        std::vector<std::string> names;
        for (const auto& [s, n] : c.assignment) names.push_back(n);
        return std::make_tuple(-c.J, -c.L, names);
    };
    return *std::min_element(all.begin(), all.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
}

} // namespace

TEST(CombinationSearchProperty, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(17);
    for (std::size_t width : {2u, 3u}) {
        for (int trial = 0; trial < 200; ++trial) {
            std::map<Stage, std::vector<std::string>> candidates;
            for (Stage s : {Stage::Extraction, Stage::Update, Stage::Generation}) {
                std::vector<std::string> names = {""}; // base model
                for (std::size_t i = 1; i < width; ++i) names.push_back(std::string(to_string(s)) + "-" + char('a' + i));
                std::shuffle(names.begin(), names.end(), rng);
                candidates[s] = names;
            }
            // Coarse scores so ties on J and on (J, L) are frequent.
            std::map<AdapterAssignment, std::pair<double, double>> table;
            std::uniform_int_distribution<int> coarse(0, 2);
            std::vector<CombinationScore> all;
            for (const auto& e : candidates.at(Stage::Extraction))
                for (const auto& u : candidates.at(Stage::Update))
                    for (const auto& g : candidates.at(Stage::Generation)) {
                        AdapterAssignment a{{Stage::Extraction, e}, {Stage::Update, u}, {Stage::Generation, g}};
                        table[a] = {10.0 * coarse(rng), 5.0 * coarse(rng)};
                        all.push_back({a, table[a].first, table[a].second});
                    }
            std::size_t calls = 0;
            const auto result = combination_search(candidates, [&](const AdapterAssignment& a) {
                ++calls;
                return table.at(a);
            });
            ASSERT_EQ(calls, width * width * width);
            ASSERT_EQ(result.evaluated.size(), calls);
            const auto want = oracle_best(all);
            ASSERT_EQ(result.best.assignment, want.assignment);
            ASSERT_EQ(result.best.J, want.J);
            ASSERT_EQ(result.best.L, want.L);
        }
    }
    EXPECT_THROW(combination_search({}, [](const AdapterAssignment&) { return std::pair{0.0, 0.0}; }),
                 std::invalid_argument);
}

TEST(FullPipeline, GoldenConversationReport) {
    const auto run = mt::run_golden();
    const auto report = json::parse(run.report);
    const auto& agg = report["aggregate"];
    EXPECT_EQ(agg["samples"], 3);
    EXPECT_NEAR(agg["J"].get<double>(), 200.0 / 3, 1e-9);
    EXPECT_EQ(agg["judge_forced_wrong"], 0);
    EXPECT_EQ(report["records"][0]["answer"], "A shell necklace");
    EXPECT_EQ(report["records"][2]["judge_label"], "WRONG");
    EXPECT_EQ(agg["metrics"]["enabled_metrics"], json({"rouge1_f", "meteor", "sbert_sim"}));
    const auto bank = MemoryBank::load(run.bank);
    EXPECT_EQ(bank.ids(), (std::vector<MemoryId>{0, 1, 2, 3, 4}));
    EXPECT_EQ(bank.find(4)->text, "Coaches the school soccer team on weekends");
    EXPECT_EQ(bank.find(1)->text, "School classrooms are safer after renovations and host soccer practice");
}

TEST(FullPipeline, ParallelJobsKeepOrderAndBytes) {
    const auto corpus = mt::synthetic_corpus(6);
    auto script = mt::synthetic_teacher_script(6);
    script["rules"].insert(script["rules"].begin(),
                           json{{"stage", "generation"}, {"adapter", nullptr}, {"contains", {"Gold answer"}},
                                {"response", "CORRECT"}});
    script["rules"].push_back({{"stage", "generation"}, {"response", "A cat"}});
    auto backend = mt::mock_backend(script);
    MemoryPipeline pipeline(backend, PipelineConfig{});
    std::vector<const Conversation*> convs;
    for (const auto& c : corpus.conversations) convs.push_back(&c);
    QaEvalOptions serial;
    QaEvalOptions parallel;
    parallel.jobs = 4;
    const auto a = qa_report_json(full_pipeline_evaluate(convs, pipeline, backend, serial)).dump();
    const auto b = qa_report_json(full_pipeline_evaluate(convs, pipeline, backend, parallel)).dump();
    EXPECT_EQ(a, b);
}

TEST(ParallelFor, FirstExceptionByIndexPropagates) {
    std::vector<int> hits(50, 0);
    parallel_for(50, 8, [&](std::size_t i) { hits[i] = 1; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 50);
    try {
        parallel_for(10, 4, [](std::size_t i) {
            if (i == 3 || i == 7) throw std::runtime_error("fail " + std::to_string(i));
        });
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_STREQ(e.what(), "fail 3");
    }
}
