#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "memlora/errors.hpp"
#include "memlora/metrics.hpp"
#include "memlora/stemmer.hpp"
#include "test_support.hpp"

using namespace memlora;
namespace mt = memlora::testing;

TEST(Metrics, ReferenceValues) {
    EXPECT_NEAR(rouge1_f("a shell necklace", "shell necklace"), 0.8, 1e-9);
    EXPECT_NEAR(meteor("a b c d", "a b c d"), 0.9921875, 1e-9);
    EXPECT_NEAR(meteor("necklace", "necklace"), 0.5, 1e-9);
}

TEST(Metrics, Tokens) {
    EXPECT_EQ(metric_tokens("A shell-necklace, 2 of them!"),
              (std::vector<std::string>{"a", "shell", "necklace", "2", "of", "them"}));
}

TEST(Rouge, ClippedCountsAndEmptyInputs) {
    // candidate "the the the" vs reference "the cat": overlap clipped to 1.
    EXPECT_NEAR(rouge1_f("the the the", "the cat"), 2.0 * (1.0 / 3) * 0.5 / (1.0 / 3 + 0.5), 1e-12);
    bool empty = false;
    EXPECT_EQ(rouge1_f("", "cat", &empty), 0.0);
    EXPECT_TRUE(empty);
    rouge1_f("cat", "cat", &empty);
    EXPECT_FALSE(empty);
    EXPECT_EQ(rouge1_f("dog", "cat"), 0.0);
}

TEST(Meteor, StemMatchingAndFragmentation) {
    // "necklaces" matches "necklace" only through the stem stage.
    EXPECT_GT(meteor("shell necklaces", "shell necklace"), meteor("shell bracelets", "shell necklace"));
    // Same words, scrambled order: more chunks, lower score.
    EXPECT_GT(meteor("a b c d", "a b c d"), meteor("d c b a", "a b c d"));
    // 4 matches in 4 chunks: penalty 0.5.
    EXPECT_NEAR(meteor("d c b a", "a b c d"), 0.5, 1e-12);
    EXPECT_EQ(meteor("", "a"), 0.0);
    EXPECT_EQ(meteor("x", "a"), 0.0);
}

TEST(Stemmer, PorterVocabularySamples) {
    const std::map<std::string, std::string> samples = {
        {"caresses", "caress"}, {"ponies", "poni"},       {"ties", "ti"},          {"caress", "caress"},
        {"cats", "cat"},        {"feed", "feed"},         {"agreed", "agre"},      {"plastered", "plaster"},
        {"bled", "bled"},       {"motoring", "motor"},    {"sing", "sing"},        {"conflated", "conflat"},
        {"troubled", "troubl"}, {"sized", "size"},        {"hopping", "hop"},      {"tanned", "tan"},
        {"falling", "fall"},    {"hissing", "hiss"},      {"fizzed", "fizz"},      {"failing", "fail"},
        {"filing", "file"},     {"happy", "happi"},       {"sky", "sky"},          {"relational", "relat"},
        {"conditional", "condit"}, {"rational", "ration"}, {"valenci", "valenc"},  {"digitizer", "digit"},
        {"conformabli", "conform"}, {"radicalli", "radic"}, {"differentli", "differ"}, {"vileli", "vile"},
        {"analogousli", "analog"}, {"vietnamization", "vietnam"}, {"predication", "predic"},
        {"operator", "oper"},   {"feudalism", "feudal"},  {"decisiveness", "decis"}, {"hopefulness", "hope"},
        {"callousness", "callous"}, {"formaliti", "formal"}, {"sensitiviti", "sensit"}, {"sensibiliti", "sensibl"},
        {"triplicate", "triplic"}, {"formative", "form"},  {"formalize", "formal"},  {"electriciti", "electr"},
        {"electrical", "electr"}, {"hopeful", "hope"},     {"goodness", "good"},     {"revival", "reviv"},
        {"allowance", "allow"}, {"inference", "infer"},   {"airliner", "airlin"},   {"gyroscopic", "gyroscop"},
        {"adjustable", "adjust"}, {"defensible", "defens"}, {"irritant", "irrit"},  {"replacement", "replac"},
        {"adjustment", "adjust"}, {"dependent", "depend"}, {"adoption", "adopt"},   {"homologou", "homolog"},
        {"communism", "commun"}, {"activate", "activ"},    {"angulariti", "angular"}, {"homologous", "homolog"},
        {"effective", "effect"}, {"bowdlerize", "bowdler"}, {"probate", "probat"},  {"rate", "rate"},
        {"cease", "ceas"},      {"controll", "control"},  {"roll", "roll"},
    };
    for (const auto& [word, stem] : samples) EXPECT_EQ(porter_stem(word), stem) << word;
}

namespace {

// Rouge-1 F from explicit multisets.
double rouge_oracle(const std::vector<std::string>& c, const std::vector<std::string>& r) {
    if (c.empty() || r.empty()) return 0.0;
    std::map<std::string, int> cc, rc;
    for (const auto& w : c) ++cc[w];
    for (const auto& w : r) ++rc[w];
    int overlap = 0;
    for (const auto& [w, n] : cc) overlap += std::min(n, rc.count(w) ? rc[w] : 0);
    if (overlap == 0) return 0.0;
    const double p = double(overlap) / c.size(), rr = double(overlap) / r.size();
    return 2 * p * rr / (p + rr);
}

// METEOR for distinct words, where the alignment is forced.
double meteor_oracle(const std::vector<std::string>& c, const std::vector<std::string>& r) {
    std::vector<int> pos;
    for (const auto& w : c) {
        auto it = std::find(r.begin(), r.end(), w);
        pos.push_back(it == r.end() ? -1 : int(it - r.begin()));
    }
    int m = 0, chunks = 0;
    for (std::size_t i = 0; i < pos.size(); ++i) {
        if (pos[i] < 0) continue;
        ++m;
        if (i == 0 || pos[i - 1] < 0 || pos[i - 1] + 1 != pos[i]) ++chunks;
    }
    if (m == 0) return 0.0;
    const double p = double(m) / c.size(), rr = double(m) / r.size();
    const double fmean = p * rr / (0.9 * p + 0.1 * rr);
    return fmean * (1 - 0.5 * std::pow(double(chunks) / m, 3));
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
    return out;
}

} // namespace

TEST(MetricsProperty, RougeMatchesMultisetOracle) {
    std::mt19937_64 rng(31);
    const std::vector<std::string> vocab = {"a", "shell", "necklace", "the", "cat", "red"};
    std::uniform_int_distribution<int> len(0, 8), pick(0, 5);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<std::string> c(len(rng)), r(len(rng));
        for (auto& w : c) w = vocab[pick(rng)];
        for (auto& w : r) w = vocab[pick(rng)];
        ASSERT_NEAR(rouge1_f(join(c), join(r)), rouge_oracle(c, r), 1e-12);
        ASSERT_NEAR(rouge1_f(join(c), join(r)), rouge1_f(join(r), join(c)), 1e-12); // symmetric
    }
}

TEST(MetricsProperty, MeteorMatchesForcedAlignmentOracle) {
    std::mt19937_64 rng(32);
    std::vector<std::string> vocab;
    for (const char* w : {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet"})
        vocab.emplace_back(w);
    for (int trial = 0; trial < 2000; ++trial) {
        auto pool = vocab;
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> c(pool.begin(), pool.begin() + 1 + rng() % 6);
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> r(pool.begin(), pool.begin() + 1 + rng() % 6);
        const double got = meteor(join(c), join(r));
        ASSERT_NEAR(got, meteor_oracle(c, r), 1e-12) << join(c) << " | " << join(r);
        ASSERT_GE(got, 0.0);
        ASSERT_LT(got, 1.0);
    }
}

TEST(Semantic, CosineAndTokenMatch) {
    const std::vector<double> a{1, 0}, b{0, 1}, c{-1, 0};
    EXPECT_DOUBLE_EQ(cosine_similarity(a, a), 1.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, b), 0.0);
    EXPECT_DOUBLE_EQ(cosine_similarity(a, c), -1.0);
    EXPECT_THROW(cosine_similarity(a, std::vector<double>{1}), DimensionError);
    EXPECT_DOUBLE_EQ(token_match_f1({a, b}, {a, b}), 1.0);
    EXPECT_DOUBLE_EQ(token_match_f1({a}, {a, b}), 1.0 * 2 * 0.5 / 1.5); // P=1, R=0.5
    EXPECT_EQ(token_match_f1({}, {a}), 0.0);
}

TEST(Semantic, MockBackedScores) {
    auto backend = mt::mock_backend({{"token_embeddings", true}});
    const auto same = semantic_sim("shell necklace", "Shell necklace.", backend, "e");
    ASSERT_TRUE(same.sbert_sim && same.bertscore_f1);
    EXPECT_NEAR(*same.sbert_sim, 1.0, 1e-12);
    EXPECT_NEAR(*same.bertscore_f1, 1.0, 1e-12);
    const auto diff = semantic_sim("bicycle", "shell necklace", backend, "e");
    EXPECT_GE(*diff.sbert_sim, 0.0);
    EXPECT_LT(*diff.sbert_sim, 1.0);

    auto plain = mt::mock_backend(nlohmann::json::object());
    const auto no_tokens = semantic_sim("a", "a", plain, "e");
    EXPECT_TRUE(no_tokens.sbert_sim);
    EXPECT_FALSE(no_tokens.bertscore_f1);
    const auto empty = semantic_sim("", "a", plain, "e");
    EXPECT_EQ(empty.sbert_sim, 0.0);
}

TEST(Semantic, BackendFailureIsFlagged) {
    struct Failing final : Backend {
        GenerationResponse generate(const GenerationRequest&) override { throw std::logic_error("unused"); }
        EmbeddingResponse embed(const EmbeddingRequest&) override {
            throw BackendError(BackendErrorKind::Transport, "down");
        }
    } failing;
    const auto s = semantic_sim("a", "b", failing, "e");
    EXPECT_TRUE(s.failed);
    EXPECT_FALSE(s.sbert_sim);
    EXPECT_FALSE(s.bertscore_f1);
}
