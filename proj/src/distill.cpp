#include "memlora/distill.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "memlora/parse.hpp"

namespace memlora {

namespace {

std::vector<const Conversation*> conversations_of(const Corpus& corpus, const std::vector<std::string>& ids) {
    std::vector<const Conversation*> out;
    for (const auto& id : ids) out.push_back(&corpus.at(id));
    return out;
}

} // namespace

bool natural_less(std::string_view a, std::string_view b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const bool da = std::isdigit(static_cast<unsigned char>(a[i]));
        const bool db = std::isdigit(static_cast<unsigned char>(b[j]));
        if (da && db) {
            std::size_t ei = i, ej = j;
            while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
            while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
            auto na = a.substr(i, ei - i), nb = b.substr(j, ej - j);
            while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
            while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
            if (na.size() != nb.size()) return na.size() < nb.size();
            if (na != nb) return na < nb;
            i = ei;
            j = ej;
        } else {
            if (a[i] != b[j]) return a[i] < b[j];
            ++i;
            ++j;
        }
    }
    if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
    return a < b; // equal under the natural order, e.g. "C01" vs "C1"
}

ConversationSplit split_dataset(std::vector<std::string> ids) {
    if (ids.size() < 3) throw DataError("need at least 3 conversations to split, got " + std::to_string(ids.size()));
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return natural_less(a, b); });
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw DataError("repeated conversation id in split");
    const double n = static_cast<double>(ids.size());
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * n)));
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.2 * n)));
    ConversationSplit split;
    split.val.assign(ids.begin(), ids.begin() + n_val);
    split.test.assign(ids.begin() + n_val, ids.begin() + n_val + n_test);
    split.train.assign(ids.begin() + n_val + n_test, ids.end());
    return split;
}

std::string_view to_string(Provenance provenance) {
    return provenance == Provenance::TeacherOutput ? "TEACHER_OUTPUT" : "GROUND_TRUTH";
}

DistillResult gen_teacher_extraction(const std::vector<const Conversation*>& conversations,
                                     const MemoryPipeline& teacher) {
    DistillResult result;
    for (const auto* conv : conversations) {
        for (const auto& window : turn_windows(*conv)) {
            const auto prompt = render_extraction(PromptVariant::MemLora, window.text, std::nullopt,
                                                  teacher.config().prompts());
            const auto raw = teacher.call(Stage::Extraction, {{Role::User, prompt, std::nullopt}}, nullptr).text;
            try {
                const auto parsed = parse_facts(raw);
                result.examples.push_back({Stage::Extraction, prompt, serialize_facts(parsed.facts),
                                           Provenance::TeacherOutput, conv->conversation_id});
            } catch (const ParseError& e) {
                ++result.dropped;
                spdlog::warn("dropping extraction example in {} session {}: {}", conv->conversation_id,
                             window.session_id, e.what());
            }
        }
    }
    return result;
}

DistillResult gen_teacher_update(const std::vector<const Conversation*>& conversations, const MemoryPipeline& teacher,
                                 TeacherBanks* banks_out) {
    DistillResult result;
    std::size_t upstream_dropped = 0;
    for (const auto* conv : conversations) {
        MemoryState state;
        state.bank = MemoryBank(conv->conversation_id);
        for (const auto& window : turn_windows(*conv)) {
            const auto extraction_prompt = render_extraction(PromptVariant::MemLora, window.text, std::nullopt,
                                                             teacher.config().prompts());
            const auto extraction_raw =
                teacher.call(Stage::Extraction, {{Role::User, extraction_prompt, std::nullopt}}, nullptr).text;
            KnowledgeFacts facts;
            try {
                facts = parse_facts(extraction_raw).facts;
            } catch (const ParseError& e) {
                ++upstream_dropped;
                spdlog::warn("skipping update for unparseable extraction in {}: {}", conv->conversation_id, e.what());
                continue;
            }
            if (facts.empty()) continue;

            const auto context = teacher.retrieve_for_update(state, facts);
            const auto prompt = render_update(PromptVariant::MemLora, context, facts, teacher.config().prompts());
            const auto raw = teacher.call(Stage::Update, {{Role::User, prompt, std::nullopt}}, nullptr).text;
            ParsedOps parsed;
            try {
                parsed = parse_memory_ops(raw);
            } catch (const ParseError& e) {
                ++result.dropped;
                spdlog::warn("dropping update example in {}: {}", conv->conversation_id, e.what());
                continue;
            }
            teacher.commit_ops(state, parsed);
            result.examples.push_back({Stage::Update, prompt, serialize_memory_ops(clean_update_target(parsed).ops),
                                       Provenance::TeacherOutput, conv->conversation_id});
        }
        if (banks_out) (*banks_out)[conv->conversation_id] = std::move(state);
    }
    if (upstream_dropped) spdlog::info("{} update inputs skipped after unparseable extractions", upstream_dropped);
    return result;
}

DistillResult gen_generation_targets(const std::vector<const Conversation*>& conversations,
                                     const TeacherBanks& banks, const MemoryPipeline& pipeline) {
    DistillResult result;
    for (const auto* conv : conversations) {
        auto it = banks.find(conv->conversation_id);
        if (it == banks.end()) throw DataError("no teacher memory bank for conversation " + conv->conversation_id);
        for (const auto& qa : conv->qa) {
            const auto memories = pipeline.retrieve_for_question(it->second, qa.question);
            result.examples.push_back({Stage::Generation,
                                       render_generation(qa.question, memories, pipeline.config().prompts()),
                                       qa.answer, Provenance::GroundTruth, conv->conversation_id});
        }
    }
    return result;
}

DistillResult gen_vqa_targets(const std::vector<const Conversation*>& conversations, const Corpus& corpus,
                              const PromptCatalog& catalog) {
    DistillResult result;
    for (const auto* conv : conversations) {
        for (const auto& item : conv->vqa) {
            if (!std::filesystem::is_regular_file(corpus.base_dir / item.image))
                throw DataError("conversation " + conv->conversation_id + " references missing image " + item.image);
            nlohmann::ordered_json target;
            target["answer"] = item.answer;
            target["reason"] = item.reason;
            result.examples.push_back({Stage::VqaGeneration, render_vqa(item.question, catalog),
                                       python_style_dump(target), Provenance::GroundTruth, conv->conversation_id});
        }
    }
    return result;
}

std::string examples_to_jsonl(const std::vector<TrainingExample>& examples) {
    std::string out;
    for (const auto& ex : examples) {
        nlohmann::ordered_json line;
        line["stage"] = std::string(to_string(ex.stage));
        line["input"] = ex.input;
        line["target"] = ex.target;
        line["provenance"] = std::string(to_string(ex.provenance));
        line["conversation_id"] = ex.conversation_id;
        out += line.dump();
        out += '\n';
    }
    return out;
}

std::vector<const Conversation*> select_conversations(const Corpus& corpus, const std::vector<std::string>& ids) {
    return conversations_of(corpus, ids);
}

DistillOutput distill_stage(const Corpus& corpus, Stage stage, const MemoryPipeline& teacher,
                            const std::filesystem::path& out_dir) {
    std::vector<std::string> ids;
    for (const auto& c : corpus.conversations) ids.push_back(c.conversation_id);
    const auto split = split_dataset(ids);

    DistillOutput output;
    for (const auto& [name, split_ids] : {std::pair<std::string, const std::vector<std::string>*>{"train", &split.train},
                                          {"val", &split.val}}) {
        const auto convs = conversations_of(corpus, *split_ids);
        DistillResult result;
        switch (stage) {
        case Stage::Extraction:
            result = gen_teacher_extraction(convs, teacher);
            break;
        case Stage::Update:
            result = gen_teacher_update(convs, teacher);
            break;
        case Stage::Generation: {
            TeacherBanks banks;
            gen_teacher_update(convs, teacher, &banks);
            result = gen_generation_targets(convs, banks, teacher);
            break;
        }
        case Stage::VqaGeneration:
            result = gen_vqa_targets(convs, corpus, teacher.config().prompts());
            break;
        }
        const auto path = out_dir / (std::string(to_string(stage)) + "." + name + ".examples");
        write_file_atomic(path, examples_to_jsonl(result.examples));
        output.files[name] = path;
        output.counts[name] = result.examples.size();
        output.dropped[name] = result.dropped;
    }
    return output;
}

} // namespace memlora
