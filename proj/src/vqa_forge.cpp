#include "memlora/vqa_forge.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "memlora/evaluation.hpp"
#include "memlora/hashing.hpp"
#include "memlora/parse.hpp"

namespace memlora {

namespace {

GenerationRequest vision_request(const std::string& model, std::vector<Message> messages) {
    GenerationRequest request;
    request.model = model;
    request.adapter = {Stage::VqaGeneration, std::nullopt};
    request.messages = std::move(messages);
    request.temperature = 0.0;
    request.max_output_tokens = default_max_output_tokens(Stage::VqaGeneration);
    return request;
}

// Why a teacher reply cannot become an item, or nullopt when it can.
std::optional<std::string> item_problem(const std::string& raw, VqaItem& item) {
    try {
        item = parse_vqa_item(raw);
    } catch (const ParseError& e) {
        return std::string(e.what());
    }
    if (!is_single_word(item.answer) || normalize_vqa_answer(item.answer).empty())
        return "answer is not a single word: " + item.answer;
    return std::nullopt;
}

} // namespace

std::vector<int> select_hardest_types(const std::array<std::optional<double>, kInstructionTypes>& accuracy) {
    std::vector<int> types;
    for (std::size_t i = 0; i < kInstructionTypes; ++i)
        if (accuracy[i]) types.push_back(static_cast<int>(i + 1));
    std::stable_sort(types.begin(), types.end(),
                     [&](int a, int b) { return *accuracy[a - 1] < *accuracy[b - 1]; });
    if (types.size() > kSelectedTypes) types.resize(kSelectedTypes);
    return types;
}

std::optional<VqaBenchItem> generate_item(const ForgeImage& image, int type, Backend& teacher,
                                          const std::string& teacher_model, const PromptCatalog& catalog) {
    std::vector<Message> messages{{Role::User, render_vqa_teacher(type, catalog), image.payload}};
    VqaItem parsed;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string raw;
        try {
            raw = teacher.generate(vision_request(teacher_model, messages)).text;
        } catch (const BackendError& e) {
            if (e.kind() == BackendErrorKind::Capability) throw;
            spdlog::warn("teacher failed on {} type {}: {}", image.path, type, e.what());
            return std::nullopt;
        }
        const auto problem = item_problem(raw, parsed);
        if (!problem) {
            return VqaBenchItem{image.hash, image.path, type, parsed.question, normalize_vqa_answer(parsed.answer),
                                parsed.reason, image.split};
        }
        spdlog::warn("teacher item for {} type {} rejected: {}", image.path, type, *problem);
        messages.push_back({Role::Assistant, raw, std::nullopt});
        messages.push_back({Role::User,
                            "Reply again with only the JSON object; the answer must be a single word.", std::nullopt});
    }
    return std::nullopt;
}

InstructionRanking rank_instruction_types(std::span<const ForgeImage> validation_images, const ForgeBackends& backends,
                                          const PromptCatalog& catalog) {
    if (validation_images.empty()) throw DataError("instruction ranking needs at least one validation image");
    InstructionRanking ranking;
    for (int type = 1; type <= static_cast<int>(kInstructionTypes); ++type) {
        const auto t = static_cast<std::size_t>(type - 1);
        std::vector<std::string> predictions, references;
        for (const auto& image : validation_images) {
            const auto item = generate_item(image, type, backends.teacher, backends.teacher_model, catalog);
            if (!item) {
                ++ranking.skipped[t];
                continue;
            }
            try {
                const auto raw = backends.validator
                                     .generate(vision_request(backends.validator_model,
                                                              {{Role::User, render_vqa(item->question, catalog),
                                                                image.payload}}))
                                     .text;
                predictions.push_back(parse_vqa_answer(raw).answer);
                references.push_back(item->answer);
            } catch (const ParseError& e) {
                // The validator answered but not in a usable form: a miss.
                predictions.emplace_back();
                references.push_back(item->answer);
            } catch (const BackendError& e) {
                if (e.kind() == BackendErrorKind::Capability) throw;
                ++ranking.skipped[t];
                spdlog::warn("validator failed on {} type {}: {}", image.path, type, e.what());
            }
        }
        ranking.scored[t] = predictions.size();
        if (predictions.empty()) {
            spdlog::warn("instruction type {} has no scored items and is excluded", type);
            continue;
        }
        ranking.accuracy[t] = vqa_V(predictions, references) / 100.0;
    }
    ranking.selected = select_hardest_types(ranking.accuracy);
    return ranking;
}

ForgeSet generate_vqa_set(std::span<const ForgeImage> images, const std::vector<int>& types, Backend& teacher,
                          const std::string& teacher_model, const PromptCatalog& catalog, std::size_t jobs) {
    const std::size_t n = images.size() * types.size();
    std::vector<std::optional<VqaBenchItem>> slots(n);
    parallel_for(n, jobs, [&](std::size_t k) {
        slots[k] = generate_item(images[k / types.size()], types[k % types.size()], teacher, teacher_model, catalog);
    });
    ForgeSet set;
    for (auto& slot : slots) {
        if (slot)
            set.items.push_back(std::move(*slot));
        else
            ++set.dropped;
    }
    return set;
}

std::vector<VqaBenchItem> dedup_across_splits(const std::vector<VqaBenchItem>& items) {
    std::map<std::string, std::set<std::string>> splits_of;
    for (const auto& item : items) splits_of[item.image_hash].insert(item.split);
    std::vector<VqaBenchItem> out;
    std::copy_if(items.begin(), items.end(), std::back_inserter(out),
                 [&](const VqaBenchItem& item) { return splits_of[item.image_hash].size() == 1; });
    return out;
}

std::vector<ForgeImage> collect_split_images(const Corpus& corpus, const ConversationSplit& split) {
    std::vector<ForgeImage> out;
    for (const auto& [name, ids] : {std::pair<std::string, const std::vector<std::string>*>{"train", &split.train},
                                    {"val", &split.val},
                                    {"test", &split.test}}) {
        std::set<std::string> seen;
        for (const auto& id : *ids) {
            for (const auto& session : corpus.at(id).sessions) {
                for (const auto& turn : session.turns) {
                    for (const auto& ref : turn.images) {
                        auto payload = load_image(corpus, ref);
                        auto hash = sha256_hex(payload.bytes);
                        if (!seen.insert(hash).second) continue;
                        out.push_back({ref, std::move(hash), std::move(payload), name});
                    }
                }
            }
        }
    }
    return out;
}

std::string benchmark_to_jsonl(const std::vector<VqaBenchItem>& items) {
    std::string out;
    for (const auto& item : items) {
        nlohmann::ordered_json j;
        j["image_hash"] = item.image_hash;
        j["image_path"] = item.image_path;
        j["type"] = item.type;
        j["question"] = item.question;
        j["answer"] = item.answer;
        j["reason"] = item.reason;
        j["split"] = item.split;
        out += j.dump();
        out += '\n';
    }
    return out;
}

ForgeReport run_vqa_forge(const Corpus& corpus, const ForgeBackends& backends, const PromptCatalog& catalog,
                          std::size_t jobs) {
    std::vector<std::string> ids;
    for (const auto& c : corpus.conversations) ids.push_back(c.conversation_id);
    const auto split = split_dataset(ids);
    const auto images = collect_split_images(corpus, split);

    std::vector<ForgeImage> validation;
    std::copy_if(images.begin(), images.end(), std::back_inserter(validation),
                 [](const ForgeImage& img) { return img.split == "val"; });

    ForgeReport report;
    report.ranking = rank_instruction_types(validation, backends, catalog);
    auto set = generate_vqa_set(images, report.ranking.selected, backends.teacher, backends.teacher_model, catalog, jobs);
    report.dropped = set.dropped;
    report.items = dedup_across_splits(set.items);
    report.removed_by_dedup = set.items.size() - report.items.size();
    return report;
}

} // namespace memlora
