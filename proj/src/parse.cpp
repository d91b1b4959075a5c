#include "memlora/parse.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <regex>

#include "memlora/errors.hpp"

namespace memlora {

namespace {

// End index (inclusive) of the object opened at `start`, or nullopt if it
// never closes.
std::optional<std::size_t> match_object(std::string_view raw, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::nullopt;
}

// Collapses the `{{ }}` delimiters used by format-string style templates.
std::string undouble_braces(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            out.push_back(c);
            if (escaped)
                escaped = false;
            else if (c == '\\')
                escaped = true;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) ++i;
        out.push_back(c);
    }
    return out;
}

std::optional<nlohmann::json> parse_object(std::string_view text) {
    auto value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = nlohmann::json::parse(undouble_braces(text), nullptr, false);
    if (value.is_discarded() || !value.is_object()) return std::nullopt;
    return value;
}

std::optional<MemoryId> parse_id(const nlohmann::json& value) {
    if (value.is_number_unsigned()) return value.get<MemoryId>();
    if (value.is_number_integer()) {
        const auto v = value.get<std::int64_t>();
        if (v < 0) return std::nullopt;
        return static_cast<MemoryId>(v);
    }
    if (!value.is_string()) return std::nullopt;
    const std::string text = trim(value.get<std::string>());
    if (text.empty() || text.size() > 19 ||
        !std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); }))
        return std::nullopt;
    return std::stoull(text);
}

bool is_blank(std::string_view text) {
    return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string scalar_to_string(const nlohmann::json& value) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number() || value.is_boolean()) return value.dump();
    return {};
}

void dump_python(const nlohmann::ordered_json& value, std::string& out) {
    if (value.is_object()) {
        out += '{';
        bool first = true;
        for (const auto& [key, item] : value.items()) {
            if (!first) out += ", ";
            first = false;
            out += nlohmann::ordered_json(key).dump();
            out += ": ";
            dump_python(item, out);
        }
        out += '}';
    } else if (value.is_array()) {
        out += '[';
        for (std::size_t i = 0; i < value.size(); ++i) {
            if (i) out += ", ";
            dump_python(value[i], out);
        }
        out += ']';
    } else {
        out += value.dump();
    }
}

} // namespace

std::string trim(std::string_view text) {
    auto begin = text.begin();
    auto end = text.end();
    while (begin != end && std::isspace(static_cast<unsigned char>(*begin))) ++begin;
    while (end != begin && std::isspace(static_cast<unsigned char>(*(end - 1)))) --end;
    return std::string(begin, end);
}

std::string to_lower_ascii(std::string_view text) {
    std::string out(text);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string_view to_string(JudgeLabel label) { return label == JudgeLabel::Correct ? "CORRECT" : "WRONG"; }

nlohmann::json extract_final_json(std::string_view raw, std::string_view required_key) {
    std::optional<nlohmann::json> found;
    bool saw_brace = false;
    bool saw_unclosed = false;
    bool saw_object_without_key = false;

    std::size_t i = 0;
    while (i < raw.size()) {
        if (raw[i] != '{') {
            ++i;
            continue;
        }
        saw_brace = true;
        const auto end = match_object(raw, i);
        if (!end) {
            saw_unclosed = true;
            ++i;
            continue;
        }
        auto value = parse_object(raw.substr(i, *end - i + 1));
        if (value && value->contains(required_key)) {
            found = std::move(value);
            i = *end + 1;
            continue;
        }
        if (value) saw_object_without_key = true;
        // Not usable as a whole; objects nested inside may still be.
        ++i;
    }

    if (found) return *found;
    const std::string key(required_key);
    if (saw_object_without_key) throw ParseError(ParseErrorKind::KeyMissing, "no object with key \"" + key + "\"");
    if (saw_unclosed) throw ParseError(ParseErrorKind::UnbalancedBraces, "unclosed object while looking for \"" + key + "\"");
    if (saw_brace) throw ParseError(ParseErrorKind::NoJsonFound, "braces present but no valid JSON object");
    throw ParseError(ParseErrorKind::NoJsonFound, "no JSON object in model output");
}

ParsedFacts parse_facts(std::string_view raw) {
    const auto obj = extract_final_json(raw, "facts");
    const auto& list = obj.at("facts");
    if (!list.is_array()) throw ParseError(ParseErrorKind::BadValue, "\"facts\" is not a list");
    ParsedFacts parsed;
    for (const auto& item : list) {
        if (!item.is_string()) throw ParseError(ParseErrorKind::BadValue, "fact is not a string: " + item.dump());
        auto text = item.get<std::string>();
        if (!is_blank(text)) parsed.facts.facts.push_back(std::move(text));
    }
    return parsed;
}

ParsedOps parse_memory_ops(std::string_view raw) {
    const auto obj = extract_final_json(raw, "memory");
    const auto& list = obj.at("memory");
    if (!list.is_array()) throw ParseError(ParseErrorKind::BadValue, "\"memory\" is not a list");

    std::vector<MemoryOp> ops;
    for (const auto& item : list) {
        if (!item.is_object()) throw ParseError(ParseErrorKind::BadValue, "memory element is not an object");
        if (!item.contains("event") || !item["event"].is_string())
            throw ParseError(ParseErrorKind::BadEvent, "missing event in " + item.dump());
        const auto event = memory_event_from_string(item["event"].get<std::string>());
        if (!event) throw ParseError(ParseErrorKind::BadEvent, "unknown event " + item["event"].dump());
        if (!item.contains("id")) throw ParseError(ParseErrorKind::BadId, "missing id in " + item.dump());
        const auto id = parse_id(item["id"]);
        if (!id) throw ParseError(ParseErrorKind::BadId, "id is not a non-negative integer: " + item["id"].dump());

        MemoryOp op;
        op.event = *event;
        op.id = *id;
        if (item.contains("text") && !item["text"].is_null()) {
            if (!item["text"].is_string()) throw ParseError(ParseErrorKind::BadValue, "text is not a string");
            op.text = item["text"].get<std::string>();
        }
        if (item.contains("old_memory") && !item["old_memory"].is_null()) {
            if (!item["old_memory"].is_string()) throw ParseError(ParseErrorKind::BadValue, "old_memory is not a string");
            op.old_memory = item["old_memory"].get<std::string>();
        }
        ops.push_back(std::move(op));
    }

    // Last writer wins for repeated ids.
    std::map<MemoryId, std::size_t> last;
    for (std::size_t k = 0; k < ops.size(); ++k) last[ops[k].id] = k;
    ParsedOps parsed;
    for (std::size_t k = 0; k < ops.size(); ++k) {
        if (last[ops[k].id] == k)
            parsed.ops.push_back(std::move(ops[k]));
        else
            parsed.dropped.push_back({ApplyRecord::Kind::DuplicateIdDropped, k, ops[k].id, ops[k].id});
    }
    return parsed;
}

ParsedOps clean_update_target(const ParsedOps& parsed) {
    ParsedOps out;
    out.dropped = parsed.dropped;
    std::copy_if(parsed.ops.begin(), parsed.ops.end(), std::back_inserter(out.ops),
                 [](const MemoryOp& op) { return op.event != MemoryEvent::None; });
    return out;
}

JudgeLabel parse_judge_label(std::string_view raw) {
    try {
        const auto obj = extract_final_json(raw, "label");
        const auto label = to_lower_ascii(trim(scalar_to_string(obj.at("label"))));
        if (label == "correct") return JudgeLabel::Correct;
        if (label == "wrong") return JudgeLabel::Wrong;
        throw ParseError(ParseErrorKind::AmbiguousLabel, "label value " + obj.at("label").dump());
    } catch (const ParseError& e) {
        if (e.kind() == ParseErrorKind::AmbiguousLabel) throw;
    }
    static const std::regex correct_re(R"(\bCORRECT\b)");
    static const std::regex wrong_re(R"(\bWRONG\b)");
    const std::string text(raw);
    const bool has_correct = std::regex_search(text, correct_re);
    const bool has_wrong = std::regex_search(text, wrong_re);
    if (has_correct != has_wrong) return has_correct ? JudgeLabel::Correct : JudgeLabel::Wrong;
    throw ParseError(ParseErrorKind::AmbiguousLabel,
                     has_correct ? "both CORRECT and WRONG present" : "neither CORRECT nor WRONG present");
}

std::string normalize_vqa_answer(std::string_view answer) {
    const std::string lowered = to_lower_ascii(trim(answer));
    auto end = std::find_if(lowered.begin(), lowered.end(), [](unsigned char c) { return std::isspace(c); });
    std::string token(lowered.begin(), end);
    while (!token.empty() && std::string_view(".,!?;:").find(token.back()) != std::string_view::npos) token.pop_back();
    return token;
}

bool is_single_word(std::string_view answer) {
    const std::string t = trim(answer);
    return !t.empty() && std::none_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c); });
}

VqaAnswer parse_vqa_answer(std::string_view raw) {
    nlohmann::json obj;
    try {
        obj = extract_final_json(raw, "answer");
    } catch (const ParseError& e) {
        throw ParseError(ParseErrorKind::MissingAnswerField, e.what());
    }
    VqaAnswer out;
    out.answer = normalize_vqa_answer(scalar_to_string(obj.at("answer")));
    if (out.answer.empty()) throw ParseError(ParseErrorKind::MissingAnswerField, "empty answer");
    if (obj.contains("reason")) out.reason = scalar_to_string(obj["reason"]);
    return out;
}

VqaItem parse_vqa_item(std::string_view raw) {
    const auto obj = extract_final_json(raw, "question");
    if (!obj.contains("answer")) throw ParseError(ParseErrorKind::MissingAnswerField, "generated item has no answer");
    VqaItem item;
    item.question = trim(scalar_to_string(obj["question"]));
    item.answer = trim(scalar_to_string(obj["answer"]));
    if (obj.contains("reason")) item.reason = scalar_to_string(obj["reason"]);
    if (item.question.empty()) throw ParseError(ParseErrorKind::BadValue, "empty question");
    if (item.answer.empty()) throw ParseError(ParseErrorKind::MissingAnswerField, "empty answer");
    return item;
}

std::string python_style_dump(const nlohmann::ordered_json& value) {
    std::string out;
    dump_python(value, out);
    return out;
}

std::string serialize_facts(const KnowledgeFacts& facts) {
    nlohmann::ordered_json obj;
    obj["facts"] = facts.facts;
    return python_style_dump(obj);
}

std::string serialize_memory_ops(const std::vector<MemoryOp>& ops) {
    auto list = nlohmann::ordered_json::array();
    for (const auto& op : ops) {
        nlohmann::ordered_json item;
        item["id"] = std::to_string(op.id);
        item["text"] = op.text;
        item["event"] = std::string(to_string(op.event));
        if (op.old_memory) item["old_memory"] = *op.old_memory;
        list.push_back(std::move(item));
    }
    nlohmann::ordered_json obj;
    obj["memory"] = std::move(list);
    return python_style_dump(obj);
}

} // namespace memlora
