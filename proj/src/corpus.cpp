#include "memlora/corpus.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memlora/errors.hpp"

namespace memlora {

namespace {

using nlohmann::json;

std::string scalar(const json& value, const std::string& where) {
    if (value.is_string()) return value.get<std::string>();
    if (value.is_number() || value.is_boolean()) return value.dump();
    throw DataError(where + " must be a string or number");
}

std::string optional_scalar(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || obj[key].is_null()) return {};
    return scalar(obj[key], where + "." + key);
}

const json& required(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw DataError(where + " is missing \"" + key + "\"");
    return obj[key];
}

Conversation conversation_from_json(const json& obj) {
    if (!obj.is_object()) throw DataError("conversation record must be an object");
    Conversation conv;
    conv.conversation_id = scalar(required(obj, "conversation_id", "conversation"), "conversation_id");
    if (conv.conversation_id.empty()) throw DataError("conversation_id must be nonempty");
    const std::string where = "conversation " + conv.conversation_id;

    if (obj.contains("sessions")) {
        const auto& sessions = obj["sessions"];
        if (!sessions.is_array()) throw DataError(where + ": sessions must be a list");
        std::set<std::string> seen;
        for (std::size_t s = 0; s < sessions.size(); ++s) {
            const auto& sj = sessions[s];
            Session session;
            session.session_id = sj.contains("session_id") ? scalar(sj["session_id"], where + ".session_id")
                                                           : std::to_string(s + 1);
            if (!seen.insert(session.session_id).second)
                throw DataError(where + ": duplicate session_id " + session.session_id);
            const auto& turns = required(sj, "turns", where + " session " + session.session_id);
            if (!turns.is_array()) throw DataError(where + ": turns must be a list");
            for (std::size_t t = 0; t < turns.size(); ++t) {
                const auto& tj = turns[t];
                const std::string turn_where = where + " session " + session.session_id + " turn " + std::to_string(t);
                ConversationTurn turn;
                turn.speaker = scalar(required(tj, "speaker", turn_where), turn_where + ".speaker");
                turn.text = scalar(required(tj, "text", turn_where), turn_where + ".text");
                if (tj.contains("images")) {
                    if (!tj["images"].is_array()) throw DataError(turn_where + ": images must be a list");
                    for (const auto& img : tj["images"]) turn.images.push_back(scalar(img, turn_where + ".images"));
                }
                turn.session_id = session.session_id;
                turn.turn_index = t;
                session.turns.push_back(std::move(turn));
            }
            conv.sessions.push_back(std::move(session));
        }
    }

    if (obj.contains("qa")) {
        if (!obj["qa"].is_array()) throw DataError(where + ": qa must be a list");
        std::size_t k = 0;
        for (const auto& qj : obj["qa"]) {
            const std::string qa_where = where + " qa " + std::to_string(k);
            QaItem item;
            item.question = scalar(required(qj, "question", qa_where), qa_where + ".question");
            item.answer = scalar(required(qj, "answer", qa_where), qa_where + ".answer");
            item.category = optional_scalar(qj, "category", qa_where);
            item.question_id = optional_scalar(qj, "question_id", qa_where);
            if (item.question_id.empty()) item.question_id = conv.conversation_id + ":q" + std::to_string(k);
            conv.qa.push_back(std::move(item));
            ++k;
        }
    }

    if (obj.contains("vqa")) {
        if (!obj["vqa"].is_array()) throw DataError(where + ": vqa must be a list");
        std::size_t k = 0;
        for (const auto& vj : obj["vqa"]) {
            const std::string vqa_where = where + " vqa " + std::to_string(k++);
            VqaRecord rec;
            rec.image = scalar(required(vj, "image", vqa_where), vqa_where + ".image");
            rec.question = scalar(required(vj, "question", vqa_where), vqa_where + ".question");
            rec.answer = scalar(required(vj, "answer", vqa_where), vqa_where + ".answer");
            rec.reason = optional_scalar(vj, "reason", vqa_where);
            conv.vqa.push_back(std::move(rec));
        }
    }
    return conv;
}

std::string media_type_for(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    return "image/jpeg";
}

} // namespace

const Conversation* Corpus::find(std::string_view conversation_id) const {
    for (const auto& c : conversations)
        if (c.conversation_id == conversation_id) return &c;
    return nullptr;
}

const Conversation& Corpus::at(std::string_view conversation_id) const {
    if (const auto* c = find(conversation_id)) return *c;
    throw DataError("unknown conversation: " + std::string(conversation_id));
}

std::vector<TurnWindow> turn_windows(const Conversation& conversation) {
    std::vector<TurnWindow> out;
    for (const auto& session : conversation.sessions) {
        const auto& turns = session.turns;
        for (std::size_t i = 0; i < turns.size(); i += 2) {
            TurnWindow w{session.session_id, i, {}};
            if (i + 1 < turns.size()) {
                w.text = "assistant: " + turns[i].speaker + ": " + turns[i].text + " user: " + turns[i + 1].speaker +
                         ": " + turns[i + 1].text;
            } else {
                w.text = "user: " + turns[i].speaker + ": " + turns[i].text;
            }
            out.push_back(std::move(w));
        }
    }
    return out;
}

Conversation parse_conversation(const std::string& json_text) {
    const auto obj = json::parse(json_text, nullptr, false);
    if (obj.is_discarded()) throw DataError("conversation is not valid JSON");
    return conversation_from_json(obj);
}

Corpus parse_corpus(std::string_view text, std::filesystem::path base_dir) {
    Corpus corpus;
    corpus.base_dir = std::move(base_dir);

    std::vector<json> records;
    const auto whole = json::parse(text, nullptr, false);
    if (!whole.is_discarded()) {
        if (whole.is_array()) {
            records.assign(whole.begin(), whole.end());
        } else if (whole.is_object() && whole.contains("conversations")) {
            if (!whole["conversations"].is_array()) throw DataError("\"conversations\" must be a list");
            records.assign(whole["conversations"].begin(), whole["conversations"].end());
        } else if (whole.is_object()) {
            records.push_back(whole);
        } else {
            throw DataError("corpus must be a list of conversations");
        }
    } else {
        std::istringstream in{std::string(text)};
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            auto rec = json::parse(line, nullptr, false);
            if (rec.is_discarded()) throw DataError("corpus line " + std::to_string(lineno) + " is not valid JSON");
            records.push_back(std::move(rec));
        }
    }

    std::set<std::string> ids;
    for (const auto& rec : records) {
        auto conv = conversation_from_json(rec);
        if (!ids.insert(conv.conversation_id).second)
            throw DataError("duplicate conversation_id " + conv.conversation_id);
        corpus.conversations.push_back(std::move(conv));
    }
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw DataError("corpus file not found: " + path.string());
    return parse_corpus(read_file(path), path.parent_path());
}

ImagePayload load_image(const Corpus& corpus, const std::string& image_ref) {
    const std::filesystem::path path = corpus.base_dir / image_ref;
    if (!std::filesystem::is_regular_file(path)) throw DataError("image not found: " + image_ref);
    return ImagePayload{read_file(path), media_type_for(path)};
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace memlora
