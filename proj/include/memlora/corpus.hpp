#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "memlora/backend.hpp"

namespace memlora {

struct ConversationTurn {
    std::string speaker;
    std::string text;
    std::vector<std::string> images; // paths relative to the corpus file
    std::string session_id;
    std::size_t turn_index = 0; // position within the session
};

struct Session {
    std::string session_id;
    std::vector<ConversationTurn> turns;
};

struct QaItem {
    std::string question_id;
    std::string question;
    std::string answer;
    std::string category;
};

struct VqaRecord {
    std::string image;
    std::string question;
    std::string answer;
    std::string reason;
};

struct Conversation {
    std::string conversation_id;
    std::vector<Session> sessions;
    std::vector<QaItem> qa;
    std::vector<VqaRecord> vqa;
};

struct Corpus {
    std::vector<Conversation> conversations; // file order
    std::filesystem::path base_dir;          // image paths resolve against it

    const Conversation* find(std::string_view conversation_id) const;
    // Throws DataError naming the id when absent.
    const Conversation& at(std::string_view conversation_id) const;
};

// One extraction input: two consecutive turns of a session, rendered as
// "assistant: <speaker>: <text> user: <speaker>: <text>". A session with an
// odd number of turns ends with a single "user: ..." window.
struct TurnWindow {
    std::string session_id;
    std::size_t first_turn = 0;
    std::string text;
};

std::vector<TurnWindow> turn_windows(const Conversation& conversation);

// Accepts a JSON array of conversations, an object with a "conversations"
// array, or JSON Lines with one conversation per line. Throws DataError on
// schema violations.
Corpus parse_corpus(std::string_view text, std::filesystem::path base_dir = {});
Corpus load_corpus(const std::filesystem::path& path);

Conversation parse_conversation(const std::string& json_text);

// Reads an image referenced by the corpus; DataError when missing.
ImagePayload load_image(const Corpus& corpus, const std::string& image_ref);

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial data.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

} // namespace memlora
