#include "memlora/memory_bank.hpp"

#include <cctype>
#include <algorithm>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "memlora/errors.hpp"

namespace memlora {

using ojson = nlohmann::ordered_json;

std::string_view to_string(MemoryEvent event) {
    switch (event) {
    case MemoryEvent::Add: return "ADD";
    case MemoryEvent::Update: return "UPDATE";
    case MemoryEvent::Delete: return "DELETE";
    case MemoryEvent::None: return "NONE";
    }
    return "NONE";
}

std::optional<MemoryEvent> memory_event_from_string(std::string_view text) {
    std::string upper;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
        upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    if (upper == "ADD") return MemoryEvent::Add;
    if (upper == "UPDATE") return MemoryEvent::Update;
    if (upper == "DELETE") return MemoryEvent::Delete;
    if (upper == "NONE") return MemoryEvent::None;
    return std::nullopt;
}

std::string_view to_string(ApplyRecord::Kind kind) {
    switch (kind) {
    case ApplyRecord::Kind::AddRemapped: return "add-remapped";
    case ApplyRecord::Kind::UpdateDowngraded: return "update-downgraded";
    case ApplyRecord::Kind::DeleteUnknown: return "delete-unknown";
    case ApplyRecord::Kind::EmptyText: return "empty-text";
    case ApplyRecord::Kind::DuplicateIdDropped: return "duplicate-id-dropped";
    }
    return "unknown";
}

const MemoryEntry* MemoryBank::find(MemoryId id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<MemoryEntry> MemoryBank::entries() const {
    std::vector<MemoryEntry> out;
    out.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) out.push_back(entry);
    return out;
}

std::vector<MemoryId> MemoryBank::ids() const {
    std::vector<MemoryId> out;
    out.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) out.push_back(id);
    return out;
}

void MemoryBank::insert(MemoryId id, std::string text) {
    if (text.empty()) throw std::invalid_argument("memory text must be nonempty");
    if (entries_.count(id)) throw std::invalid_argument("memory id already present");
    ++clock_;
    entries_.emplace(id, MemoryEntry{id, std::move(text), clock_, clock_});
    next_id_ = std::max(next_id_, id + 1);
}

void MemoryBank::replace_text(MemoryId id, std::string text) {
    if (text.empty()) throw std::invalid_argument("memory text must be nonempty");
    auto it = entries_.find(id);
    if (it == entries_.end()) throw std::invalid_argument("memory id not present");
    ++clock_;
    it->second.text = std::move(text);
    it->second.updated_at = clock_;
}

bool MemoryBank::erase(MemoryId id) {
    if (entries_.erase(id) == 0) return false;
    ++clock_;
    return true;
}

std::string MemoryBank::snapshot() const {
    std::string out;
    ojson header;
    header["format_version"] = kFormatVersion;
    header["run_id"] = run_id_;
    header["next_id"] = next_id_;
    header["clock"] = clock_;
    header["count"] = entries_.size();
    out += header.dump();
    out += '\n';
    for (const auto& [id, entry] : entries_) {
        ojson line;
        line["id"] = entry.id;
        line["text"] = entry.text;
        line["created_at"] = entry.created_at;
        line["updated_at"] = entry.updated_at;
        out += line.dump();
        out += '\n';
    }
    return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view bytes) {
    if (bytes.empty() || bytes.back() != '\n') {
        throw DecodeError("memory bank payload is truncated (missing final newline)");
    }
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < bytes.size()) {
        auto end = bytes.find('\n', start);
        lines.push_back(bytes.substr(start, end - start));
        start = end + 1;
    }
    return lines;
}

nlohmann::json parse_line(std::string_view line, std::size_t line_no) {
    auto value = nlohmann::json::parse(line, nullptr, false);
    if (value.is_discarded() || !value.is_object()) {
        throw DecodeError("memory bank line " + std::to_string(line_no) + " is not a JSON object");
    }
    return value;
}

template <typename T>
T require_field(const nlohmann::json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw DecodeError("memory bank line " + std::to_string(line_no) + " lacks '" + key + "'");
    }
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DecodeError("memory bank line " + std::to_string(line_no) + " has bad '" + key + "'");
    }
}

} // namespace

MemoryBank MemoryBank::load(std::string_view bytes) {
    auto lines = split_lines(bytes);
    auto header = parse_line(lines.front(), 1);
    auto version = require_field<int>(header, "format_version", 1);
    if (version != kFormatVersion) {
        throw DecodeError("unsupported memory bank format_version " + std::to_string(version));
    }
    MemoryBank bank(require_field<std::string>(header, "run_id", 1));
    bank.next_id_ = require_field<MemoryId>(header, "next_id", 1);
    bank.clock_ = require_field<std::uint64_t>(header, "clock", 1);
    auto count = require_field<std::size_t>(header, "count", 1);
    if (lines.size() - 1 != count) {
        throw DecodeError("memory bank declares " + std::to_string(count) + " entries but holds " +
                          std::to_string(lines.size() - 1));
    }
    for (std::size_t i = 1; i < lines.size(); ++i) {
        auto line = parse_line(lines[i], i + 1);
        MemoryEntry entry{require_field<MemoryId>(line, "id", i + 1),
                          require_field<std::string>(line, "text", i + 1),
                          require_field<std::uint64_t>(line, "created_at", i + 1),
                          require_field<std::uint64_t>(line, "updated_at", i + 1)};
        if (entry.text.empty() || entry.updated_at < entry.created_at ||
            entry.updated_at > bank.clock_ || entry.id >= bank.next_id_) {
            throw DecodeError("memory bank entry " + std::to_string(entry.id) + " violates invariants");
        }
        if (!bank.entries_.emplace(entry.id, entry).second) {
            throw DecodeError("duplicate memory id " + std::to_string(entry.id));
        }
    }
    return bank;
}

ApplyResult apply_ops(const MemoryBank& bank, std::span<const MemoryOp> ops) {
    ApplyResult result{bank, {}};
    MemoryBank& out = result.bank;
    ApplyLog& log = result.log;

    auto add = [&](std::size_t index, MemoryId requested, const std::string& text) {
        MemoryId id = requested;
        if (out.contains(id)) {
            id = out.next_id();
            log.records.push_back({ApplyRecord::Kind::AddRemapped, index, requested, id});
        }
        out.insert(id, text);
        log.changes.push_back({MemoryEvent::Add, id, text});
    };

    for (std::size_t i = 0; i < ops.size(); ++i) {
        const MemoryOp& op = ops[i];
        switch (op.event) {
        case MemoryEvent::None:
            break;
        case MemoryEvent::Add:
            if (op.text.empty()) {
                log.records.push_back({ApplyRecord::Kind::EmptyText, i, op.id, op.id});
                break;
            }
            add(i, op.id, op.text);
            break;
        case MemoryEvent::Update:
            if (op.text.empty()) {
                log.records.push_back({ApplyRecord::Kind::EmptyText, i, op.id, op.id});
                break;
            }
            if (out.contains(op.id)) {
                out.replace_text(op.id, op.text);
                log.changes.push_back({MemoryEvent::Update, op.id, op.text});
            } else {
                log.records.push_back({ApplyRecord::Kind::UpdateDowngraded, i, op.id, op.id});
                add(i, op.id, op.text);
            }
            break;
        case MemoryEvent::Delete:
            if (out.erase(op.id)) {
                log.changes.push_back({MemoryEvent::Delete, op.id, {}});
            } else {
                log.records.push_back({ApplyRecord::Kind::DeleteUnknown, i, op.id, op.id});
            }
            break;
        }
    }
    return result;
}

} // namespace memlora
