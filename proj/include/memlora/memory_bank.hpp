#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memlora {

using MemoryId = std::uint64_t;

struct MemoryEntry {
    MemoryId id = 0;
    std::string text;
    std::uint64_t created_at = 0; // sequence numbers, not wall clock
    std::uint64_t updated_at = 0;

    friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

enum class MemoryEvent { Add, Update, Delete, None };

std::string_view to_string(MemoryEvent event);
std::optional<MemoryEvent> memory_event_from_string(std::string_view text);

struct MemoryOp {
    MemoryEvent event = MemoryEvent::None;
    MemoryId id = 0;
    std::string text;                      // required for Add/Update
    std::optional<std::string> old_memory; // Update only

    friend bool operator==(const MemoryOp&, const MemoryOp&) = default;
};

struct KnowledgeFacts {
    std::vector<std::string> facts;

    bool empty() const { return facts.empty(); }
    friend bool operator==(const KnowledgeFacts&, const KnowledgeFacts&) = default;
};

// Something apply_ops did that differs from what the op literally asked for.
struct ApplyRecord {
    enum class Kind {
        AddRemapped,        // ADD id collided, entry stored under a fresh id
        UpdateDowngraded,   // UPDATE on unknown id, stored as ADD
        DeleteUnknown,      // DELETE on unknown id, ignored
        EmptyText,          // ADD/UPDATE without text, ignored
        DuplicateIdDropped, // parse-time: earlier op with same id discarded
    };

    Kind kind;
    std::size_t op_index = 0;
    MemoryId requested_id = 0;
    MemoryId assigned_id = 0;

    friend bool operator==(const ApplyRecord&, const ApplyRecord&) = default;
};

std::string_view to_string(ApplyRecord::Kind kind);

// Net effect of one op on the bank, used to keep the vector index in sync.
struct AppliedChange {
    MemoryEvent event; // Add, Update or Delete; no-ops are not listed
    MemoryId id;
    std::string text;

    friend bool operator==(const AppliedChange&, const AppliedChange&) = default;
};

struct ApplyLog {
    std::vector<ApplyRecord> records;
    std::vector<AppliedChange> changes;

    bool empty() const { return records.empty() && changes.empty(); }
};

// Persistent fact store for one run. Entries iterate in ascending id order.
class MemoryBank {
public:
    static constexpr int kFormatVersion = 1;

    MemoryBank() = default;
    explicit MemoryBank(std::string run_id) : run_id_(std::move(run_id)) {}

    const std::string& run_id() const noexcept { return run_id_; }
    MemoryId next_id() const noexcept { return next_id_; }
    std::uint64_t clock() const noexcept { return clock_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    bool contains(MemoryId id) const { return entries_.count(id) != 0; }
    const MemoryEntry* find(MemoryId id) const;
    std::vector<MemoryEntry> entries() const;
    std::vector<MemoryId> ids() const;

    // Low-level mutators used by apply_ops. They keep next_id and the
    // sequence clock consistent but do no collision handling.
    void insert(MemoryId id, std::string text);
    void replace_text(MemoryId id, std::string text);
    bool erase(MemoryId id);

    // JSON Lines: header {format_version, run_id, next_id, clock, count},
    // then one {id, text, created_at, updated_at} line per entry.
    std::string snapshot() const;
    static MemoryBank load(std::string_view bytes);

    friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

private:
    std::string run_id_;
    MemoryId next_id_ = 0;
    std::uint64_t clock_ = 0;
    std::map<MemoryId, MemoryEntry> entries_;
};

struct ApplyResult {
    MemoryBank bank;
    ApplyLog log;
};

// Applies ops in order. ADD keeps its id when free and otherwise takes
// next_id; UPDATE on an unknown id becomes an ADD; DELETE on an unknown id
// and NONE do nothing. Never throws for op content.
ApplyResult apply_ops(const MemoryBank& bank, std::span<const MemoryOp> ops);

} // namespace memlora
