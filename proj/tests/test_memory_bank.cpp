#include <gtest/gtest.h>

#include <random>

#include "memlora/errors.hpp"
#include "memlora/memory_bank.hpp"
#include "test_support.hpp"

using namespace memlora;
using memlora::testing::OracleBank;

namespace {

MemoryOp op(MemoryEvent event, MemoryId id, std::string text = {}) { return {event, id, std::move(text), {}}; }

OracleBank to_oracle(const MemoryBank& bank) {
    OracleBank o;
    for (const auto& e : bank.entries()) o.entries[e.id] = e.text;
    o.next_id = bank.next_id();
    return o;
}

} // namespace

TEST(MemoryBank, AddKeepsFreeIdAndRemapsCollision) {
    const auto bank = memlora::testing::school_bank();
    const std::vector<MemoryOp> ops = {op(MemoryEvent::Add, 4, "a"), op(MemoryEvent::Add, 9, "b")};
    const auto result = apply_ops(bank, ops);
    EXPECT_EQ(result.bank.find(6)->text, "a");
    EXPECT_EQ(result.bank.find(9)->text, "b");
    EXPECT_EQ(result.bank.find(4)->text, "Wants schools and infrastructure to be properly funded");
    ASSERT_EQ(result.log.records.size(), 1u);
    EXPECT_EQ(result.log.records[0].kind, ApplyRecord::Kind::AddRemapped);
    EXPECT_EQ(result.log.records[0].requested_id, 4u);
    EXPECT_EQ(result.log.records[0].assigned_id, 6u);
    EXPECT_EQ(result.bank.next_id(), 10u);
}

TEST(MemoryBank, UpdateUnknownBecomesAdd) {
    const auto result = apply_ops(MemoryBank("r"), std::vector{op(MemoryEvent::Update, 3, "x")});
    EXPECT_EQ(result.bank.find(3)->text, "x");
    ASSERT_EQ(result.log.records.size(), 1u);
    EXPECT_EQ(result.log.records[0].kind, ApplyRecord::Kind::UpdateDowngraded);
    EXPECT_EQ(result.log.changes, (std::vector<AppliedChange>{{MemoryEvent::Add, 3, "x"}}));
}

TEST(MemoryBank, DeleteUnknownAndNoneAreNoOps) {
    const auto bank = memlora::testing::school_bank();
    const auto result = apply_ops(bank, std::vector{op(MemoryEvent::Delete, 42), op(MemoryEvent::None, 1, "t")});
    EXPECT_EQ(result.bank, bank);
    ASSERT_EQ(result.log.records.size(), 1u);
    EXPECT_EQ(result.log.records[0].kind, ApplyRecord::Kind::DeleteUnknown);
    EXPECT_TRUE(result.log.changes.empty());
}

TEST(MemoryBank, DeleteRemovesAndKeepsNextId) {
    const auto bank = memlora::testing::school_bank();
    const auto result = apply_ops(bank, std::vector{op(MemoryEvent::Delete, 5)});
    EXPECT_FALSE(result.bank.contains(5));
    EXPECT_EQ(result.bank.next_id(), 6u);
    const auto again = apply_ops(result.bank, std::vector{op(MemoryEvent::Add, 0, "new")});
    EXPECT_TRUE(again.bank.contains(6));
}

TEST(MemoryBank, EmptyTextIsRecordedNotApplied) {
    const auto result = apply_ops(MemoryBank("r"), std::vector{op(MemoryEvent::Add, 0)});
    EXPECT_TRUE(result.bank.empty());
    ASSERT_EQ(result.log.records.size(), 1u);
    EXPECT_EQ(result.log.records[0].kind, ApplyRecord::Kind::EmptyText);
}

TEST(MemoryBank, ClockOrdersChanges) {
    auto result = apply_ops(MemoryBank("r"), std::vector{op(MemoryEvent::Add, 0, "a"), op(MemoryEvent::Add, 1, "b")});
    result = apply_ops(result.bank, std::vector{op(MemoryEvent::Update, 0, "a2")});
    const auto* a = result.bank.find(0);
    const auto* b = result.bank.find(1);
    EXPECT_LT(a->created_at, b->created_at);
    EXPECT_GT(a->updated_at, b->updated_at);
    EXPECT_EQ(result.bank.clock(), a->updated_at);
}

TEST(MemoryBank, InputBankIsNotModified) {
    const auto bank = memlora::testing::school_bank();
    const auto copy = bank;
    (void)apply_ops(bank, std::vector{op(MemoryEvent::Delete, 0), op(MemoryEvent::Add, 1, "z")});
    EXPECT_EQ(bank, copy);
}

TEST(MemoryBankProperty, MatchesSequentialOracle) {
    std::mt19937_64 rng(20240601);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto bank = memlora::testing::random_bank(rng, 8, 11);
        const auto ops = memlora::testing::random_ops(rng, 6, 11);
        const auto expected = memlora::testing::oracle_apply(to_oracle(bank), ops);
        const auto actual = to_oracle(apply_ops(bank, ops).bank);
        ASSERT_EQ(actual.entries, expected.entries) << "trial " << trial;
        ASSERT_EQ(actual.next_id, expected.next_id) << "trial " << trial;
    }
}

TEST(MemoryBankProperty, SnapshotRoundTrips) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        auto bank = memlora::testing::random_bank(rng, 8, 20);
        bank = apply_ops(bank, memlora::testing::random_ops(rng, 6, 20)).bank;
        const auto bytes = bank.snapshot();
        const auto loaded = MemoryBank::load(bytes);
        ASSERT_EQ(loaded, bank);
        ASSERT_EQ(loaded.snapshot(), bytes);
    }
}

TEST(MemoryBank, SnapshotKeepsUnicodeAndQuotes) {
    MemoryBank bank("run \"1\"");
    bank.insert(0, "Café \"naïve\"\nline two ☕");
    EXPECT_EQ(MemoryBank::load(bank.snapshot()), bank);
}

TEST(MemoryBank, TruncatedSnapshotIsDecodeError) {
    const auto bytes = memlora::testing::school_bank().snapshot();
    // Dropping the last line leaves fewer entries than the header announces.
    const auto cut = bytes.substr(0, bytes.rfind('\n', bytes.size() - 2) + 1);
    EXPECT_THROW(MemoryBank::load(cut), DecodeError);
    // Cutting mid-line leaves invalid JSON.
    EXPECT_THROW(MemoryBank::load(bytes.substr(0, bytes.size() - 10)), DecodeError);
    EXPECT_THROW(MemoryBank::load(""), DecodeError);
}

TEST(MemoryBank, WrongFormatVersionIsDecodeError) {
    auto bytes = MemoryBank("r").snapshot();
    const auto pos = bytes.find("\"format_version\":1");
    ASSERT_NE(pos, std::string::npos);
    bytes.replace(pos, 18, "\"format_version\":9");
    EXPECT_THROW(MemoryBank::load(bytes), DecodeError);
}

TEST(MemoryBank, EventNamesRoundTrip) {
    for (auto e : {MemoryEvent::Add, MemoryEvent::Update, MemoryEvent::Delete, MemoryEvent::None})
        EXPECT_EQ(memory_event_from_string(to_string(e)), e);
    EXPECT_FALSE(memory_event_from_string("MERGE"));
}
