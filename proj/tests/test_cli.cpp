#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "memlora/corpus.hpp"
#include "memlora/memory_bank.hpp"
#include "test_support.hpp"

using namespace memlora;
using namespace memlora::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI in `cwd` with a scrubbed MEMLORA_* environment.
CliResult run_cli(const fs::path& cwd, const std::string& args, const std::string& env = {}) {
    const auto err_file = cwd / "stderr.txt";
    const std::string cmd = "cd '" + cwd.string() +
                            "' && env -u MEMLORA_BACKEND_URL -u MEMLORA_MOCK_SCRIPT -u MEMLORA_JUDGE_MODEL " + env +
                            " '" MEMLORA_CLI "' " + args + " 2>'" + err_file.string() + "'";
    CliResult result;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return result;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) result.out.append(buf.data(), n);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.err = read_file(err_file);
    return result;
}

std::string fixture(const std::string& name) { return fixture_path(name).string(); }

// The last JSON line of stderr (logging may precede it).
nlohmann::json error_record(const std::string& err) {
    const auto end = err.find_last_not_of('\n');
    const auto start = err.rfind('\n', end);
    return nlohmann::json::parse(err.substr(start == std::string::npos ? 0 : start + 1, end + 1));
}

} // namespace

TEST(Cli, HelpListsEveryFlag) {
    const auto dir = temp_dir("cli_help");
    const auto r = run_cli(dir, "--help");
    EXPECT_EQ(r.exit_code, 0);
    for (const char* flag : {"--config", "--mock-script", "--jobs", "--variant", "--k", "--backend-url", "--today",
                             "--prompts", "--log-level", "ingest", "ask", "distill", "eval", "bench", "vqa-gen",
                             "search-experts"})
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
}

TEST(Cli, UnknownFlagIsAUsageError) {
    const auto dir = temp_dir("cli_unknown");
    const auto r = run_cli(dir, "--frobnicate ingest x.json");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_EQ(error_record(r.err)["error"], "usage");
}

TEST(Cli, BadConfigKeyNamesTheKey) {
    const auto dir = temp_dir("cli_badkey");
    write_file_atomic(dir / "config.json", R"({"retrieval_k": 3, "backends": {"backend": {"modle": "x"}}})");
    const auto r = run_cli(dir, "--config config.json ingest corpus.json");
    EXPECT_EQ(r.exit_code, 2);
    const auto record = error_record(r.err);
    EXPECT_EQ(record["error"], "config");
    EXPECT_NE(record["message"].get<std::string>().find("backends.backend.modle"), std::string::npos);
}

TEST(Cli, EmptyCorpusGivesEmptyBank) {
    const auto dir = temp_dir("cli_empty");
    write_file_atomic(dir / "empty.json", "[]");
    const auto r = run_cli(dir, "--mock-script '" + fixture("golden/mock_script.json") + "' ingest empty.json");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    const auto bank = MemoryBank::load(read_file(dir / "banks" / "empty.bank.jsonl"));
    EXPECT_EQ(bank.size(), 0u);
    EXPECT_TRUE(VectorIndex::load(read_file(dir / "indexes" / "empty.index.jsonl")).empty());
}

TEST(Cli, MissingCorpusIsADataError) {
    const auto dir = temp_dir("cli_missing");
    const auto r = run_cli(dir, "--mock-script '" + fixture("golden/mock_script.json") + "' ingest nowhere.json");
    EXPECT_EQ(r.exit_code, 4);
    EXPECT_EQ(error_record(r.err)["error"], "data");
}

TEST(Cli, ScriptMissIsABackendError) {
    const auto dir = temp_dir("cli_miss");
    write_file_atomic(dir / "mock.json", R"({"rules": []})");
    const auto r = run_cli(dir, "--mock-script mock.json --config '" + fixture("golden/config.json") + "' ingest '" +
                                    fixture("golden/corpus.json") + "'");
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_EQ(error_record(r.err)["error"], "backend");
}

TEST(Cli, FlagsOverrideEnvironment) {
    const auto dir = temp_dir("cli_precedence");
    // The environment points at a missing script; the flag wins.
    const auto r = run_cli(dir,
                           "--config '" + fixture("golden/config.json") + "' --mock-script '" +
                               fixture("golden/mock_script.json") + "' ingest '" +
                               fixture("golden/corpus.json") + "' --conversation G1",
                           "MEMLORA_MOCK_SCRIPT=/nonexistent/mock.json");
    EXPECT_EQ(r.exit_code, 0) << r.err;
    // Without the flag the environment is used and fails.
    const auto env_only = run_cli(dir, "ingest '" + fixture("golden/corpus.json") + "'",
                                  "MEMLORA_MOCK_SCRIPT=/nonexistent/mock.json");
    EXPECT_NE(env_only.exit_code, 0);
}

TEST(Cli, GoldenIngestAndEvalMatchFrozenBytes) {
    const auto dir = temp_dir("cli_golden");
    const std::string common =
        "--config '" + fixture("golden/config.json") + "' --mock-script '" + fixture("golden/mock_script.json") + "' ";
    const auto ingest = run_cli(dir, common + "ingest '" + fixture("golden/corpus.json") + "'");
    ASSERT_EQ(ingest.exit_code, 0) << ingest.err;
    EXPECT_EQ(read_file(dir / "banks" / "G1.bank.jsonl"), read_fixture("golden/expected/G1.bank.jsonl"));
    EXPECT_EQ(read_file(dir / "indexes" / "G1.index.jsonl"), read_fixture("golden/expected/G1.index.jsonl"));

    const auto eval = run_cli(dir, common + "eval qa '" + fixture("golden/corpus.json") + "' --split all --out report.json");
    ASSERT_EQ(eval.exit_code, 0) << eval.err;
    EXPECT_EQ(read_file(dir / "report.json"), read_fixture("golden/expected/report.json"));

    // The in-process run agrees with the CLI.
    const auto run = run_golden();
    EXPECT_EQ(run.bank, read_fixture("golden/expected/G1.bank.jsonl"));
    EXPECT_EQ(run.index, read_fixture("golden/expected/G1.index.jsonl"));
    EXPECT_EQ(run.report, read_fixture("golden/expected/report.json"));
}

TEST(Cli, AskAnswersFromStoredBank) {
    const auto dir = temp_dir("cli_ask");
    const std::string common =
        "--config '" + fixture("golden/config.json") + "' --mock-script '" + fixture("golden/mock_script.json") + "' ";
    ASSERT_EQ(run_cli(dir, common + "ingest '" + fixture("golden/corpus.json") + "'").exit_code, 0);
    const auto r = run_cli(dir, common + "ask 'What did John bring back from Hawaii?' --bank banks/G1.bank.jsonl");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(r.out, "A shell necklace\n");
}
