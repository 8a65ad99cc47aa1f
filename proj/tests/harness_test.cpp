// SPDX-License-Identifier: Apache-2.0
#include "epcaw/harness.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "epcaw/cli.hpp"
#include "test_support.hpp"

namespace epcaw {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("epcaw_harness_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(LoadDataset, WellFormedFile) {
    auto dir = temp_dir("load");
    {
        std::ofstream out(dir / "toy.jsonl");
        out << R"({"id":"a","question":"q1","answer":"x"})" << "\n";
        out << R"({"id":"b","question":"q2","answer":"y"})" << "\n";
        out << R"({"id":"c","question":"q3","answer":"z"})" << "\n";
    }
    auto records = load_dataset((dir / "toy.jsonl").string());
    ASSERT_EQ(records.size(), 3u);
    EXPECT_EQ(records[0].id, "a");
    EXPECT_EQ(records[2].gold_answer, "z");
    EXPECT_EQ(records[1].dataset_tag, "toy");
}

TEST(LoadDataset, MissingFieldNamesLineAndField) {
    auto dir = temp_dir("malformed");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"id":"a","question":"q1","answer":"x"})" << "\n";
        out << R"({"id":"b","question":"q2"})" << "\n";
    }
    try {
        load_dataset((dir / "bad.jsonl").string());
        FAIL() << "expected MalformedRecord";
    } catch (const MalformedRecord& e) {
        EXPECT_EQ(e.line_number, 2);
        EXPECT_EQ(e.missing_field, "answer");
    }
}

TEST(LoadDataset, FieldRemapping) {
    auto dir = temp_dir("remap");
    {
        std::ofstream out(dir / "mapped.jsonl");
        out << R"({"qid":"a","text":"q1","gold":"x"})" << "\n";
    }
    DatasetFieldMap fields{"qid", "text", "gold"};
    auto records = load_dataset((dir / "mapped.jsonl").string(), fields);
    ASSERT_EQ(records.size(), 1u);
    EXPECT_EQ(records[0].question, "q1");
}

TEST(LoadDataset, WarnsOnUnexpectedSubsetSize) {
    auto dir = temp_dir("warn");
    {
        std::ofstream out(dir / "bamboogle.jsonl");
        out << R"({"id":"a","question":"q1","answer":"x"})" << "\n";
    }
    std::ostringstream warnings;
    auto records = load_dataset((dir / "bamboogle.jsonl").string(), {}, &warnings);
    EXPECT_EQ(records.size(), 1u);
    EXPECT_NE(warnings.str().find("expected 125"), std::string::npos);
}

TEST(JudgeAnswer, NormalizedExactMatching) {
    TaskRecord task{"t", "q", "paris", "d"};
    auto verdict = judge_answer(nullptr, task, "Paris.", JudgeKind::NormalizedExact);
    EXPECT_TRUE(verdict.correct);
    EXPECT_EQ(verdict.judge_kind, JudgeKind::NormalizedExact);

    TaskRecord year{"t", "q", "1921", "d"};
    EXPECT_FALSE(judge_answer(nullptr, year, "1912", JudgeKind::NormalizedExact).correct);
}

TEST(JudgeAnswer, NormalizedExactIsSymmetric) {
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"Paris.", "paris"}, {"A  B", "a b"}, {"x", "y"}, {"", ""}, {"Dr. Who?", "dr who"}};
    for (const auto& [a, b] : pairs) {
        TaskRecord ta{"t", "q", b, "d"};
        TaskRecord tb{"t", "q", a, "d"};
        EXPECT_EQ(judge_answer(nullptr, ta, a, JudgeKind::NormalizedExact).correct,
                  judge_answer(nullptr, tb, b, JudgeKind::NormalizedExact).correct)
            << a << " vs " << b;
    }
}

TEST(JudgeAnswer, LlmJudgeParsesVerdicts) {
    Script script;
    const auto key = request_key(RoleTag::Judge, Purpose::Judging, std::nullopt, 1);
    script.add(key, "CORRECT");
    script.add(key, "INCORRECT");
    script.add(key, "hmm");
    ScriptedBackend backend(std::move(script));
    TaskRecord task{"t", "q", "paris", "d"};

    auto a = judge_answer(&backend, task, "totally different", JudgeKind::LlmJudge);
    EXPECT_TRUE(a.correct);
    EXPECT_EQ(a.judge_kind, JudgeKind::LlmJudge);

    auto b = judge_answer(&backend, task, "paris", JudgeKind::LlmJudge);
    EXPECT_FALSE(b.correct);

    // malformed output falls back to exact matching, flagged
    auto c = judge_answer(&backend, task, "Paris", JudgeKind::LlmJudge);
    EXPECT_TRUE(c.correct);
    EXPECT_TRUE(c.judge_fallback);
}

std::vector<JudgeVerdict> make_verdicts(const std::string& tag, int correct, int total) {
    std::vector<JudgeVerdict> verdicts;
    for (int i = 0; i < total; ++i)
        verdicts.push_back({"t" + std::to_string(i), tag, "p", i < correct,
                            JudgeKind::NormalizedExact, false});
    return verdicts;
}

TEST(AggregateMetrics, SimpleAccuracy) {
    auto report = aggregate_metrics(make_verdicts("toy", 3, 4));
    EXPECT_NEAR(report.per_dataset.at("toy").accuracy, 75.00, 1e-9);
}

TEST(AggregateMetrics, DeltaAgainstBaseline) {
    auto method = make_verdicts("bamboogle", 5813, 10000);
    auto baseline = make_verdicts("bamboogle", 4827, 10000);
    auto report = aggregate_metrics(method, &baseline, "no-repair");
    EXPECT_NEAR(report.per_dataset.at("bamboogle").accuracy, 58.13, 1e-9);
    EXPECT_NEAR(report.delta_vs_baseline.at("bamboogle"), 9.86, 1e-9);
}

TEST(AggregateMetrics, EmptyRunRejected) {
    EXPECT_THROW(aggregate_metrics({}), EmptyRun);
}

TEST(AggregateMetrics, RenderingIsDeterministic) {
    auto verdicts = make_verdicts("toy", 2, 3);
    auto other = make_verdicts("other", 1, 2);
    verdicts.insert(verdicts.end(), other.begin(), other.end());
    auto a = render_metrics(aggregate_metrics(verdicts));
    auto b = render_metrics(aggregate_metrics(verdicts));
    EXPECT_EQ(a, b);
    EXPECT_NE(a.find("66.67"), std::string::npos);
    EXPECT_NE(a.find("50.00"), std::string::npos);
}

Trace sample_trace() {
    Script script;
    script.add_wildcard(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt,
                        {"", testing::plan_block("confirm", kBaseGenerator, "recall")});
    script.add_wildcard(RoleTag::Executor, Purpose::ToolArgumentation, std::nullopt,
                        {"", "The capital of France is Paris."});
    script.add_wildcard(RoleTag::Diagnoser, Purpose::Diagnosis, std::nullopt,
                        {"", "SUPPORTED\nclear\nEVIDENCE: The capital of France is Paris."});
    script.add_wildcard(RoleTag::Diagnoser, Purpose::StopCheck, std::nullopt, {"", "SUFFICIENT"});
    script.add_wildcard(RoleTag::Planner, Purpose::AnswerGeneration, std::nullopt, {"", "Paris"});
    ScriptedBackend backend(std::move(script));
    ToolRegistry tools(nullptr, {});
    RunConfig config;
    config.mode = Mode::NoRepair;
    return run_task(config, Task{"t1", "capital of France?", "toy"}, backend, tools);
}

TEST(PersistTrace, RoundTripsThroughDisk) {
    auto dir = temp_dir("traces");
    auto trace = sample_trace();
    auto path = persist_trace(trace, dir.string());
    EXPECT_EQ(path.filename(), "t1.json");
    EXPECT_EQ(path.parent_path().filename(), "toy");

    auto loaded = read_trace(path.string());
    EXPECT_EQ(canonical_trace_json(trace).dump(), canonical_trace_json(loaded).dump());
}

TEST(PersistTrace, UnknownSchemaVersionRejected) {
    auto dir = temp_dir("schema");
    auto trace = sample_trace();
    json j = trace;
    j["schema"] = "epcaw-trace/999";
    auto path = dir / "bad.json";
    {
        std::ofstream out(path);
        out << j.dump();
    }
    EXPECT_THROW(read_trace(path.string()), SchemaMismatch);
}

TEST(PersistTrace, IoErrorCarriesPath) {
    auto trace = sample_trace();
    try {
        persist_trace(trace, "/proc/epcaw_forbidden");
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("t1.json"), std::string::npos);
    }
}

TEST(CliRun, RepeatsAndParallelTasks) {
    auto dir = temp_dir("repeats");
    const std::string dataset = std::string(EPCAW_FIXTURE_DIR) + "/toy.jsonl";
    const std::string script = std::string(EPCAW_FIXTURE_DIR) + "/divergence.json";
    const std::string fixtures = std::string(EPCAW_FIXTURE_DIR) + "/tools.json";
    const std::string trace_dir = (dir / "traces").string();
    const char* argv[] = {"epcaw",        "--mode",          "no-repair",
                          "--backend",    "scripted",        "--script",
                          script.c_str(), "--dataset",       dataset.c_str(),
                          "--tool-fixtures", fixtures.c_str(), "--trace-dir",
                          trace_dir.c_str(), "--repeats",    "2",
                          "--parallel-tasks", "3"};
    ASSERT_EQ(cli_run(17, argv), 0);
    std::ifstream in(fs::path(trace_dir) / "report.json");
    ASSERT_TRUE(in.is_open());
    json report = json::parse(in);
    EXPECT_EQ(report["datasets"]["toy"]["total"].get<int>(), 10);  // 5 tasks x 2 repeats
    EXPECT_EQ(report["run_count"].get<int>(), 2);
}

TEST(CliRun, RejectsUnknownMode) {
    const char* argv[] = {"epcaw", "--mode", "bogus", "--dataset", "x.jsonl"};
    EXPECT_NE(cli_run(5, argv), 0);
}

TEST(CliRun, RequiresScriptForScriptedBackend) {
    auto dir = temp_dir("cli");
    {
        std::ofstream out(dir / "d.jsonl");
        out << R"({"id":"a","question":"q","answer":"x"})" << "\n";
    }
    std::string dataset = (dir / "d.jsonl").string();
    const char* argv[] = {"epcaw", "--backend", "scripted", "--dataset", dataset.c_str()};
    EXPECT_NE(cli_run(5, argv), 0);
}

}  // namespace
}  // namespace epcaw
