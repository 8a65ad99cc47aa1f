// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <future>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "epcaw/harness.hpp"

namespace epcaw {

struct CliOptions {
    std::string mode = "epc-aw";
    bool no_ips = false;
    bool no_cesr = false;
    int k = 9;
    int max_rounds = 10;
    double temperature_plan = 0.9;
    std::string backend = "scripted";
    std::string endpoint = "http://localhost:8000/v1/chat/completions";
    std::string model = "default";
    std::string api_key_env = "EPCAW_API_KEY";
    std::string script;
    std::string dataset;
    std::string trace_dir = "traces";
    std::string judge = "exact";
    std::string eval_batching = "per-perspective";
    std::string tool_fixtures;
    std::string search_endpoint;
    std::string baseline_report;
    int parallel_tasks = 1;
    int seed = 0;
    int repeats = 1;
    int context_budget = 4096;
    bool enable_code_exec = false;
};

namespace detail {

inline Mode parse_mode(const std::string& s) {
    for (Mode m : {Mode::EpcAw, Mode::NoRepair, Mode::Retry, Mode::Rollback, Mode::Msa})
        if (s == to_string(m)) return m;
    throw UsageError("unknown mode: " + s);
}

inline void apply_baseline(MetricsReport& report, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open baseline report", path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.contains("datasets"))
        throw SchemaMismatch("baseline report is not a metrics JSON: " + path);
    report.baseline_name = std::filesystem::path(path).stem().string();
    for (const auto& [tag, m] : report.per_dataset) {
        if (j["datasets"].contains(tag)) {
            report.delta_vs_baseline[tag] =
                m.accuracy - j["datasets"][tag].value("accuracy", 0.0);
        }
    }
}

struct TaskRun {
    JudgeVerdict verdict;
    CostLedger cost;
};

inline TaskRun run_one(const CliOptions& opt, const RunConfig& config, const TaskRecord& record,
                       int repeat) {
    std::unique_ptr<Backend> backend;
    if (opt.backend == "scripted") {
        backend = std::make_unique<ScriptedBackend>(Script::load_for_task(opt.script, record.id));
    } else {
        HttpBackendConfig http;
        http.endpoint = opt.endpoint;
        http.model = opt.model;
        http.api_key_env = opt.api_key_env;
        http.seed = config.seed == 0 ? 0 : config.seed + repeat;
        backend = std::make_unique<HttpBackend>(http);
    }

    std::shared_ptr<SearchProvider> provider;
    if (!opt.tool_fixtures.empty())
        provider = std::make_shared<FixtureSearchProvider>(opt.tool_fixtures);
    else if (!opt.search_endpoint.empty())
        provider = std::make_shared<HttpSearchProvider>(opt.search_endpoint);
    ToolConfig tool_config;
    tool_config.code_execution_enabled = opt.enable_code_exec;
    ToolRegistry tools(provider, tool_config, backend.get());

    Task task{record.id, record.question, record.dataset_tag};
    Trace trace = run_task(config, task, *backend, tools);
    persist_trace(trace, opt.trace_dir);

    TaskRun run;
    run.cost = trace.cost;
    const JudgeKind kind = opt.judge == "llm" ? JudgeKind::LlmJudge : JudgeKind::NormalizedExact;
    run.verdict = judge_answer(backend.get(), record, trace.final_answer, kind);
    return run;
}

}  // namespace detail

/// Entry point behind the binary. Parses flags, runs every task (optionally
/// in bounded parallel batches), writes traces plus report.json/report.txt
/// under the trace directory, prints the table, and returns the exit status.
inline int cli_run(int argc, const char* const* argv) {
    CliOptions opt;
    CLI::App app{"Planning-calibration agentic workflow runner"};
    app.add_option("--mode", opt.mode, "workflow mode")
        ->check(CLI::IsMember({"epc-aw", "no-repair", "retry", "rollback", "msa"}));
    app.add_flag("--no-ips", opt.no_ips, "disable consistency-based plan selection");
    app.add_flag("--no-cesr", opt.no_cesr, "disable cross-round constraint refinement");
    app.add_option("--k", opt.k, "candidate plans per round")->check(CLI::PositiveNumber);
    app.add_option("--max-rounds", opt.max_rounds, "round budget")->check(CLI::PositiveNumber);
    app.add_option("--temperature-plan", opt.temperature_plan, "candidate generation temperature");
    app.add_option("--backend", opt.backend, "completion backend")
        ->check(CLI::IsMember({"http", "scripted"}));
    app.add_option("--endpoint", opt.endpoint, "chat-completions endpoint URL");
    app.add_option("--model", opt.model, "model name for the http backend");
    app.add_option("--api-key-env", opt.api_key_env, "environment variable holding the API key");
    app.add_option("--script", opt.script, "script file for the scripted backend");
    app.add_option("--dataset", opt.dataset, "line-delimited JSON dataset")->required();
    app.add_option("--trace-dir", opt.trace_dir, "directory for trace and report files");
    app.add_option("--judge", opt.judge, "answer judge")->check(CLI::IsMember({"exact", "llm"}));
    app.add_option("--eval-batching", opt.eval_batching, "evaluation call structure")
        ->check(CLI::IsMember({"per-perspective", "per-agent"}));
    app.add_option("--tool-fixtures", opt.tool_fixtures, "fixture file for the tool providers");
    app.add_option("--search-endpoint", opt.search_endpoint, "live search provider endpoint");
    app.add_option("--baseline-report", opt.baseline_report,
                   "earlier report.json to compute accuracy deltas against");
    app.add_option("--parallel-tasks", opt.parallel_tasks, "tasks run concurrently")
        ->check(CLI::PositiveNumber);
    app.add_option("--seed", opt.seed, "sampling seed forwarded to the http backend");
    app.add_option("--repeats", opt.repeats, "repeated runs per task")
        ->check(CLI::PositiveNumber);
    app.add_option("--context-budget", opt.context_budget, "prompt context token budget")
        ->check(CLI::PositiveNumber);
    app.add_flag("--enable-code-exec", opt.enable_code_exec, "allow python_coder execution");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (opt.backend == "scripted" && opt.script.empty())
            throw UsageError("--backend scripted requires --script");

        RunConfig config;
        config.mode = detail::parse_mode(opt.mode);
        config.k = opt.k;
        config.max_rounds = opt.max_rounds;
        config.temperature_plan = opt.temperature_plan;
        config.ips_enabled = !opt.no_ips;
        config.cesr_enabled = !opt.no_cesr;
        config.eval_batching = opt.eval_batching == "per-agent" ? EvalBatching::PerAgent
                                                                : EvalBatching::PerPerspective;
        config.context_budget = opt.context_budget;
        config.seed = opt.seed;
        config = config.normalized();

        auto records = load_dataset(opt.dataset, {}, &std::cerr);

        std::vector<JudgeVerdict> verdicts;
        MetricsReport report;
        report.run_count = opt.repeats;

        std::vector<std::pair<TaskRecord, int>> work;
        for (int repeat = 0; repeat < opt.repeats; ++repeat)
            for (const auto& r : records) work.emplace_back(r, repeat);

        for (size_t begin = 0; begin < work.size();
             begin += static_cast<size_t>(opt.parallel_tasks)) {
            const size_t end =
                std::min(work.size(), begin + static_cast<size_t>(opt.parallel_tasks));
            std::vector<std::future<detail::TaskRun>> batch;
            for (size_t i = begin; i < end; ++i) {
                batch.push_back(std::async(std::launch::async, [&, i] {
                    return detail::run_one(opt, config, work[i].first, work[i].second);
                }));
            }
            for (auto& f : batch) {
                auto run = f.get();
                verdicts.push_back(run.verdict);
                add_cost(report, run.cost);
            }
        }

        auto accumulated = aggregate_metrics(verdicts);
        report.per_dataset = accumulated.per_dataset;
        if (!opt.baseline_report.empty()) detail::apply_baseline(report, opt.baseline_report);

        const std::string table = render_metrics(report);
        std::cout << table;
        std::filesystem::create_directories(opt.trace_dir);
        {
            std::ofstream out(std::filesystem::path(opt.trace_dir) / "report.json");
            out << metrics_to_json(report).dump(2) << "\n";
        }
        {
            std::ofstream out(std::filesystem::path(opt.trace_dir) / "report.txt");
            out << table;
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace epcaw
