// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "epcaw/serialize.hpp"
#include "epcaw/workflow.hpp"

namespace epcaw {

struct TaskRecord {
    std::string id;
    std::string question;
    std::string gold_answer;
    std::string dataset_tag;
};

enum class JudgeKind { LlmJudge, NormalizedExact };

inline const char* to_string(JudgeKind k) {
    return k == JudgeKind::LlmJudge ? "LlmJudge" : "NormalizedExact";
}

struct JudgeVerdict {
    std::string task_id;
    std::string dataset_tag;
    std::string predicted;
    bool correct = false;
    JudgeKind judge_kind = JudgeKind::NormalizedExact;
    bool judge_fallback = false;  // LlmJudge output was malformed; exact match used
};

struct DatasetFieldMap {
    std::string id = "id";
    std::string question = "question";
    std::string answer = "answer";
};

/// Subset sizes the upstream evaluation uses; a count mismatch on a matching
/// file stem is only worth a warning.
inline const std::map<std::string, int>& expected_dataset_sizes() {
    static const std::map<std::string, int> sizes = {
        {"bamboogle", 125}, {"2wiki", 200}, {"hotpotqa", 100},
        {"musique", 200},   {"gaia", 127},  {"medqa", 300},
    };
    return sizes;
}

/// Line-delimited JSON, one task per line. Field names are remappable; the
/// dataset tag is the file stem. Line numbers are 1-based in diagnostics.
inline std::vector<TaskRecord> load_dataset(const std::string& path,
                                            const DatasetFieldMap& fields = {},
                                            std::ostream* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file", path);
    const std::string tag = std::filesystem::path(path).stem().string();

    std::vector<TaskRecord> records;
    std::string line;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw MalformedRecord(line_number, "(unparseable line)");
        auto extract = [&](const std::string& field) {
            if (!j.contains(field) || !j[field].is_string() ||
                j[field].get<std::string>().empty())
                throw MalformedRecord(line_number, field);
            return j[field].get<std::string>();
        };
        TaskRecord r;
        r.id = extract(fields.id);
        r.question = extract(fields.question);
        r.gold_answer = extract(fields.answer);
        r.dataset_tag = tag;
        records.push_back(std::move(r));
    }
    auto expected = expected_dataset_sizes().find(to_lower(tag));
    if (warnings && expected != expected_dataset_sizes().end() &&
        static_cast<int>(records.size()) != expected->second) {
        *warnings << "warning: dataset '" << tag << "' has " << records.size()
                  << " records, expected " << expected->second << "\n";
    }
    return records;
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

inline std::string normalize_answer(const std::string& text) {
    std::string stripped;
    for (unsigned char c : text)
        if (!std::ispunct(c)) stripped.push_back(static_cast<char>(c));
    return normalize_key(stripped);
}

/// NormalizedExact: case-fold, strip punctuation and surrounding whitespace.
/// LlmJudge: one Judging completion; malformed output falls back to exact
/// matching with a flag.
inline JudgeVerdict judge_answer(Backend* backend, const TaskRecord& task,
                                 const std::string& predicted, JudgeKind kind) {
    JudgeVerdict verdict;
    verdict.task_id = task.id;
    verdict.dataset_tag = task.dataset_tag;
    verdict.predicted = predicted;
    verdict.judge_kind = kind;
    if (kind == JudgeKind::LlmJudge && backend) {
        CompletionRequest req;
        req.role_tag = RoleTag::Judge;
        req.purpose_tag = Purpose::Judging;
        req.round = 1;
        req.temperature = 0.0;
        req.max_output = 8;
        req.prompt = prompts::judging(task.question, predicted, task.gold_answer);
        const std::string text = trim(backend->complete(req).text);
        if (starts_with(text, "INCORRECT")) {
            verdict.correct = false;
            return verdict;
        }
        if (starts_with(text, "CORRECT")) {
            verdict.correct = true;
            return verdict;
        }
        verdict.judge_fallback = true;
    }
    verdict.correct = normalize_answer(predicted) == normalize_answer(task.gold_answer);
    return verdict;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct DatasetMetrics {
    int total = 0;
    int correct = 0;
    double accuracy = 0.0;  // percent, 2-decimal rounding happens at render time
};

struct MetricsReport {
    std::map<std::string, DatasetMetrics> per_dataset;
    std::map<std::string, double> delta_vs_baseline;  // signed percentage points
    std::string baseline_name;
    int run_count = 1;
    long prompt_tokens = 0;
    long output_tokens = 0;
    int completion_count = 0;
    long tool_ms = 0;
};

inline MetricsReport aggregate_metrics(const std::vector<JudgeVerdict>& verdicts,
                                       const std::vector<JudgeVerdict>* baseline = nullptr,
                                       const std::string& baseline_name = "") {
    if (verdicts.empty()) throw EmptyRun();
    MetricsReport report;
    for (const auto& v : verdicts) {
        auto& m = report.per_dataset[v.dataset_tag];
        ++m.total;
        if (v.correct) ++m.correct;
    }
    for (auto& [tag, m] : report.per_dataset) m.accuracy = 100.0 * m.correct / m.total;
    if (baseline && !baseline->empty()) {
        report.baseline_name = baseline_name;
        std::map<std::string, DatasetMetrics> base;
        for (const auto& v : *baseline) {
            auto& m = base[v.dataset_tag];
            ++m.total;
            if (v.correct) ++m.correct;
        }
        for (auto& [tag, m] : base) m.accuracy = 100.0 * m.correct / m.total;
        for (const auto& [tag, m] : report.per_dataset) {
            auto it = base.find(tag);
            if (it != base.end())
                report.delta_vs_baseline[tag] = m.accuracy - it->second.accuracy;
        }
    }
    return report;
}

inline void add_cost(MetricsReport& report, const CostLedger& ledger) {
    report.prompt_tokens += ledger.prompt_tokens();
    report.output_tokens += ledger.output_tokens();
    report.completion_count += ledger.completion_count();
    report.tool_ms += ledger.tool_ms();
}

inline json metrics_to_json(const MetricsReport& r) {
    json datasets = json::object();
    for (const auto& [tag, m] : r.per_dataset) {
        json d{{"total", m.total}, {"correct", m.correct}, {"accuracy", m.accuracy}};
        auto it = r.delta_vs_baseline.find(tag);
        if (it != r.delta_vs_baseline.end()) d["delta"] = it->second;
        datasets[tag] = d;
    }
    json j{{"datasets", datasets},
           {"run_count", r.run_count},
           {"cost",
            json{{"prompt_tokens", r.prompt_tokens},
                 {"output_tokens", r.output_tokens},
                 {"completions", r.completion_count},
                 {"tool_ms", r.tool_ms}}}};
    if (!r.baseline_name.empty()) j["baseline"] = r.baseline_name;
    return j;
}

/// Accuracy table, one dataset per row, with a delta column when a baseline
/// was supplied. Deterministic for a given verdict multiset.
inline std::string render_metrics(const MetricsReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "dataset        n     acc%";
    if (!r.delta_vs_baseline.empty()) out << "   delta vs " << r.baseline_name;
    out << "\n";
    for (const auto& [tag, m] : r.per_dataset) {
        out << std::left << std::setw(12) << tag << std::right << std::setw(5) << m.total
            << std::setw(9) << m.accuracy;
        auto it = r.delta_vs_baseline.find(tag);
        if (it != r.delta_vs_baseline.end())
            out << "   " << std::showpos << it->second << std::noshowpos;
        out << "\n";
    }
    out << "completions " << r.completion_count << ", prompt tokens " << r.prompt_tokens
        << ", output tokens " << r.output_tokens << ", tool time " << r.tool_ms << " ms\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Trace persistence
// ---------------------------------------------------------------------------

/// Writes <directory>/<dataset>/<task_id>.json. Returns the path written.
inline std::filesystem::path persist_trace(const Trace& trace, const std::string& directory) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(directory) / trace.dataset_tag;
    std::error_code ec;
    fs::create_directories(dir, ec);
    fs::path file = dir / (trace.task_id + ".json");
    std::ofstream out(file);
    if (!out) throw IoError("cannot write trace file", file.string());
    out << json(trace).dump(2) << "\n";
    if (!out) throw IoError("short write on trace file", file.string());
    return file;
}

inline Trace read_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read trace file", path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaMismatch("trace file is not valid JSON: " + path);
    return j.get<Trace>();
}

}  // namespace epcaw
