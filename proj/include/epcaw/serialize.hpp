// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include <json.hpp>

#include "epcaw/workflow.hpp"

// JSON bindings for the trace schema. Field names are part of the on-disk
// format; changing them requires a schema version bump in kTraceSchema.

namespace epcaw {

using nlohmann::json;

// --- enums -------------------------------------------------------------

namespace detail {

template <typename E>
E enum_from_string(const std::string& s, std::initializer_list<E> values, const char* what) {
    for (E v : values)
        if (s == to_string(v)) return v;
    throw SchemaMismatch(std::string("unknown ") + what + " value: " + s);
}

}  // namespace detail

inline void to_json(json& j, const RoleTag& v) { j = to_string(v); }
inline void from_json(const json& j, RoleTag& v) {
    v = detail::enum_from_string(j.get<std::string>(),
                                 {RoleTag::Planner, RoleTag::Executor, RoleTag::Diagnoser,
                                  RoleTag::Judge},
                                 "role");
}

inline void to_json(json& j, const Purpose& v) { j = to_string(v); }
inline void from_json(const json& j, Purpose& v) {
    v = detail::enum_from_string(
        j.get<std::string>(),
        {Purpose::CandidateGeneration, Purpose::Evaluation, Purpose::Diagnosis,
         Purpose::ConstraintInduction, Purpose::StopCheck, Purpose::AnswerGeneration,
         Purpose::ToolArgumentation, Purpose::Judging},
        "purpose");
}

inline void to_json(json& j, const Verdict& v) { j = to_string(v); }
inline void from_json(const json& j, Verdict& v) {
    v = detail::enum_from_string(j.get<std::string>(), {Verdict::Supported, Verdict::Unsupported},
                                 "verdict");
}

inline void to_json(json& j, const Mode& v) { j = to_string(v); }
inline void from_json(const json& j, Mode& v) {
    v = detail::enum_from_string(j.get<std::string>(),
                                 {Mode::EpcAw, Mode::NoRepair, Mode::Retry, Mode::Rollback,
                                  Mode::Msa},
                                 "mode");
}

inline void to_json(json& j, const StopReason& v) { j = to_string(v); }
inline void from_json(const json& j, StopReason& v) {
    v = detail::enum_from_string(j.get<std::string>(),
                                 {StopReason::Sufficient, StopReason::MaxRounds}, "stop reason");
}

inline void to_json(json& j, const Perspective& p) { j = to_string(p); }
inline void from_json(const json& j, Perspective& p) {
    const std::string s = j.get<std::string>();
    auto arrow = s.find("->");
    if (arrow == std::string::npos) throw SchemaMismatch("bad perspective: " + s);
    json a = s.substr(0, arrow), b = s.substr(arrow + 2);
    from_json(a, p.evaluator);
    from_json(b, p.target);
}

// --- plans, scores -------------------------------------------------------

inline void to_json(json& j, const Plan& p) {
    j = json{{"goal", p.goal},
             {"tool", p.tool_id},
             {"args", p.argument_sketch},
             {"index", p.candidate_index}};
}
inline void from_json(const json& j, Plan& p) {
    p.goal = j.at("goal");
    p.tool_id = j.at("tool");
    p.argument_sketch = j.at("args");
    p.candidate_index = j.at("index");
}

inline void to_json(json& j, const CandidateSet& c) {
    j = json{{"requested_k", c.requested_k}, {"plans", c.plans}};
}
inline void from_json(const json& j, CandidateSet& c) {
    c.requested_k = j.at("requested_k");
    c.plans = j.at("plans").get<std::vector<Plan>>();
}

inline void to_json(json& j, const ClampFlag& f) {
    j = json{{"perspective", f.perspective}, {"plan", f.plan_index}};
}
inline void from_json(const json& j, ClampFlag& f) {
    f.perspective = j.at("perspective").get<Perspective>();
    f.plan_index = j.at("plan");
}

inline void to_json(json& j, const ScoreMatrix& m) {
    json self = json::object();
    json predictions = json::object();
    for (AgentRole i : kAgents) {
        if (!m.self_scores[agent_index(i)].empty())
            self[to_string(i)] = m.self_scores[agent_index(i)];
        for (AgentRole t : kAgents) {
            const auto& vec = m.predictions[agent_index(i)][agent_index(t)];
            if (i != t && !vec.empty())
                predictions[std::string(to_string(i)) + "->" + to_string(t)] = vec;
        }
    }
    j = json{{"self", self}, {"predictions", predictions}, {"clamped", m.clamp_flags}};
}
inline void from_json(const json& j, ScoreMatrix& m) {
    for (AgentRole i : kAgents) {
        const std::string name = to_string(i);
        if (j.at("self").contains(name))
            m.self_scores[agent_index(i)] = j.at("self").at(name).get<std::vector<double>>();
        for (AgentRole t : kAgents) {
            if (i == t) continue;
            const std::string key = name + "->" + to_string(t);
            if (j.at("predictions").contains(key))
                m.predictions[agent_index(i)][agent_index(t)] =
                    j.at("predictions").at(key).get<std::vector<double>>();
        }
    }
    m.clamp_flags = j.value("clamped", std::vector<ClampFlag>{});
}

inline void to_json(json& j, const ConsistencyReport& r) {
    json peer = json::object(), agent = json::object();
    for (AgentRole i : kAgents) {
        peer[to_string(i)] = r.peer_means[agent_index(i)];
        agent[to_string(i)] = r.agent_scores[agent_index(i)];
    }
    j = json{{"peer_means", peer},        {"agent_scores", agent},
             {"plan_scores", r.plan_scores}, {"selected_index", r.selected_index},
             {"planner_index", r.planner_index}, {"tie_broken", r.tie_broken}};
}
inline void from_json(const json& j, ConsistencyReport& r) {
    for (AgentRole i : kAgents) {
        r.peer_means[agent_index(i)] =
            j.at("peer_means").at(to_string(i)).get<std::vector<double>>();
        r.agent_scores[agent_index(i)] =
            j.at("agent_scores").at(to_string(i)).get<std::vector<double>>();
    }
    r.plan_scores = j.at("plan_scores").get<std::vector<double>>();
    r.selected_index = j.at("selected_index");
    r.planner_index = j.at("planner_index");
    r.tie_broken = j.at("tie_broken");
}

// --- memory / execution ----------------------------------------------------

inline void to_json(json& j, const Evidence& e) {
    j = json{{"text", e.text}, {"source_round", e.source_round}};
}
inline void from_json(const json& j, Evidence& e) {
    e.text = j.at("text");
    e.source_round = j.at("source_round");
}

inline void to_json(json& j, const Diagnosis& d) {
    j = json{{"verdict", d.verdict}, {"rationale", d.rationale}, {"fallback", d.fallback}};
    if (d.evidence_text) j["evidence_text"] = *d.evidence_text;
}
inline void from_json(const json& j, Diagnosis& d) {
    d.verdict = j.at("verdict").get<Verdict>();
    d.rationale = j.at("rationale");
    d.fallback = j.value("fallback", false);
    if (j.contains("evidence_text")) d.evidence_text = j.at("evidence_text").get<std::string>();
    else d.evidence_text.reset();
}

inline void to_json(json& j, const ToolResult& t) {
    j = json{{"tool", t.tool_id},
             {"raw_output", t.raw_output},
             {"transport_ok", t.transport_ok},
             {"latency_ms", t.latency.count()}};
}
inline void from_json(const json& j, ToolResult& t) {
    t.tool_id = j.at("tool");
    t.raw_output = j.at("raw_output");
    t.transport_ok = j.at("transport_ok");
    t.latency = std::chrono::milliseconds(j.at("latency_ms").get<long>());
}

inline void to_json(json& j, const ExecutionOutcome& o) {
    j = json{{"text", o.text},
             {"concrete_arguments", o.concrete_arguments},
             {"unknown_tool", o.unknown_tool}};
    if (o.tool) j["tool_result"] = *o.tool;
}
inline void from_json(const json& j, ExecutionOutcome& o) {
    o.text = j.at("text");
    o.concrete_arguments = j.at("concrete_arguments");
    o.unknown_tool = j.value("unknown_tool", false);
    if (j.contains("tool_result")) o.tool = j.at("tool_result").get<ToolResult>();
    else o.tool.reset();
}

inline void to_json(json& j, const Constraint& c) {
    j = json{{"text", c.text},
             {"round", c.round},
             {"planner_choice_index", c.planner_choice_index},
             {"ips_choice_index", c.ips_choice_index},
             {"truncated", c.truncated},
             {"fallback", c.fallback}};
}
inline void from_json(const json& j, Constraint& c) {
    c.text = j.at("text");
    c.round = j.at("round");
    c.planner_choice_index = j.at("planner_choice_index");
    c.ips_choice_index = j.at("ips_choice_index");
    c.truncated = j.value("truncated", false);
    c.fallback = j.value("fallback", false);
}

// --- cost -------------------------------------------------------------

inline void to_json(json& j, const CompletionCost& c) {
    j = json{{"round", c.round},
             {"role", c.role},
             {"purpose", c.purpose},
             {"temperature", c.temperature},
             {"prompt_tokens", c.prompt_tokens},
             {"output_tokens", c.output_tokens},
             {"latency_ms", c.latency_ms}};
    if (c.perspective) j["perspective"] = *c.perspective;
}
inline void from_json(const json& j, CompletionCost& c) {
    c.round = j.at("round");
    c.role = j.at("role").get<RoleTag>();
    c.purpose = j.at("purpose").get<Purpose>();
    c.temperature = j.at("temperature");
    c.prompt_tokens = j.at("prompt_tokens");
    c.output_tokens = j.at("output_tokens");
    c.latency_ms = j.at("latency_ms");
    if (j.contains("perspective")) c.perspective = j.at("perspective").get<Perspective>();
    else c.perspective.reset();
}

inline void to_json(json& j, const ToolCost& c) {
    j = json{{"round", c.round}, {"tool", c.tool_id}, {"latency_ms", c.latency_ms}};
}
inline void from_json(const json& j, ToolCost& c) {
    c.round = j.at("round");
    c.tool_id = j.at("tool");
    c.latency_ms = j.at("latency_ms");
}

inline void to_json(json& j, const CostLedger& l) {
    j = json{{"completions", l.completions},
             {"tools", l.tools},
             {"totals",
              json{{"completions", l.completion_count()},
                   {"prompt_tokens", l.prompt_tokens()},
                   {"output_tokens", l.output_tokens()},
                   {"tool_ms", l.tool_ms()}}}};
}
inline void from_json(const json& j, CostLedger& l) {
    l.completions = j.at("completions").get<std::vector<CompletionCost>>();
    l.tools = j.at("tools").get<std::vector<ToolCost>>();
}

// --- config / trace ---------------------------------------------------------

inline void to_json(json& j, const RunConfig& c) {
    j = json{{"mode", c.mode},
             {"k", c.k},
             {"max_rounds", c.max_rounds},
             {"temperature_plan", c.temperature_plan},
             {"ips_enabled", c.ips_enabled},
             {"cesr_enabled", c.cesr_enabled},
             {"eval_batching",
              c.eval_batching == EvalBatching::PerPerspective ? "per-perspective" : "per-agent"},
             {"context_budget", c.context_budget},
             {"seed", c.seed}};
}
inline void from_json(const json& j, RunConfig& c) {
    c.mode = j.at("mode").get<Mode>();
    c.k = j.at("k");
    c.max_rounds = j.at("max_rounds");
    c.temperature_plan = j.at("temperature_plan");
    c.ips_enabled = j.at("ips_enabled");
    c.cesr_enabled = j.at("cesr_enabled");
    c.eval_batching = j.at("eval_batching") == "per-agent" ? EvalBatching::PerAgent
                                                           : EvalBatching::PerPerspective;
    c.context_budget = j.at("context_budget");
    c.seed = j.at("seed");
}

inline void to_json(json& j, const TraceRound& r) {
    j = json{{"round", r.round},
             {"candidates", r.candidates},
             {"selected_index", r.selected_index},
             {"planner_index", r.planner_index},
             {"executed_plan", r.executed},
             {"outcome", r.outcome},
             {"diagnosis", r.diagnosis},
             {"stop", json{{"decision", r.stop_decision}, {"warning", r.stop_warning}}},
             {"retried", r.retried},
             {"evidence_size", r.evidence_size}};
    if (r.matrix) j["score_matrix"] = *r.matrix;
    if (r.report) j["consistency"] = *r.report;
    if (!r.msa_means.empty()) j["msa_means"] = r.msa_means;
    if (r.constraint) j["constraint"] = *r.constraint;
    if (r.rolled_back_to) j["rolled_back_to"] = *r.rolled_back_to;
}
inline void from_json(const json& j, TraceRound& r) {
    r.round = j.at("round");
    r.candidates = j.at("candidates").get<CandidateSet>();
    r.selected_index = j.at("selected_index");
    r.planner_index = j.at("planner_index");
    r.executed = j.at("executed_plan").get<Plan>();
    r.outcome = j.at("outcome").get<ExecutionOutcome>();
    r.diagnosis = j.at("diagnosis").get<Diagnosis>();
    r.stop_decision = j.at("stop").at("decision");
    r.stop_warning = j.at("stop").at("warning");
    r.retried = j.value("retried", false);
    r.evidence_size = j.value("evidence_size", 0);
    if (j.contains("score_matrix")) r.matrix = j.at("score_matrix").get<ScoreMatrix>();
    else r.matrix.reset();
    if (j.contains("consistency")) r.report = j.at("consistency").get<ConsistencyReport>();
    else r.report.reset();
    r.msa_means = j.value("msa_means", std::vector<double>{});
    if (j.contains("constraint")) r.constraint = j.at("constraint").get<Constraint>();
    else r.constraint.reset();
    if (j.contains("rolled_back_to")) r.rolled_back_to = j.at("rolled_back_to").get<int>();
    else r.rolled_back_to.reset();
}

inline void to_json(json& j, const Trace& t) {
    j = json{{"schema", t.schema},
             {"task_id", t.task_id},
             {"dataset", t.dataset_tag},
             {"question", t.question},
             {"config", t.config},
             {"rounds", t.rounds},
             {"final_constraints", t.final_constraints},
             {"final_evidence", t.final_evidence},
             {"final_answer", t.final_answer},
             {"stop_reason", t.stop_reason},
             {"error", t.error},
             {"cost", t.cost}};
}
inline void from_json(const json& j, Trace& t) {
    t.schema = j.at("schema");
    if (t.schema != kTraceSchema)
        throw SchemaMismatch("unknown trace schema version: " + t.schema);
    t.task_id = j.at("task_id");
    t.dataset_tag = j.at("dataset");
    t.question = j.at("question");
    t.config = j.at("config").get<RunConfig>();
    t.rounds = j.at("rounds").get<std::vector<TraceRound>>();
    t.final_constraints = j.at("final_constraints").get<std::vector<Constraint>>();
    t.final_evidence = j.value("final_evidence", std::vector<Evidence>{});
    t.final_answer = j.at("final_answer");
    t.stop_reason = j.at("stop_reason").get<StopReason>();
    t.error = j.value("error", std::string());
    t.cost = j.at("cost").get<CostLedger>();
}

/// Comparison canon for replay determinism: latencies are wall-clock noise
/// and are zeroed; everything else must match byte for byte.
inline json canonical_trace_json(const Trace& trace) {
    json j = trace;
    std::function<void(json&)> scrub = [&](json& node) {
        if (node.is_object()) {
            for (auto& [key, value] : node.items()) {
                if (key == "latency_ms") value = 0;
                else scrub(value);
            }
        } else if (node.is_array()) {
            for (auto& value : node) scrub(value);
        }
    };
    scrub(j);
    return j;
}

}  // namespace epcaw
