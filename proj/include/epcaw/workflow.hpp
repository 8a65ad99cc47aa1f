// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "epcaw/backend.hpp"
#include "epcaw/cesr.hpp"
#include "epcaw/ips.hpp"
#include "epcaw/memory.hpp"
#include "epcaw/prompts.hpp"
#include "epcaw/tools.hpp"

namespace epcaw {

enum class Mode { EpcAw, NoRepair, Retry, Rollback, Msa };
enum class EvalBatching { PerPerspective, PerAgent };
enum class StopReason { Sufficient, MaxRounds };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::EpcAw: return "epc-aw";
        case Mode::NoRepair: return "no-repair";
        case Mode::Retry: return "retry";
        case Mode::Rollback: return "rollback";
        case Mode::Msa: return "msa";
    }
    return "?";
}

inline const char* to_string(StopReason r) {
    return r == StopReason::Sufficient ? "Sufficient" : "MaxRounds";
}

struct RunConfig {
    Mode mode = Mode::EpcAw;
    int k = 9;
    int max_rounds = 10;
    double temperature_plan = 0.9;
    bool ips_enabled = true;
    bool cesr_enabled = true;
    EvalBatching eval_batching = EvalBatching::PerPerspective;
    int context_budget = 4096;
    int seed = 0;

    /// Applies the mode implications: the three single-plan baselines run with
    /// one candidate and no IPS/CESR; MSA selects over self scores only.
    RunConfig normalized() const {
        RunConfig c = *this;
        switch (c.mode) {
            case Mode::NoRepair:
            case Mode::Retry:
            case Mode::Rollback:
                c.ips_enabled = false;
                c.cesr_enabled = false;
                c.k = 1;
                break;
            case Mode::Msa:
                c.ips_enabled = false;
                c.cesr_enabled = false;
                break;
            case Mode::EpcAw:
                if (!c.ips_enabled) c.cesr_enabled = false;  // divergence needs IPS
                break;
        }
        return c;
    }

    IpsConfig ips() const {
        IpsConfig ic;
        ic.k = k;
        ic.temperature_plan = temperature_plan;
        ic.context_budget = context_budget;
        ic.per_agent_batching = eval_batching == EvalBatching::PerAgent;
        return ic;
    }
};

struct RoundState {
    int round = 0;  // number of the newest history record
    SystemMemory system;
    std::vector<HistoryRecord> history;
    std::vector<Constraint> planner_constraints;
    bool stop = false;
    std::string pending_feedback;  // diagnostic rationale carried into the next planning prompt
};

// ---------------------------------------------------------------------------
// Cost accounting
// ---------------------------------------------------------------------------

struct CompletionCost {
    int round = 1;
    RoleTag role = RoleTag::Planner;
    Purpose purpose = Purpose::CandidateGeneration;
    std::optional<Perspective> perspective;
    double temperature = 0.0;
    int prompt_tokens = 0;
    int output_tokens = 0;
    long latency_ms = 0;
};

struct ToolCost {
    int round = 1;
    std::string tool_id;
    long latency_ms = 0;
};

struct CostLedger {
    std::vector<CompletionCost> completions;
    std::vector<ToolCost> tools;

    long prompt_tokens() const {
        long t = 0;
        for (const auto& c : completions) t += c.prompt_tokens;
        return t;
    }
    long output_tokens() const {
        long t = 0;
        for (const auto& c : completions) t += c.output_tokens;
        return t;
    }
    int completion_count(std::optional<int> round = std::nullopt) const {
        int n = 0;
        for (const auto& c : completions)
            if (!round || c.round == *round) ++n;
        return n;
    }
    long output_tokens_in_round(int round) const {
        long t = 0;
        for (const auto& c : completions)
            if (c.round == round) t += c.output_tokens;
        return t;
    }
    long tool_ms() const {
        long t = 0;
        for (const auto& c : tools) t += c.latency_ms;
        return t;
    }
};

namespace detail {

/// Within-round ordering of completion purposes, matching the round loop.
inline int completion_phase(Purpose p) {
    switch (p) {
        case Purpose::CandidateGeneration: return 0;
        case Purpose::Evaluation: return 1;
        case Purpose::ToolArgumentation: return 2;
        case Purpose::Diagnosis: return 3;
        case Purpose::ConstraintInduction: return 4;
        case Purpose::StopCheck: return 5;
        case Purpose::AnswerGeneration: return 6;
        case Purpose::Judging: return 7;
    }
    return 8;
}

/// The evaluation fan-out completes in scheduler order; ledger entries are
/// re-sorted into the canonical chronology so traces replay byte-identically.
inline void sort_ledger(CostLedger& ledger) {
    std::stable_sort(ledger.completions.begin(), ledger.completions.end(),
                     [](const CompletionCost& a, const CompletionCost& b) {
                         if (a.round != b.round) return a.round < b.round;
                         const int pa = completion_phase(a.purpose);
                         const int pb = completion_phase(b.purpose);
                         if (pa != pb) return pa < pb;
                         const std::string sa = a.perspective ? to_string(*a.perspective) : "";
                         const std::string sb = b.perspective ? to_string(*b.perspective) : "";
                         return sa < sb;
                     });
}

}  // namespace detail

/// Decorator that mirrors every completion into a ledger. Thread-safe; the
/// IPS evaluation fan-out records through it concurrently.
class RecordingBackend : public Backend {
public:
    RecordingBackend(Backend& inner, CostLedger& ledger) : inner_(inner), ledger_(ledger) {}

    CompletionResponse complete(const CompletionRequest& request) override {
        auto resp = inner_.complete(request);
        std::lock_guard<std::mutex> lock(mutex_);
        ledger_.completions.push_back({request.round, request.role_tag, request.purpose_tag,
                                       request.perspective_tag, request.temperature,
                                       resp.prompt_tokens, resp.output_tokens,
                                       static_cast<long>(resp.latency.count())});
        return resp;
    }

    std::string name() const override { return inner_.name(); }

private:
    Backend& inner_;
    CostLedger& ledger_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceSchema = "epcaw-trace/1";

struct TraceRound {
    int round = 1;  // round number this execution carried (repeats after a rollback)
    CandidateSet candidates;
    std::optional<ScoreMatrix> matrix;
    std::optional<ConsistencyReport> report;
    std::vector<double> msa_means;  // MSA mode only
    int selected_index = 1;
    int planner_index = 1;
    Plan executed;
    ExecutionOutcome outcome;
    Diagnosis diagnosis;
    std::optional<Constraint> constraint;
    bool stop_decision = false;
    bool stop_warning = false;
    bool retried = false;
    std::optional<int> rolled_back_to;
    int evidence_size = 0;  // |evidence| at the end of the round
};

struct Trace {
    std::string schema = kTraceSchema;
    std::string task_id;
    std::string dataset_tag;
    std::string question;
    RunConfig config;
    std::vector<TraceRound> rounds;
    std::vector<Constraint> final_constraints;
    std::vector<Evidence> final_evidence;
    std::string final_answer;
    StopReason stop_reason = StopReason::MaxRounds;
    std::string error;  // set only on an HTTP-mode fatal backend failure
    CostLedger cost;
};

// ---------------------------------------------------------------------------
// Per-step operations
// ---------------------------------------------------------------------------

/// One ToolArgumentation completion turns the action sketch into concrete
/// arguments, then the tool runs. base_generator plans skip dispatch and use
/// the completion text as the outcome directly. An unregistered tool becomes
/// a failed outcome, never a thrown error.
inline ExecutionOutcome execute_plan(Backend& backend, const ToolRegistry& tools,
                                     const Plan& plan, const InformationState& executor_state,
                                     const SystemMemory& system, const RunConfig& config,
                                     int round) {
    CompletionRequest req;
    req.role_tag = RoleTag::Executor;
    req.purpose_tag = Purpose::ToolArgumentation;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = 1024;
    req.prompt = prompts::tool_argumentation(
        plan, render_context(executor_state, system, config.context_budget));
    const std::string completion = backend.complete(req).text;

    ExecutionOutcome outcome;
    if (plan.tool_id == kBaseGenerator) {
        outcome.text = trim(completion);
        outcome.concrete_arguments = outcome.text;
        return outcome;
    }
    outcome.concrete_arguments = trim(completion);
    try {
        ToolResult result = tools.invoke(plan.tool_id, outcome.concrete_arguments, round);
        outcome.text = result.raw_output;
        outcome.tool = std::move(result);
    } catch (const UnknownTool& e) {
        outcome.unknown_tool = true;
        outcome.text = e.what();
        ToolResult failed;
        failed.tool_id = plan.tool_id;
        failed.raw_output = e.what();
        failed.transport_ok = false;
        outcome.tool = std::move(failed);
    }
    return outcome;
}

/// One Diagnosis completion with a leading SUPPORTED/UNSUPPORTED token. A
/// malformed verdict earns one re-prompt, then the conservative Unsupported.
inline Diagnosis diagnose_outcome(Backend& backend, const Plan& plan,
                                  const ExecutionOutcome& outcome,
                                  const InformationState& diagnoser_state,
                                  const SystemMemory& system, const RunConfig& config,
                                  int round) {
    CompletionRequest req;
    req.role_tag = RoleTag::Diagnoser;
    req.purpose_tag = Purpose::Diagnosis;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = 512;
    req.prompt = prompts::diagnosis(
        plan, outcome.text, render_context(diagnoser_state, system, config.context_budget));

    std::string last_text;
    for (int attempt = 0; attempt < 2; ++attempt) {
        last_text = backend.complete(req).text;
        std::optional<Verdict> verdict;
        std::string rationale;
        std::optional<std::string> evidence;
        bool verdict_seen = false;
        for (const auto& raw : split_lines(last_text)) {
            const std::string line = trim(raw);
            if (line.empty()) continue;
            if (!verdict_seen) {
                if (starts_with(line, "UNSUPPORTED")) {
                    verdict = Verdict::Unsupported;
                    rationale = trim(line.substr(11));
                } else if (starts_with(line, "SUPPORTED")) {
                    verdict = Verdict::Supported;
                    rationale = trim(line.substr(9));
                }
                verdict_seen = true;
                continue;
            }
            if (starts_with(line, "EVIDENCE:")) {
                std::string e = trim(line.substr(9));
                if (!e.empty()) evidence = e;
            } else {
                rationale += (rationale.empty() ? "" : " ") + line;
            }
        }
        if (verdict) {
            Diagnosis d;
            d.verdict = *verdict;
            if (starts_with(rationale, ":")) rationale = trim(rationale.substr(1));
            d.rationale = rationale;
            if (d.verdict == Verdict::Supported) d.evidence_text = evidence;
            return d;
        }
    }
    Diagnosis d;
    d.verdict = Verdict::Unsupported;
    d.rationale = collapse_whitespace(last_text);
    d.fallback = true;
    return d;
}

struct StopDecision {
    bool stop = false;
    bool warning = false;  // malformed completion; conservatively continued
};

inline StopDecision check_stop(Backend& backend, const std::string& query,
                               const std::vector<Evidence>& evidence, int round) {
    CompletionRequest req;
    req.role_tag = RoleTag::Diagnoser;
    req.purpose_tag = Purpose::StopCheck;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = 16;
    req.prompt = prompts::stop_check(query, evidence);
    const std::string text = trim(backend.complete(req).text);
    if (starts_with(text, "INSUFFICIENT")) return {false, false};
    if (starts_with(text, "SUFFICIENT")) return {true, false};
    return {false, true};
}

inline std::string generate_answer(Backend& backend, const std::string& query,
                                   const std::vector<Evidence>& evidence,
                                   const std::vector<HistoryRecord>& history, int round) {
    CompletionRequest req;
    req.role_tag = RoleTag::Planner;
    req.purpose_tag = Purpose::AnswerGeneration;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = 1024;
    req.prompt = prompts::answer_generation(query, evidence, history);
    return backend.complete(req).text;
}

// ---------------------------------------------------------------------------
// Round loop
// ---------------------------------------------------------------------------

namespace detail {

struct Attempt {
    CandidateSet candidates;
    std::optional<ScoreMatrix> matrix;
    std::optional<ConsistencyReport> report;
    std::vector<double> msa_means;
    int selected_index = 1;
    int planner_index = 1;
    Plan executed;
    ExecutionOutcome outcome;
    Diagnosis diagnosis;
};

inline InformationState self_state(const RoundState& state, AgentRole role) {
    AgentMemory memory = project_agent_memory(state.history, role);
    if (role == AgentRole::Planner) {
        for (const auto& c : state.planner_constraints)
            memory = append_constraint(std::move(memory), c);
    }
    return {state.system.role(role), std::move(memory)};
}

/// Plans (under the mode's selection rule), executes, diagnoses. Shared by
/// every mode; IPS/MSA/self-select differ only in how `selected` is chosen.
inline Attempt plan_execute_diagnose(const RoundState& state, const RunConfig& config,
                                     Backend& backend, const ToolRegistry& tools, int round,
                                     const std::string& feedback) {
    Attempt attempt;
    const IpsConfig ips_config = config.ips();

    if (config.mode == Mode::EpcAw && config.ips_enabled) {
        IpsOutcome ips = run_ips(backend, state.history, state.system, state.planner_constraints,
                                 ips_config, round, feedback, tools.catalog());
        attempt.candidates = std::move(ips.candidates);
        attempt.matrix = std::move(ips.matrix);
        attempt.selected_index = ips.report.selected_index;
        attempt.planner_index = ips.report.planner_index;
        attempt.report = std::move(ips.report);
    } else if (config.mode == Mode::Msa) {
        attempt.candidates = generate_candidates(backend, state.system,
                                                 self_state(state, AgentRole::Planner), ips_config,
                                                 round, feedback, tools.catalog());
        ScoreMatrix matrix;
        for (AgentRole role : kAgents) {
            Perspective self{to_role_tag(role), to_role_tag(role)};
            auto scores = evaluate_perspective(backend, self_state(state, role), state.system,
                                               attempt.candidates, self, ips_config, round);
            for (int plan : scores.clamped_plans) matrix.clamp_flags.push_back({self, plan});
            matrix.self_scores[agent_index(role)] = std::move(scores.scores);
        }
        const size_t n = attempt.candidates.plans.size();
        attempt.msa_means.assign(n, 0.0);
        for (size_t k = 0; k < n; ++k) {
            for (int i = 0; i < kAgentCount; ++i)
                attempt.msa_means[k] += matrix.self_scores[i][k];
            attempt.msa_means[k] /= kAgentCount;
        }
        attempt.selected_index = msa_select(matrix.self_scores);
        attempt.planner_index = select_plan(matrix.self_scores[agent_index(AgentRole::Planner)]);
        attempt.matrix = std::move(matrix);
    } else {
        // Single-plan baselines, and EPC-AW with IPS ablated: the planner
        // self-selects over its own evaluation when more than one candidate
        // exists, otherwise the single candidate runs as-is.
        attempt.candidates = generate_candidates(backend, state.system,
                                                 self_state(state, AgentRole::Planner), ips_config,
                                                 round, feedback, tools.catalog());
        if (attempt.candidates.plans.size() > 1) {
            Perspective self{RoleTag::Planner, RoleTag::Planner};
            auto scores = evaluate_perspective(backend, self_state(state, AgentRole::Planner),
                                               state.system, attempt.candidates, self, ips_config,
                                               round);
            ScoreMatrix matrix;
            matrix.self_scores[agent_index(AgentRole::Planner)] = std::move(scores.scores);
            attempt.selected_index =
                select_plan(matrix.self_scores[agent_index(AgentRole::Planner)]);
            attempt.planner_index = attempt.selected_index;
            attempt.matrix = std::move(matrix);
        } else {
            attempt.selected_index = 1;
            attempt.planner_index = 1;
        }
    }

    attempt.executed = attempt.candidates.plans[static_cast<size_t>(attempt.selected_index) - 1];
    attempt.outcome = execute_plan(backend, tools, attempt.executed,
                                   self_state(state, AgentRole::Executor), state.system, config,
                                   round);
    if (attempt.outcome.unknown_tool) {
        attempt.diagnosis.verdict = Verdict::Unsupported;
        attempt.diagnosis.rationale = attempt.outcome.text;
    } else {
        attempt.diagnosis = diagnose_outcome(backend, attempt.executed, attempt.outcome,
                                             self_state(state, AgentRole::Diagnoser), state.system,
                                             config, round);
    }
    return attempt;
}

inline void append_record(RoundState& state, int round, const Attempt& attempt) {
    HistoryRecord record{round, attempt.executed, attempt.outcome, attempt.diagnosis};
    state.system = update_system_memory(state.system, record);
    state.history.push_back(std::move(record));
    state.round = static_cast<int>(state.history.size());
}

inline void record_tool_cost(CostLedger* ledger, int round, const ExecutionOutcome& outcome) {
    if (ledger && outcome.tool) {
        ledger->tools.push_back({round, outcome.tool->tool_id,
                                 static_cast<long>(outcome.tool->latency.count())});
    }
}

}  // namespace detail

/// Truncates the system state to the first target_round records. The evidence
/// set is rebuilt by replaying the retained records through
/// update_system_memory, so it always matches the truncated history. Planner
/// constraints induced after the target are discarded.
inline RoundState rollback_to(RoundState state, int target_round) {
    if (target_round > state.round) throw InvalidRollbackTarget(target_round, state.round);
    state.history.resize(static_cast<size_t>(std::max(0, target_round)));
    SystemMemory rebuilt;
    rebuilt.query = state.system.query;
    rebuilt.roles = state.system.roles;
    for (const auto& record : state.history) rebuilt = update_system_memory(rebuilt, record);
    state.system = std::move(rebuilt);
    std::erase_if(state.planner_constraints,
                  [&](const Constraint& c) { return c.round > target_round; });
    state.round = target_round;
    state.stop = false;
    return state;
}

namespace detail {

/// One Diagnoser completion names the round to revert to; malformed output
/// defaults to max(0, current-1), anything else clamps into [0, current-1].
inline int select_rollback_target(Backend& backend, const RoundState& state,
                                  const RunConfig& config, int current_round) {
    CompletionRequest req;
    req.role_tag = RoleTag::Diagnoser;
    req.purpose_tag = Purpose::Diagnosis;
    req.round = current_round;
    req.temperature = 0.0;
    req.max_output = 16;
    req.prompt = prompts::rollback_target(
        render_context(self_state(state, AgentRole::Executor), state.system,
                       config.context_budget),
        current_round);
    const std::string text = trim(backend.complete(req).text);
    try {
        size_t pos = 0;
        int target = std::stoi(text, &pos);
        if (pos == 0) return std::max(0, current_round - 1);
        return std::clamp(target, 0, current_round - 1);
    } catch (const std::exception&) {
        return std::max(0, current_round - 1);
    }
}

}  // namespace detail

/// Regenerates the current planning step once, with the diagnostic rationale
/// appended to the planner prompt, and appends the replacement record. Prior
/// history is untouched.
inline RoundState retry_step(RoundState state, const RunConfig& config, Backend& backend,
                             const ToolRegistry& tools, const Diagnosis& feedback, int round,
                             TraceRound* trace_round = nullptr, CostLedger* ledger = nullptr) {
    auto attempt = detail::plan_execute_diagnose(state, config, backend, tools, round,
                                                 feedback.rationale);
    detail::record_tool_cost(ledger, round, attempt.outcome);
    detail::append_record(state, round, attempt);
    if (trace_round) {
        trace_round->candidates = attempt.candidates;
        trace_round->matrix = attempt.matrix;
        trace_round->report = attempt.report;
        trace_round->selected_index = attempt.selected_index;
        trace_round->planner_index = attempt.planner_index;
        trace_round->executed = attempt.executed;
        trace_round->outcome = attempt.outcome;
        trace_round->diagnosis = attempt.diagnosis;
        trace_round->retried = true;
    }
    return state;
}

/// One orchestrated round: plan/select per mode, execute, diagnose, update
/// memories, apply the mode's repair mechanism, then the stop check. A round
/// never aborts the run; failures surface as Unsupported diagnoses.
inline RoundState run_round(RoundState state, const RunConfig& config, Backend& backend,
                            const ToolRegistry& tools, TraceRound* trace_round = nullptr,
                            CostLedger* ledger = nullptr) {
    const int round = state.round + 1;
    const std::string feedback = std::move(state.pending_feedback);
    state.pending_feedback.clear();

    auto attempt = detail::plan_execute_diagnose(state, config, backend, tools, round, feedback);
    detail::record_tool_cost(ledger, round, attempt.outcome);

    TraceRound local;
    TraceRound& tr = trace_round ? *trace_round : local;
    tr.round = round;
    tr.candidates = attempt.candidates;
    tr.matrix = attempt.matrix;
    tr.report = attempt.report;
    tr.msa_means = attempt.msa_means;
    tr.selected_index = attempt.selected_index;
    tr.planner_index = attempt.planner_index;
    tr.executed = attempt.executed;
    tr.outcome = attempt.outcome;
    tr.diagnosis = attempt.diagnosis;

    const bool miscalibrated = attempt.diagnosis.verdict == Verdict::Unsupported;

    if (config.mode == Mode::Retry && miscalibrated) {
        state = retry_step(std::move(state), config, backend, tools, attempt.diagnosis, round,
                           &tr, ledger);
    } else {
        detail::append_record(state, round, attempt);
    }

    if (config.mode == Mode::EpcAw && config.ips_enabled && config.cesr_enabled &&
        detect_divergence(attempt.planner_index, attempt.selected_index)) {
        DivergenceEvent event;
        event.round = round;
        event.planner_plan =
            attempt.candidates.plans[static_cast<size_t>(attempt.planner_index) - 1];
        event.ips_plan = attempt.executed;
        event.constraint = induce_constraint(backend, event.planner_plan, event.ips_plan,
                                             state.system, round);
        AgentMemory planner = detail::self_state(state, AgentRole::Planner).memory;
        planner = refine(std::move(planner), event);
        state.planner_constraints = planner.constraints;
        tr.constraint = event.constraint;
    }

    if (config.mode == Mode::Rollback && miscalibrated && state.round > 0) {
        const int target = detail::select_rollback_target(backend, state, config, round);
        state = rollback_to(std::move(state), target);
        state.pending_feedback = attempt.diagnosis.rationale;
        tr.rolled_back_to = target;
    }

    StopDecision decision = check_stop(backend, state.system.query, state.system.evidence, round);
    state.stop = decision.stop;
    tr.stop_decision = decision.stop;
    tr.stop_warning = decision.warning;
    tr.evidence_size = static_cast<int>(state.system.evidence.size());
    return state;
}

// ---------------------------------------------------------------------------
// Task loop
// ---------------------------------------------------------------------------

struct Task {
    std::string id;
    std::string question;
    std::string dataset_tag;
};

/// Algorithm loop: initialize memories, run rounds until the stop check fires
/// or the round budget is spent, then always generate an answer. The budget
/// counts executed rounds, so a rollback-heavy run still terminates.
inline Trace run_task(const RunConfig& raw_config, const Task& task, Backend& backend,
                      const ToolRegistry& tools) {
    const RunConfig config = raw_config.normalized();
    Trace trace;
    trace.task_id = task.id;
    trace.dataset_tag = task.dataset_tag;
    trace.question = task.question;
    trace.config = config;

    RecordingBackend recorder(backend, trace.cost);

    RoundState state;
    state.system.query = task.question;

    try {
        for (int executed = 0; executed < config.max_rounds && !state.stop; ++executed) {
            TraceRound tr;
            state = run_round(std::move(state), config, recorder, tools, &tr, &trace.cost);
            trace.rounds.push_back(std::move(tr));
        }
        trace.stop_reason = state.stop ? StopReason::Sufficient : StopReason::MaxRounds;
        const int answer_round = trace.rounds.empty() ? 1 : trace.rounds.back().round;
        trace.final_answer = generate_answer(recorder, state.system.query, state.system.evidence,
                                             state.history, answer_round);
        trace.final_constraints = state.planner_constraints;
        trace.final_evidence = state.system.evidence;
    } catch (const BackendUnavailable& e) {
        if (backend.name() != "http") throw;
        trace.error = e.what();
        trace.final_constraints = state.planner_constraints;
        trace.final_evidence = state.system.evidence;
    }
    detail::sort_ledger(trace.cost);
    return trace;
}

}  // namespace epcaw
