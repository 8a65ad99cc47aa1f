// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "epcaw/errors.hpp"
#include "epcaw/text.hpp"
#include "epcaw/tools.hpp"

namespace epcaw {

enum class AgentRole { Planner, Executor, Diagnoser };

inline constexpr std::array<AgentRole, 3> kAgents = {AgentRole::Planner, AgentRole::Executor,
                                                     AgentRole::Diagnoser};

inline const char* to_string(AgentRole r) {
    switch (r) {
        case AgentRole::Planner: return "Planner";
        case AgentRole::Executor: return "Executor";
        case AgentRole::Diagnoser: return "Diagnoser";
    }
    return "?";
}

inline RoleTag to_role_tag(AgentRole r) {
    switch (r) {
        case AgentRole::Planner: return RoleTag::Planner;
        case AgentRole::Executor: return RoleTag::Executor;
        case AgentRole::Diagnoser: return RoleTag::Diagnoser;
    }
    return RoleTag::Planner;
}

enum class Verdict { Supported, Unsupported };

inline const char* to_string(Verdict v) {
    return v == Verdict::Supported ? "Supported" : "Unsupported";
}

/// Diagnoser judgment of one execution. evidence_text is present only when
/// the verdict is Supported and an evidence line could be extracted.
struct Diagnosis {
    Verdict verdict = Verdict::Unsupported;
    std::string rationale;
    std::optional<std::string> evidence_text;
    bool fallback = false;  // set when a malformed completion forced the conservative verdict
};

struct Plan {
    std::string goal;
    std::string tool_id;
    std::string argument_sketch;
    int candidate_index = 1;

    friend bool operator==(const Plan&, const Plan&) = default;
};

struct ExecutionOutcome {
    std::string text;
    std::optional<ToolResult> tool;
    std::string concrete_arguments;
    bool unknown_tool = false;
};

struct HistoryRecord {
    int round = 1;
    Plan plan;
    ExecutionOutcome outcome;
    Diagnosis diagnosis;
};

struct Evidence {
    std::string text;  // whitespace-normalized
    int source_round = 1;
};

struct RoleDescription {
    AgentRole role_id = AgentRole::Planner;
    std::string description;
};

inline std::array<RoleDescription, 3> default_role_descriptions() {
    return {{
        {AgentRole::Planner,
         "proposes the next goal and the tool action intended to gather evidence for it"},
        {AgentRole::Executor,
         "turns the chosen plan into a concrete tool invocation and reports the raw outcome"},
        {AgentRole::Diagnoser,
         "judges whether the execution outcome actually satisfies the plan and certifies evidence"},
    }};
}

/// Shared memory: the query, the accumulated evidence set, and the three role
/// descriptions. Query and roles never change within a run.
struct SystemMemory {
    std::string query;
    std::vector<Evidence> evidence;
    std::array<RoleDescription, 3> roles = default_role_descriptions();

    const RoleDescription& role(AgentRole r) const {
        for (const auto& d : roles)
            if (d.role_id == r) return d;
        return roles[0];
    }

    bool has_evidence(const std::string& text) const {
        const std::string key = normalize_key(text);
        for (const auto& e : evidence)
            if (normalize_key(e.text) == key) return true;
        return false;
    }
};

/// Lightweight epistemic directive induced on a planner/IPS divergence.
struct Constraint {
    std::string text;
    int round = 1;
    int planner_choice_index = 1;
    int ips_choice_index = 2;
    bool truncated = false;  // overlong output was cut to two sentences
    bool fallback = false;   // generation failed twice; text came from the template
};

/// Role-filtered view of the history. Only the Planner carries constraints.
struct AgentMemory {
    AgentRole role_id = AgentRole::Planner;
    std::vector<HistoryRecord> records;
    std::vector<Constraint> constraints;
};

/// A role description paired with a memory. Self states pair an agent with its
/// own memory; approximated states pair a peer's role description with the
/// evaluating agent's memory.
struct InformationState {
    RoleDescription role;
    AgentMemory memory;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Set-augmentation update of the evidence set: a Supported record with an
/// extractable evidence line adds at most one item, deduplicated by
/// case-folded whitespace-collapsed text. Everything else is unchanged.
inline SystemMemory update_system_memory(SystemMemory memory, const HistoryRecord& record) {
    if (record.diagnosis.verdict == Verdict::Supported && record.diagnosis.evidence_text) {
        const std::string normalized = collapse_whitespace(*record.diagnosis.evidence_text);
        if (!normalized.empty() && !memory.has_evidence(normalized)) {
            memory.evidence.push_back({normalized, record.round});
        }
    }
    return memory;
}

/// Planner keeps the Unsupported records, Diagnoser the Supported ones, the
/// Executor the full history. Constraints start empty; the orchestrator
/// re-attaches the planner's accumulated constraints.
inline AgentMemory project_agent_memory(const std::vector<HistoryRecord>& history,
                                        AgentRole role) {
    AgentMemory memory;
    memory.role_id = role;
    for (const auto& record : history) {
        const bool failed = record.diagnosis.verdict == Verdict::Unsupported;
        if (role == AgentRole::Executor || (role == AgentRole::Planner && failed) ||
            (role == AgentRole::Diagnoser && !failed)) {
            memory.records.push_back(record);
        }
    }
    return memory;
}

inline AgentMemory append_constraint(AgentMemory memory, Constraint constraint) {
    if (memory.role_id != AgentRole::Planner) throw NotPlannerMemory();
    memory.constraints.push_back(std::move(constraint));
    return memory;
}

namespace detail {

inline std::string record_line(const HistoryRecord& r) {
    std::ostringstream out;
    out << "[round " << r.round << "] goal: " << collapse_whitespace(r.plan.goal)
        << " | tool: " << r.plan.tool_id << " | args: "
        << collapse_whitespace(r.plan.argument_sketch)
        << " | outcome: " << collapse_whitespace(r.outcome.text)
        << " | verdict: " << to_string(r.diagnosis.verdict);
    if (!r.diagnosis.rationale.empty())
        out << " | note: " << collapse_whitespace(r.diagnosis.rationale);
    return out.str();
}

}  // namespace detail

/// Deterministic prompt context: query, evidence, role description, history
/// records newest-last, constraints last. Under budget pressure the oldest
/// records go first; evidence (oldest first) and then constraints are dropped
/// only once no records remain. Token counts use count_tokens.
inline std::string render_context(const InformationState& state, const SystemMemory& system,
                                  int budget) {
    const std::string query_line = "QUERY: " + collapse_whitespace(system.query);
    const std::string role_line = "ROLE: " + std::string(to_string(state.role.role_id)) + ": " +
                                  collapse_whitespace(state.role.description);
    int used = count_tokens(query_line) + count_tokens(role_line);
    if (used > budget) throw ContextOverflow(used, budget);

    const std::string evidence_header = "EVIDENCE:";
    const std::string history_header = "HISTORY:";
    const std::string constraints_header = "CONSTRAINTS:";

    std::vector<std::string> constraint_lines;
    for (const auto& c : state.memory.constraints)
        constraint_lines.push_back("- (round " + std::to_string(c.round) + ") " +
                                   collapse_whitespace(c.text));
    std::vector<std::string> evidence_lines;
    for (const auto& e : system.evidence) evidence_lines.push_back("- " + e.text);
    std::vector<std::string> record_lines;
    for (const auto& r : state.memory.records) record_lines.push_back(detail::record_line(r));

    auto section_cost = [](const std::string& header, const std::vector<std::string>& lines,
                           size_t from) {
        if (from >= lines.size()) return 0;
        int total = count_tokens(header);
        for (size_t i = from; i < lines.size(); ++i) total += count_tokens(lines[i]);
        return total;
    };
    // Keeps the newest suffix of `lines` that fits in `room`, including the
    // section header when anything is kept. Returns the first kept index.
    auto fit_suffix = [&](const std::string& header, const std::vector<std::string>& lines,
                          int room) {
        size_t from = lines.size();
        if (lines.empty()) return from;
        int section = count_tokens(header);
        int subtotal = 0;
        for (size_t i = lines.size(); i > 0; --i) {
            int cost = count_tokens(lines[i - 1]);
            if (section + subtotal + cost > room) break;
            subtotal += cost;
            from = i - 1;
        }
        return from;
    };

    size_t constraints_from, evidence_from, records_from;
    const int full_evidence = section_cost(evidence_header, evidence_lines, 0);
    const int full_constraints = section_cost(constraints_header, constraint_lines, 0);
    if (used + full_evidence + full_constraints <= budget) {
        // Everything but history fits; history records drop oldest-first.
        constraints_from = 0;
        evidence_from = 0;
        used += full_evidence + full_constraints;
        records_from = fit_suffix(history_header, record_lines, budget - used);
    } else {
        // Records are gone entirely before evidence or constraints shrink;
        // constraints outlive evidence.
        records_from = record_lines.size();
        constraints_from = fit_suffix(constraints_header, constraint_lines, budget - used);
        used += section_cost(constraints_header, constraint_lines, constraints_from);
        evidence_from = fit_suffix(evidence_header, evidence_lines, budget - used);
    }

    std::ostringstream out;
    out << query_line << "\n";
    if (evidence_from < evidence_lines.size()) {
        out << evidence_header << "\n";
        for (size_t i = evidence_from; i < evidence_lines.size(); ++i)
            out << evidence_lines[i] << "\n";
    }
    out << role_line << "\n";
    if (records_from < record_lines.size()) {
        out << history_header << "\n";
        for (size_t i = records_from; i < record_lines.size(); ++i)
            out << record_lines[i] << "\n";
    }
    if (constraints_from < constraint_lines.size()) {
        out << constraints_header << "\n";
        for (size_t i = constraints_from; i < constraint_lines.size(); ++i)
            out << constraint_lines[i] << "\n";
    }
    return out.str();
}

}  // namespace epcaw
