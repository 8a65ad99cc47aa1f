// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "epcaw/backend.hpp"
#include "epcaw/memory.hpp"
#include "epcaw/prompts.hpp"

namespace epcaw {

struct CandidateSet {
    std::vector<Plan> plans;
    int requested_k = 1;
};

inline constexpr int kAgentCount = 3;

inline int agent_index(AgentRole r) { return static_cast<int>(r); }

struct ClampFlag {
    Perspective perspective;
    int plan_index;  // 1-based
};

/// Nine perspective vectors for the fixed three agents: self_scores[i] is
/// e_i, predictions[i][j] is the prediction vector of agent i for peer j.
struct ScoreMatrix {
    std::array<std::vector<double>, kAgentCount> self_scores;
    std::array<std::array<std::vector<double>, kAgentCount>, kAgentCount> predictions;
    std::vector<ClampFlag> clamp_flags;
};

struct ConsistencyReport {
    std::array<std::vector<double>, kAgentCount> peer_means;   // per agent, per plan
    std::array<std::vector<double>, kAgentCount> agent_scores; // s_i per plan
    std::vector<double> plan_scores;                           // C_IPS per plan
    int selected_index = 1;  // 1-based argmax of plan_scores
    int planner_index = 1;   // 1-based argmax of the Planner's self scores
    bool tie_broken = false;
};

inline constexpr double kTieTolerance = 1e-12;

/// Argmax with lowest-index tie-break. tie_broken reports whether at least
/// two entries attain the maximum within the absolute tolerance.
inline int select_plan(const std::vector<double>& plan_scores, bool* tie_broken = nullptr) {
    double best = plan_scores.front();
    for (double v : plan_scores) best = std::max(best, v);
    int selected = 0;
    int at_max = 0;
    for (size_t k = 0; k < plan_scores.size(); ++k) {
        if (std::abs(plan_scores[k] - best) <= kTieTolerance) {
            ++at_max;
            if (selected == 0) selected = static_cast<int>(k) + 1;
        }
    }
    if (tie_broken) *tie_broken = at_max >= 2;
    return selected;
}

/// The three consistency equations, natural log, |A| = 3:
///   peer mean   eb_{-i}(k) = (1/2) * sum_{j != i} p_{i->j}(k)
///   agent score s_i(k)     = ln e_i(k) - ln eb_{-i}(k)
///   plan score  C(k)       = (1/3) * sum_i s_i(k)
/// All scores must be strictly positive; the parse-time clamp floor of 1
/// guarantees that for backend-sourced matrices.
inline ConsistencyReport compute_consistency(const ScoreMatrix& matrix) {
    const size_t n = matrix.self_scores[0].size();
    ConsistencyReport report;
    report.plan_scores.assign(n, 0.0);
    for (int i = 0; i < kAgentCount; ++i) {
        report.peer_means[i].assign(n, 0.0);
        report.agent_scores[i].assign(n, 0.0);
        for (size_t k = 0; k < n; ++k) {
            double sum = 0.0;
            for (int j = 0; j < kAgentCount; ++j) {
                if (j == i) continue;
                sum += matrix.predictions[i][j][k];
            }
            const double peer_mean = sum / (kAgentCount - 1);
            const double s = std::log(matrix.self_scores[i][k]) - std::log(peer_mean);
            report.peer_means[i][k] = peer_mean;
            report.agent_scores[i][k] = s;
            report.plan_scores[k] += s / kAgentCount;
        }
    }
    report.selected_index = select_plan(report.plan_scores, &report.tie_broken);
    report.planner_index = select_plan(matrix.self_scores[agent_index(AgentRole::Planner)]);
    return report;
}

// ---------------------------------------------------------------------------
// Candidate generation
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Plan> parse_plan_blocks(const std::string& text) {
    std::vector<Plan> plans;
    Plan current;
    bool open = false;
    auto flush = [&] {
        if (open && !trim(current.goal).empty() && !trim(current.tool_id).empty()) {
            current.goal = trim(current.goal);
            current.tool_id = trim(current.tool_id);
            current.argument_sketch = trim(current.argument_sketch);
            plans.push_back(current);
        }
        current = Plan{};
        open = false;
    };
    for (const auto& raw : split_lines(text)) {
        const std::string line = trim(raw);
        if (starts_with(line, "GOAL:")) {
            flush();
            current.goal = line.substr(5);
            open = true;
        } else if (open && starts_with(line, "TOOL:")) {
            current.tool_id = line.substr(5);
        } else if (open && starts_with(line, "ARGS:")) {
            current.argument_sketch = line.substr(5);
        }
    }
    flush();
    return plans;
}

inline std::vector<Plan> dedup_and_index(std::vector<Plan> plans, int k) {
    std::vector<Plan> out;
    for (auto& p : plans) {
        bool dup = false;
        for (const auto& q : out) {
            if (q.goal == p.goal && q.tool_id == p.tool_id &&
                q.argument_sketch == p.argument_sketch) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(std::move(p));
        if (static_cast<int>(out.size()) == k) break;
    }
    for (size_t i = 0; i < out.size(); ++i) out[i].candidate_index = static_cast<int>(i) + 1;
    return out;
}

}  // namespace detail

struct IpsConfig {
    int k = 9;
    double temperature_plan = 0.9;
    int context_budget = 4096;
    int max_output_generation = 2048;
    int max_output_evaluation = 512;
    bool per_agent_batching = false;
};

/// One CandidateGeneration completion at the plan temperature; blocks are
/// parsed, exact duplicates collapse to the first occurrence, indices are
/// reassigned 1..n, and at most k plans survive. One re-prompt on a response
/// with no parseable block.
inline CandidateSet generate_candidates(Backend& backend, const SystemMemory& system,
                                        const InformationState& planner_state,
                                        const IpsConfig& config, int round,
                                        const std::string& feedback = "",
                                        const std::string& tool_catalog = "") {
    CompletionRequest req;
    req.role_tag = RoleTag::Planner;
    req.purpose_tag = Purpose::CandidateGeneration;
    req.round = round;
    req.temperature = config.temperature_plan;
    req.max_output = config.max_output_generation;
    req.prompt = prompts::candidate_generation(
        render_context(planner_state, system, config.context_budget), tool_catalog, config.k,
        feedback);

    CandidateSet set;
    set.requested_k = config.k;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = backend.complete(req);
        set.plans = detail::dedup_and_index(detail::parse_plan_blocks(resp.text), config.k);
        if (!set.plans.empty()) return set;
    }
    throw CandidateParseFailure("no parseable GOAL:/TOOL:/ARGS: block after re-prompt (round " +
                                std::to_string(round) + ")");
}

/// One Evaluation completion for a single perspective. The information state
/// is the caller's: (U_i, M_i) for self, (U_j, M_i) for a cross perspective.
inline ParsedScores evaluate_perspective(Backend& backend, const InformationState& state,
                                         const SystemMemory& system, const CandidateSet& candidates,
                                         Perspective perspective, const IpsConfig& config,
                                         int round) {
    CompletionRequest req;
    req.role_tag = perspective.evaluator;
    req.purpose_tag = Purpose::Evaluation;
    req.perspective_tag = perspective;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = config.max_output_evaluation;
    req.prompt = prompts::evaluation(render_context(state, system, config.context_budget),
                                     candidates.plans);
    const int k = static_cast<int>(candidates.plans.size());
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto resp = backend.complete(req);
        try {
            return parse_score(resp.text, k);
        } catch (const ScoreParseFailure&) {
            if (attempt == 1) throw;
        }
    }
    throw ScoreParseFailure("unreachable");
}

namespace detail {

/// Splits a per-agent batched response into "AS <Role>:" sections and parses
/// each section's score lines.
inline std::array<ParsedScores, kAgentCount> parse_per_agent_response(const std::string& text,
                                                                      int k) {
    std::array<std::string, kAgentCount> sections;
    int current = -1;
    for (const auto& raw : split_lines(text)) {
        const std::string line = trim(raw);
        bool header = false;
        for (AgentRole r : kAgents) {
            if (starts_with(line, std::string("AS ") + to_string(r))) {
                current = agent_index(r);
                header = true;
                break;
            }
        }
        if (!header && current >= 0) sections[current] += line + "\n";
    }
    std::array<ParsedScores, kAgentCount> out;
    for (int j = 0; j < kAgentCount; ++j) {
        if (sections[j].empty())
            throw ScoreParseFailure(std::string("missing 'AS ") + to_string(kAgents[j]) +
                                    ":' section in batched evaluation");
        out[j] = parse_score(sections[j], k);
    }
    return out;
}

}  // namespace detail

struct IpsOutcome {
    CandidateSet candidates;
    ScoreMatrix matrix;
    ConsistencyReport report;
};

/// Full IPS round: K candidates, then per config either nine perspective
/// completions (3 self + 6 cross, issued concurrently) or three per-agent
/// batched completions. The planner's self vector doubles as the CESR
/// preference source; no extra call is made for it.
inline IpsOutcome run_ips(Backend& backend, const std::vector<HistoryRecord>& history,
                          const SystemMemory& system,
                          const std::vector<Constraint>& planner_constraints,
                          const IpsConfig& config, int round,
                          const std::string& feedback = "",
                          const std::string& tool_catalog = "") {
    std::array<AgentMemory, kAgentCount> memories;
    for (AgentRole r : kAgents) memories[agent_index(r)] = project_agent_memory(history, r);
    for (const auto& c : planner_constraints)
        memories[agent_index(AgentRole::Planner)] =
            append_constraint(std::move(memories[agent_index(AgentRole::Planner)]), c);

    auto state_for = [&](AgentRole evaluator, AgentRole target) {
        return InformationState{system.role(target), memories[agent_index(evaluator)]};
    };

    IpsOutcome out;
    out.candidates = generate_candidates(backend, system,
                                         state_for(AgentRole::Planner, AgentRole::Planner),
                                         config, round, feedback, tool_catalog);
    const size_t n = out.candidates.plans.size();

    if (config.per_agent_batching) {
        for (AgentRole evaluator : kAgents) {
            CompletionRequest req;
            req.role_tag = to_role_tag(evaluator);
            req.purpose_tag = Purpose::Evaluation;
            req.round = round;
            req.temperature = 0.0;
            req.max_output = config.max_output_evaluation * kAgentCount;
            req.prompt = prompts::evaluation_per_agent(
                render_context(state_for(evaluator, evaluator), system, config.context_budget),
                system.roles, out.candidates.plans);
            std::array<ParsedScores, kAgentCount> parsed;
            for (int attempt = 0; attempt < 2; ++attempt) {
                auto resp = backend.complete(req);
                try {
                    parsed = detail::parse_per_agent_response(resp.text, static_cast<int>(n));
                    break;
                } catch (const ScoreParseFailure&) {
                    if (attempt == 1) throw;
                }
            }
            const int i = agent_index(evaluator);
            for (AgentRole target : kAgents) {
                const int j = agent_index(target);
                Perspective perspective{to_role_tag(evaluator), to_role_tag(target)};
                for (int plan : parsed[j].clamped_plans)
                    out.matrix.clamp_flags.push_back({perspective, plan});
                if (i == j) out.matrix.self_scores[i] = parsed[j].scores;
                else out.matrix.predictions[i][j] = parsed[j].scores;
            }
        }
    } else {
        struct Slot {
            Perspective perspective;
            AgentRole evaluator;
            AgentRole target;
        };
        std::vector<Slot> slots;
        for (AgentRole i : kAgents)
            for (AgentRole j : kAgents)
                slots.push_back({{to_role_tag(i), to_role_tag(j)}, i, j});

        // The nine calls are independent reads of immutable snapshots;
        // aggregation is keyed by slot, not by completion order.
        std::vector<std::future<ParsedScores>> futures;
        futures.reserve(slots.size());
        for (const auto& slot : slots) {
            futures.push_back(std::async(std::launch::async, [&, slot] {
                return evaluate_perspective(backend, state_for(slot.evaluator, slot.target),
                                            system, out.candidates, slot.perspective, config,
                                            round);
            }));
        }
        for (size_t s = 0; s < slots.size(); ++s) {
            auto scores = futures[s].get();
            const int i = agent_index(slots[s].evaluator);
            const int j = agent_index(slots[s].target);
            for (int plan : scores.clamped_plans)
                out.matrix.clamp_flags.push_back({slots[s].perspective, plan});
            if (i == j) out.matrix.self_scores[i] = std::move(scores.scores);
            else out.matrix.predictions[i][j] = std::move(scores.scores);
        }
    }

    out.report = compute_consistency(out.matrix);
    return out;
}

/// Mean-score aggregation: argmax over the per-plan mean of the three self
/// scores, lowest-index tie-break (mirrors IPS for comparability).
inline int msa_select(const std::array<std::vector<double>, kAgentCount>& self_scores,
                      bool* tie_broken = nullptr) {
    const size_t n = self_scores[0].size();
    std::vector<double> means(n, 0.0);
    for (size_t k = 0; k < n; ++k) {
        for (int i = 0; i < kAgentCount; ++i) means[k] += self_scores[i][k];
        means[k] /= kAgentCount;
    }
    return select_plan(means, tie_broken);
}

}  // namespace epcaw
