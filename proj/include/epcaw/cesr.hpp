// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "epcaw/backend.hpp"
#include "epcaw/memory.hpp"
#include "epcaw/prompts.hpp"

namespace epcaw {

struct DivergenceEvent {
    int round = 1;
    Plan planner_plan;
    Plan ips_plan;
    Constraint constraint;
};

inline bool detect_divergence(int planner_index, int selected_index) {
    return planner_index != selected_index;
}

inline constexpr int kConstraintSentenceCap = 2;

namespace detail {

inline std::string constraint_template(const Plan& planner_plan, const Plan& ips_plan) {
    return "The plan preferred under the planner's own information (candidate " +
           std::to_string(planner_plan.candidate_index) + ", tool " + planner_plan.tool_id +
           ", goal: " + collapse_whitespace(planner_plan.goal) +
           ") diverged from the cross-agent consistent choice (candidate " +
           std::to_string(ips_plan.candidate_index) + ", tool " + ips_plan.tool_id +
           "). Re-examine plans of the former kind before committing to them.";
}

}  // namespace detail

/// One ConstraintInduction completion under the Diagnoser role, producing a
/// directive of at most two sentences. Empty or overlong output earns one
/// re-prompt; a still-empty reply falls back to a fixed template naming the
/// two plans' mismatch, a still-overlong reply is truncated with a flag.
inline Constraint induce_constraint(Backend& backend, const Plan& planner_plan,
                                    const Plan& ips_plan, const SystemMemory& system, int round,
                                    int max_output = 256) {
    CompletionRequest req;
    req.role_tag = RoleTag::Diagnoser;
    req.purpose_tag = Purpose::ConstraintInduction;
    req.round = round;
    req.temperature = 0.0;
    req.max_output = max_output;
    req.prompt = prompts::constraint_induction(planner_plan, ips_plan, system);

    Constraint constraint;
    constraint.round = round;
    constraint.planner_choice_index = planner_plan.candidate_index;
    constraint.ips_choice_index = ips_plan.candidate_index;

    std::string text;
    for (int attempt = 0; attempt < 2; ++attempt) {
        text = trim(backend.complete(req).text);
        auto sentences = split_sentences(text);
        if (!text.empty() && static_cast<int>(sentences.size()) <= kConstraintSentenceCap) {
            constraint.text = text;
            return constraint;
        }
    }
    if (text.empty()) {
        constraint.text = detail::constraint_template(planner_plan, ips_plan);
        constraint.fallback = true;
    } else {
        auto sentences = split_sentences(text);
        constraint.text = sentences[0];
        for (int i = 1; i < kConstraintSentenceCap && i < static_cast<int>(sentences.size()); ++i)
            constraint.text += " " + sentences[i];
        constraint.truncated = true;
    }
    return constraint;
}

/// Accumulates the divergence constraint into planner memory. The constraint
/// shapes only future rounds' prompts; nothing in the current round changes.
inline AgentMemory refine(AgentMemory planner_memory, const DivergenceEvent& event) {
    return append_constraint(std::move(planner_memory), event.constraint);
}

}  // namespace epcaw
