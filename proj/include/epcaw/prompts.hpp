// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "epcaw/memory.hpp"

namespace epcaw::prompts {

inline constexpr int kRubricVersion = 1;

/// Feasibility rubric embedded in every evaluation prompt. The same text ships
/// in resources/feasibility_rubric_v1.txt; a test keeps the two in sync.
inline constexpr const char* kFeasibilityRubric =
    R"(Score 5 — Exceptional Feasibility
The plan is internally coherent, precise, and strongly justified.
- Tool selection and parameters are fully specified and sufficient in principle to support the stated sub-goal under the given context.
- Reasoning is complete, logically tight, and optimally grounded in the available information.
- No implicit assumptions or missing steps are required to interpret the plan.

Score 4 — Near-Perfect Feasibility
The plan is coherent and well-aligned with the stated sub-goal.
- Tool selection is correct; parameters are appropriate but may allow minor refinement.
- Reasoning is sound, though some details could be made more explicit.
- The plan is interpretable without major inference.

Score 3 — Strong Feasibility
The plan is plausible and directly addresses the sub-goal.
- Tool selection is mostly correct; some parameters or steps require mild inference.
- Reasoning is generally sound but partially underspecified.
- The plan remains interpretable, though not maximally precise.

Score 2 — Mostly Feasible
The plan is relevant but exhibits notable epistemic gaps.
- Tool selection is reasonable, but parameters are under-specified or ambiguous.
- Reasoning relies on implicit assumptions or missing details.
- Additional clarification would be required for confident interpretation.

Score 1 — Weak Feasibility
The plan shows limited coherence or weak alignment with the sub-goal.
- Tool selection or parameter specification is incomplete or mismatched.
- Reasoning is vague, fragmented, or poorly grounded in the given context.
- The intended effect of the plan is epistemically unclear.
)";

inline std::string format_plan(const Plan& plan) {
    std::ostringstream out;
    out << "Plan " << plan.candidate_index << ":\n"
        << "  GOAL: " << plan.goal << "\n"
        << "  TOOL: " << plan.tool_id << "\n"
        << "  ARGS: " << plan.argument_sketch << "\n";
    return out.str();
}

inline std::string format_plans(const std::vector<Plan>& plans) {
    std::ostringstream out;
    for (const auto& p : plans) out << format_plan(p);
    return out.str();
}

inline std::string candidate_generation(const std::string& context, const std::string& catalog,
                                        int k, const std::string& feedback = "") {
    std::ostringstream out;
    out << context << "\nAVAILABLE TOOLS:\n" << catalog;
    if (!feedback.empty()) out << "\nFEEDBACK ON THE PREVIOUS ATTEMPT:\n" << feedback << "\n";
    out << "\nPropose " << k << " candidate next-step plan" << (k == 1 ? "" : "s")
        << " for making progress on the query. Write each plan as three lines:\n"
        << "GOAL: <the sub-goal this step should achieve>\n"
        << "TOOL: <one tool id from the list above>\n"
        << "ARGS: <a sketch of the arguments for that tool>\n"
        << "Separate plans by a blank line. Plans must be structurally distinct.\n";
    return out.str();
}

inline std::string evaluation(const std::string& context, const std::vector<Plan>& plans) {
    std::ostringstream out;
    out << "You assess the feasibility of candidate plans using this rubric:\n\n"
        << kFeasibilityRubric << "\n" << context << "\nCANDIDATE PLANS:\n" << format_plans(plans)
        << "\nAssign an integer score from 1 to 5 to every plan. Answer with one line per plan,"
           " formatted exactly as:\nPlan <k>: <score>\n";
    return out.str();
}

/// Batched variant: one call per evaluating agent, scoring under its own role
/// and under each peer's role description.
inline std::string evaluation_per_agent(const std::string& context,
                                        const std::array<RoleDescription, 3>& roles,
                                        const std::vector<Plan>& plans) {
    std::ostringstream out;
    out << "You assess the feasibility of candidate plans using this rubric:\n\n"
        << kFeasibilityRubric << "\n" << context << "\nALL ROLES:\n";
    for (const auto& r : roles)
        out << "- " << to_string(r.role_id) << ": " << r.description << "\n";
    out << "\nCANDIDATE PLANS:\n" << format_plans(plans)
        << "\nScore every plan three times: once from your own role and once from each other"
           " role's point of view, keeping your own memory of the interaction. Answer with one"
           " section per role, each formatted exactly as:\nAS <Role>:\nPlan <k>: <score>\n";
    return out.str();
}

inline std::string tool_argumentation(const Plan& plan, const std::string& context) {
    std::ostringstream out;
    out << context << "\nSELECTED PLAN:\n"
        << "GOAL: " << plan.goal << "\nARGS SKETCH: " << plan.argument_sketch << "\n";
    if (plan.tool_id == kBaseGenerator) {
        out << "\nNo external tool is involved. Carry out the goal by reasoning over the"
              " context above and answer with the outcome text directly.\n";
    } else {
        out << "\nProduce the concrete argument string for one invocation of the tool "
            << plan.tool_id << ". Answer with the argument string only.\n";
    }
    return out.str();
}

inline std::string diagnosis(const Plan& plan, const std::string& outcome_text,
                             const std::string& context) {
    std::ostringstream out;
    out << context << "\nEXECUTED PLAN:\n"
        << "GOAL: " << plan.goal << "\nTOOL: " << plan.tool_id << "\n"
        << "\nEXECUTION OUTCOME:\n" << outcome_text << "\n"
        << "\nDoes the outcome meet the plan's goal? Answer starting with the single word"
           " SUPPORTED or UNSUPPORTED, followed by a short rationale. If SUPPORTED, add one"
           " final line of the form:\nEVIDENCE: <one verifiable fact extracted from the outcome>\n";
    return out.str();
}

inline std::string constraint_induction(const Plan& planner_plan, const Plan& ips_plan,
                                        const SystemMemory& system) {
    std::ostringstream out;
    out << "QUERY: " << system.query << "\n";
    if (!system.evidence.empty()) {
        out << "EVIDENCE:\n";
        for (const auto& e : system.evidence) out << "- " << e.text << "\n";
    }
    out << "\nThe Planner preferred this plan:\n" << format_plan(planner_plan)
        << "\nbut cross-agent evaluation favored this plan instead:\n" << format_plan(ips_plan)
        << "\nState, in one or two sentences, a general planning constraint that would steer"
           " future planning away from the miscalibration this discrepancy reveals. Answer with"
           " the constraint only.\n";
    return out.str();
}

inline std::string stop_check(const std::string& query, const std::vector<Evidence>& evidence) {
    std::ostringstream out;
    out << "QUERY: " << query << "\nACCUMULATED EVIDENCE:\n";
    if (evidence.empty()) out << "(none)\n";
    for (const auto& e : evidence) out << "- " << e.text << "\n";
    out << "\nIs this evidence sufficient to answer the query? Answer with the single word"
           " SUFFICIENT or INSUFFICIENT.\n";
    return out.str();
}

inline std::string answer_generation(const std::string& query,
                                     const std::vector<Evidence>& evidence,
                                     const std::vector<HistoryRecord>& history) {
    std::ostringstream out;
    out << "QUERY: " << query << "\nEVIDENCE:\n";
    if (evidence.empty()) out << "(none)\n";
    for (const auto& e : evidence) out << "- " << e.text << "\n";
    out << "HISTORY DIGEST:\n";
    if (history.empty()) out << "(no rounds executed)\n";
    for (const auto& r : history) {
        out << "[round " << r.round << "] " << collapse_whitespace(r.plan.goal) << " -> "
            << to_string(r.diagnosis.verdict) << "\n";
    }
    out << "\nAnswer the query as directly and concisely as the evidence allows. If the evidence"
           " is insufficient, give your best answer anyway.\n";
    return out.str();
}

inline std::string rollback_target(const std::string& executor_context, int current_round) {
    std::ostringstream out;
    out << executor_context << "\nThe current planning step (round " << current_round
        << ") was judged miscalibrated. Name the round to roll the system state back to, as a"
           " single integer between 0 and " << (current_round - 1)
        << " (0 restarts from scratch). Answer with the integer only.\n";
    return out.str();
}

inline std::string judging(const std::string& question, const std::string& predicted,
                           const std::string& gold) {
    std::ostringstream out;
    out << "QUESTION: " << question << "\nPREDICTED ANSWER: " << predicted
        << "\nGROUND-TRUTH ANSWER: " << gold
        << "\n\nDoes the predicted answer match the ground truth? Answer with the single word"
           " CORRECT or INCORRECT.\n";
    return out.str();
}

}  // namespace epcaw::prompts
