// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <array>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "epcaw/ips.hpp"

namespace epcaw::testing {

// ---------------------------------------------------------------------------
// Independent oracle for the consistency equations, evaluated in 50-digit
// floats. Mirrors the definitions, not the implementation.
// ---------------------------------------------------------------------------

using BigFloat = boost::multiprecision::cpp_bin_float_50;

struct OracleReport {
    std::array<std::vector<double>, kAgentCount> peer_means;
    std::array<std::vector<double>, kAgentCount> agent_scores;
    std::vector<double> plan_scores;
};

inline OracleReport oracle_consistency(const ScoreMatrix& matrix) {
    const size_t n = matrix.self_scores[0].size();
    OracleReport report;
    std::vector<BigFloat> totals(n, BigFloat(0));
    for (int i = 0; i < kAgentCount; ++i) {
        report.peer_means[i].resize(n);
        report.agent_scores[i].resize(n);
        for (size_t k = 0; k < n; ++k) {
            BigFloat sum = 0;
            int peers = 0;
            for (int j = 0; j < kAgentCount; ++j) {
                if (j == i) continue;
                sum += BigFloat(matrix.predictions[i][j][k]);
                ++peers;
            }
            const BigFloat mean = sum / peers;
            const BigFloat s = log(BigFloat(matrix.self_scores[i][k])) - log(mean);
            report.peer_means[i][k] = mean.convert_to<double>();
            report.agent_scores[i][k] = s.convert_to<double>();
            totals[k] += s;
        }
    }
    report.plan_scores.resize(n);
    for (size_t k = 0; k < n; ++k)
        report.plan_scores[k] = (totals[k] / kAgentCount).convert_to<double>();
    return report;
}

inline ScoreMatrix random_matrix(std::mt19937& rng, int k) {
    std::uniform_real_distribution<double> score(1.0, 5.0);
    ScoreMatrix m;
    for (int i = 0; i < kAgentCount; ++i) {
        m.self_scores[i].resize(k);
        for (int p = 0; p < k; ++p) m.self_scores[i][p] = score(rng);
        for (int j = 0; j < kAgentCount; ++j) {
            if (j == i) continue;
            m.predictions[i][j].resize(k);
            for (int p = 0; p < k; ++p) m.predictions[i][j][p] = score(rng);
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// Script-building helpers
// ---------------------------------------------------------------------------

inline std::string score_lines(const std::vector<int>& scores) {
    std::ostringstream out;
    for (size_t i = 0; i < scores.size(); ++i)
        out << "Plan " << (i + 1) << ": " << scores[i] << "\n";
    return out.str();
}

inline Perspective perspective(AgentRole evaluator, AgentRole target) {
    return {to_role_tag(evaluator), to_role_tag(target)};
}

/// Installs the nine evaluation entries for one round. Vectors are indexed
/// [Planner, Executor, Diagnoser]; predictions[i][j] with i != j.
struct NineVectors {
    std::array<std::vector<int>, 3> self;
    std::array<std::array<std::vector<int>, 3>, 3> cross;
};

inline void add_nine_evaluations(Script& script, int round, const NineVectors& v) {
    for (AgentRole i : kAgents) {
        for (AgentRole j : kAgents) {
            const Perspective p = perspective(i, j);
            const auto& scores =
                (i == j) ? v.self[agent_index(i)] : v.cross[agent_index(i)][agent_index(j)];
            script.add(request_key(to_role_tag(i), Purpose::Evaluation, p, round),
                       score_lines(scores));
        }
    }
}

inline void add_nine_evaluations_wildcard(Script& script, const NineVectors& v) {
    for (AgentRole i : kAgents) {
        for (AgentRole j : kAgents) {
            const Perspective p = perspective(i, j);
            const auto& scores =
                (i == j) ? v.self[agent_index(i)] : v.cross[agent_index(i)][agent_index(j)];
            script.add_wildcard(to_role_tag(i), Purpose::Evaluation, p,
                                {"", score_lines(scores)});
        }
    }
}

/// The worked two-plan matrix used across the suites.
inline NineVectors worked_example_vectors() {
    NineVectors v;
    v.self[agent_index(AgentRole::Planner)] = {4, 3};
    v.self[agent_index(AgentRole::Executor)] = {3, 3};
    v.self[agent_index(AgentRole::Diagnoser)] = {5, 2};
    auto& cross = v.cross;
    cross[agent_index(AgentRole::Planner)][agent_index(AgentRole::Executor)] = {3, 4};
    cross[agent_index(AgentRole::Planner)][agent_index(AgentRole::Diagnoser)] = {4, 2};
    cross[agent_index(AgentRole::Executor)][agent_index(AgentRole::Planner)] = {4, 3};
    cross[agent_index(AgentRole::Executor)][agent_index(AgentRole::Diagnoser)] = {5, 2};
    cross[agent_index(AgentRole::Diagnoser)][agent_index(AgentRole::Planner)] = {5, 3};
    cross[agent_index(AgentRole::Diagnoser)][agent_index(AgentRole::Executor)] = {4, 3};
    return v;
}

inline ScoreMatrix worked_example_matrix() {
    const NineVectors v = worked_example_vectors();
    ScoreMatrix m;
    for (int i = 0; i < kAgentCount; ++i) {
        m.self_scores[i].assign(v.self[i].begin(), v.self[i].end());
        for (int j = 0; j < kAgentCount; ++j) {
            if (i == j) continue;
            m.predictions[i][j].assign(v.cross[i][j].begin(), v.cross[i][j].end());
        }
    }
    return m;
}

inline std::string plan_block(const std::string& goal, const std::string& tool,
                              const std::string& args) {
    return "GOAL: " + goal + "\nTOOL: " + tool + "\nARGS: " + args + "\n";
}

}  // namespace epcaw::testing
