// SPDX-License-Identifier: Apache-2.0
#include "epcaw/ips.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include "test_support.hpp"

namespace epcaw {
namespace {

using testing::add_nine_evaluations;
using testing::oracle_consistency;
using testing::plan_block;
using testing::random_matrix;
using testing::score_lines;
using testing::worked_example_matrix;
using testing::worked_example_vectors;

SystemMemory make_system(const std::string& query = "test query") {
    SystemMemory s;
    s.query = query;
    return s;
}

InformationState planner_state(const SystemMemory& system) {
    return {system.role(AgentRole::Planner), AgentMemory{AgentRole::Planner, {}, {}}};
}

Script one_generation(const std::string& text, int round = 1) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, round),
               text);
    return script;
}

TEST(GenerateCandidates, ParsesNineBlocks) {
    std::string text;
    for (int i = 1; i <= 9; ++i)
        text += plan_block("goal " + std::to_string(i), kBaseGenerator,
                           "arg " + std::to_string(i)) + "\n";
    ScriptedBackend backend(one_generation(text));
    IpsConfig config;
    config.k = 9;
    auto system = make_system();
    auto set = generate_candidates(backend, system, planner_state(system), config, 1);
    ASSERT_EQ(set.plans.size(), 9u);
    for (int i = 0; i < 9; ++i) {
        EXPECT_EQ(set.plans[i].candidate_index, i + 1);
        EXPECT_EQ(set.plans[i].goal, "goal " + std::to_string(i + 1));
    }
}

TEST(GenerateCandidates, CollapsesExactDuplicates) {
    std::string text;
    for (int i = 1; i <= 8; ++i)
        text += plan_block("goal " + std::to_string(i), kBaseGenerator, "a") + "\n";
    text += plan_block("goal 3", kBaseGenerator, "a");  // byte-identical to block 3
    ScriptedBackend backend(one_generation(text));
    IpsConfig config;
    config.k = 9;
    auto system = make_system();
    auto set = generate_candidates(backend, system, planner_state(system), config, 1);
    ASSERT_EQ(set.plans.size(), 8u);
    for (int i = 0; i < 8; ++i) EXPECT_EQ(set.plans[i].candidate_index, i + 1);
}

TEST(GenerateCandidates, FailsAfterReprompt) {
    Script script;
    const auto key =
        request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, 1);
    script.add(key, "nothing useful");
    script.add(key, "still nothing");
    ScriptedBackend backend(std::move(script));
    IpsConfig config;
    auto system = make_system();
    EXPECT_THROW(generate_candidates(backend, system, planner_state(system), config, 1),
                 CandidateParseFailure);
}

TEST(GenerateCandidates, TruncatesBeyondRequestedK) {
    std::string text = plan_block("first", kBaseGenerator, "a") + "\n" +
                       plan_block("second", kWikipediaSearch, "b");
    ScriptedBackend backend(one_generation(text));
    IpsConfig config;
    config.k = 1;
    auto system = make_system();
    auto set = generate_candidates(backend, system, planner_state(system), config, 1);
    ASSERT_EQ(set.plans.size(), 1u);
    EXPECT_EQ(set.plans[0].goal, "first");
}

TEST(EvaluatePerspective, ScriptedSelfAndCross) {
    Script script;
    script.add(request_key(RoleTag::Diagnoser, Purpose::Evaluation,
                           Perspective{RoleTag::Diagnoser, RoleTag::Diagnoser}, 1),
               "Plan 1: 4\nPlan 2: 2");
    script.add(request_key(RoleTag::Planner, Purpose::Evaluation,
                           Perspective{RoleTag::Planner, RoleTag::Executor}, 1),
               "Plan 1: 3\nPlan 2: 4");
    ScriptedBackend backend(std::move(script));
    auto system = make_system();
    CandidateSet candidates{{{"g1", kBaseGenerator, "a", 1}, {"g2", kBaseGenerator, "b", 2}}, 2};
    IpsConfig config;

    InformationState diag{system.role(AgentRole::Diagnoser), AgentMemory{AgentRole::Diagnoser}};
    auto self = evaluate_perspective(backend, diag, system, candidates,
                                     {RoleTag::Diagnoser, RoleTag::Diagnoser}, config, 1);
    EXPECT_EQ(self.scores, (std::vector<double>{4, 2}));

    InformationState approx{system.role(AgentRole::Executor), AgentMemory{AgentRole::Planner}};
    auto cross = evaluate_perspective(backend, approx, system, candidates,
                                      {RoleTag::Planner, RoleTag::Executor}, config, 1);
    EXPECT_EQ(cross.scores, (std::vector<double>{3, 4}));
}

TEST(EvaluatePerspective, OneRepromptOnMalformedScores) {
    Script script;
    const auto key = request_key(RoleTag::Planner, Purpose::Evaluation,
                                 Perspective{RoleTag::Planner, RoleTag::Planner}, 1);
    script.add(key, "Plan 1: strong");
    script.add(key, "Plan 1: 4");
    ScriptedBackend backend(std::move(script));
    auto system = make_system();
    CandidateSet candidates{{{"g1", kBaseGenerator, "a", 1}}, 1};
    auto parsed = evaluate_perspective(backend, planner_state(system), system, candidates,
                                       {RoleTag::Planner, RoleTag::Planner}, IpsConfig{}, 1);
    EXPECT_EQ(parsed.scores, (std::vector<double>{4}));
}

TEST(EvaluatePerspective, FailsAfterSecondMalformedReply) {
    Script script;
    const auto key = request_key(RoleTag::Planner, Purpose::Evaluation,
                                 Perspective{RoleTag::Planner, RoleTag::Planner}, 1);
    script.add(key, "Plan 1: strong");
    script.add(key, "still no number");
    ScriptedBackend backend(std::move(script));
    auto system = make_system();
    CandidateSet candidates{{{"g1", kBaseGenerator, "a", 1}}, 1};
    EXPECT_THROW(evaluate_perspective(backend, planner_state(system), system, candidates,
                                      {RoleTag::Planner, RoleTag::Planner}, IpsConfig{}, 1),
                 ScoreParseFailure);
}

TEST(EvaluatePerspective, ClampFlagsSurface) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::Evaluation,
                           Perspective{RoleTag::Planner, RoleTag::Planner}, 1),
               "Plan 1: 6\nPlan 2: 3");
    ScriptedBackend backend(std::move(script));
    auto system = make_system();
    CandidateSet candidates{{{"g1", kBaseGenerator, "a", 1}, {"g2", kBaseGenerator, "b", 2}}, 2};
    auto parsed = evaluate_perspective(backend, planner_state(system), system, candidates,
                                       {RoleTag::Planner, RoleTag::Planner}, IpsConfig{}, 1);
    EXPECT_EQ(parsed.scores, (std::vector<double>{5, 3}));
    EXPECT_EQ(parsed.clamped_plans, (std::vector<int>{1}));
}

TEST(ComputeConsistency, UniformScoresGiveZero) {
    ScoreMatrix m;
    for (int i = 0; i < kAgentCount; ++i) {
        m.self_scores[i] = {3, 3, 3};
        for (int j = 0; j < kAgentCount; ++j)
            if (i != j) m.predictions[i][j] = {3, 3, 3};
    }
    auto report = compute_consistency(m);
    for (double c : report.plan_scores) EXPECT_DOUBLE_EQ(c, 0.0);
    EXPECT_EQ(report.selected_index, 1);
    EXPECT_TRUE(report.tie_broken);
}

// Frozen values for the worked two-plan matrix, cross-checked against the
// 50-digit oracle before being asserted here.
TEST(ComputeConsistency, WorkedExample) {
    auto report = compute_consistency(worked_example_matrix());

    const int P = agent_index(AgentRole::Planner);
    const int E = agent_index(AgentRole::Executor);
    const int D = agent_index(AgentRole::Diagnoser);
    EXPECT_NEAR(report.peer_means[P][0], 3.5, 1e-12);
    EXPECT_NEAR(report.peer_means[P][1], 3.0, 1e-12);
    EXPECT_NEAR(report.peer_means[E][0], 4.5, 1e-12);
    EXPECT_NEAR(report.peer_means[E][1], 2.5, 1e-12);
    EXPECT_NEAR(report.peer_means[D][0], 4.5, 1e-12);
    EXPECT_NEAR(report.peer_means[D][1], 3.0, 1e-12);

    EXPECT_NEAR(report.agent_scores[P][0], 0.133531, 1e-6);
    EXPECT_NEAR(report.agent_scores[P][1], 0.0, 1e-12);
    EXPECT_NEAR(report.agent_scores[E][0], -0.405465, 1e-6);
    EXPECT_NEAR(report.agent_scores[E][1], 0.182322, 1e-6);
    EXPECT_NEAR(report.agent_scores[D][0], 0.105361, 1e-6);
    EXPECT_NEAR(report.agent_scores[D][1], -0.405465, 1e-6);

    ASSERT_EQ(report.plan_scores.size(), 2u);
    EXPECT_NEAR(report.plan_scores[0], -0.055524, 1e-6);
    EXPECT_NEAR(report.plan_scores[1], -0.074381, 1e-6);
    EXPECT_EQ(report.selected_index, 1);
    EXPECT_EQ(report.planner_index, 1);

    auto oracle = oracle_consistency(worked_example_matrix());
    EXPECT_NEAR(report.plan_scores[0], oracle.plan_scores[0], 1e-12);
    EXPECT_NEAR(report.plan_scores[1], oracle.plan_scores[1], 1e-12);
}

TEST(ComputeConsistency, PlanWiseScaleInvariance) {
    auto base = worked_example_matrix();
    auto baseline = compute_consistency(base);
    auto scaled = base;
    for (int i = 0; i < kAgentCount; ++i) {
        scaled.self_scores[i][0] *= 2.0;
        for (int j = 0; j < kAgentCount; ++j)
            if (i != j) scaled.predictions[i][j][0] *= 2.0;
    }
    auto report = compute_consistency(scaled);
    EXPECT_NEAR(report.plan_scores[0], baseline.plan_scores[0], 1e-9);
    EXPECT_NEAR(report.plan_scores[1], baseline.plan_scores[1], 1e-12);
}

TEST(ComputeConsistency, MatchesOracleOnRandomMatrices) {
    std::mt19937 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 1 + static_cast<int>(rng() % 9);
        auto matrix = random_matrix(rng, k);
        auto fast = compute_consistency(matrix);
        auto oracle = oracle_consistency(matrix);
        for (int p = 0; p < k; ++p) {
            ASSERT_NEAR(fast.plan_scores[p], oracle.plan_scores[p], 1e-9);
            for (int i = 0; i < kAgentCount; ++i) {
                ASSERT_NEAR(fast.peer_means[i][p], oracle.peer_means[i][p], 1e-9);
                ASSERT_NEAR(fast.agent_scores[i][p], oracle.agent_scores[i][p], 1e-9);
            }
        }
    }
}

TEST(ComputeConsistency, ZeroConsistencyIdentity) {
    // e_i equals the peer mean for every agent: both predictions 3, self 3.
    ScoreMatrix m;
    for (int i = 0; i < kAgentCount; ++i) {
        m.self_scores[i] = {3.0, 4.0};
        for (int j = 0; j < kAgentCount; ++j)
            if (i != j) m.predictions[i][j] = {3.0, 4.0};
    }
    auto report = compute_consistency(m);
    for (double c : report.plan_scores) EXPECT_LE(std::abs(c), 3e-15);
}

TEST(SelectPlan, WorkedVector) {
    EXPECT_EQ(select_plan({-0.055524, -0.074381}), 1);
}

TEST(SelectPlan, TieBreaksToLowestIndex) {
    bool tie = false;
    EXPECT_EQ(select_plan({0.0, 0.0, 0.0}, &tie), 1);
    EXPECT_TRUE(tie);

    tie = false;
    EXPECT_EQ(select_plan({0.1, 0.3, 0.3}, &tie), 2);
    EXPECT_TRUE(tie);
}

TEST(SelectPlan, SingleElement) {
    bool tie = true;
    EXPECT_EQ(select_plan({0.42}, &tie), 1);
    EXPECT_FALSE(tie);
}

Script worked_round_script(const std::vector<int>& planner_self = {4, 3}) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, 1),
               plan_block("inspect the primary source", kWikipediaSearch, "topic page") + "\n" +
                   plan_block("guess from prior context", kBaseGenerator, "recall"));
    auto v = worked_example_vectors();
    v.self[agent_index(AgentRole::Planner)] = planner_self;
    add_nine_evaluations(script, 1, v);
    return script;
}

TEST(RunIps, WorkedScriptedRound) {
    ScriptedBackend backend(worked_round_script());
    auto system = make_system();
    IpsConfig config;
    config.k = 2;
    auto out = run_ips(backend, {}, system, {}, config, 1);
    ASSERT_EQ(out.candidates.plans.size(), 2u);
    EXPECT_EQ(out.report.selected_index, 1);
    EXPECT_EQ(out.report.planner_index, 1);
    EXPECT_NEAR(out.report.plan_scores[0], -0.055524, 1e-6);
    EXPECT_NEAR(out.report.plan_scores[1], -0.074381, 1e-6);
}

// Divergence arises when every agent's own score favors plan 1 but everyone
// predicts their peers will inflate it: peer means [5,2] against selves [5,3]
// give s_i = [0, ln(3/2)], so consistency picks plan 2 while the planner's
// self evaluation stays on plan 1.
TEST(RunIps, PlannerDivergesFromConsistencySelection) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, 1),
               plan_block("inspect the primary source", kWikipediaSearch, "topic page") + "\n" +
                   plan_block("guess from prior context", kBaseGenerator, "recall"));
    testing::NineVectors v;
    for (int i = 0; i < kAgentCount; ++i) {
        v.self[i] = {5, 3};
        for (int j = 0; j < kAgentCount; ++j)
            if (i != j) v.cross[i][j] = {5, 2};
    }
    add_nine_evaluations(script, 1, v);
    ScriptedBackend backend(std::move(script));
    auto system = make_system();
    IpsConfig config;
    config.k = 2;
    auto out = run_ips(backend, {}, system, {}, config, 1);
    EXPECT_EQ(out.report.selected_index, 2);
    EXPECT_EQ(out.report.planner_index, 1);
    EXPECT_NEAR(out.report.plan_scores[0], 0.0, 1e-12);
    EXPECT_NEAR(out.report.plan_scores[1], std::log(3.0 / 2.0), 1e-12);
}

class CountingBackend : public Backend {
public:
    explicit CountingBackend(Backend& inner) : inner_(inner) {}
    CompletionResponse complete(const CompletionRequest& request) override {
        ++count_;
        return inner_.complete(request);
    }
    std::string name() const override { return inner_.name(); }
    int count() const { return count_.load(); }

private:
    Backend& inner_;
    std::atomic<int> count_{0};
};

TEST(RunIps, DegenerateSingleCandidate) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, 1),
               plan_block("only option", kBaseGenerator, "a"));
    testing::NineVectors v;
    for (int i = 0; i < kAgentCount; ++i) {
        v.self[i] = {3};
        for (int j = 0; j < kAgentCount; ++j)
            if (i != j) v.cross[i][j] = {3};
    }
    add_nine_evaluations(script, 1, v);
    ScriptedBackend scripted(std::move(script));
    CountingBackend backend(scripted);

    auto system = make_system();
    IpsConfig config;
    config.k = 1;
    auto out = run_ips(backend, {}, system, {}, config, 1);
    ASSERT_EQ(out.candidates.plans.size(), 1u);
    EXPECT_EQ(out.report.selected_index, 1);
    EXPECT_EQ(out.report.planner_index, 1);
    EXPECT_EQ(backend.count(), 1 + 9);
}

TEST(RunIps, PerAgentBatchingUsesThreeCalls) {
    Script script;
    script.add(request_key(RoleTag::Planner, Purpose::CandidateGeneration, std::nullopt, 1),
               plan_block("inspect the primary source", kWikipediaSearch, "topic page") + "\n" +
                   plan_block("guess from prior context", kBaseGenerator, "recall"));
    auto v = worked_example_vectors();
    auto batched = [&](AgentRole evaluator) {
        std::string text;
        for (AgentRole target : kAgents) {
            const auto& scores = (evaluator == target)
                                     ? v.self[agent_index(evaluator)]
                                     : v.cross[agent_index(evaluator)][agent_index(target)];
            text += std::string("AS ") + to_string(target) + ":\n" + score_lines(scores);
        }
        return text;
    };
    for (AgentRole evaluator : kAgents) {
        script.add(request_key(to_role_tag(evaluator), Purpose::Evaluation, std::nullopt, 1),
                   batched(evaluator));
    }
    ScriptedBackend scripted(std::move(script));
    CountingBackend backend(scripted);

    auto system = make_system();
    IpsConfig config;
    config.k = 2;
    config.per_agent_batching = true;
    auto out = run_ips(backend, {}, system, {}, config, 1);
    EXPECT_EQ(backend.count(), 1 + 3);
    EXPECT_EQ(out.report.selected_index, 1);
    EXPECT_NEAR(out.report.plan_scores[0], -0.055524, 1e-6);
    EXPECT_NEAR(out.report.plan_scores[1], -0.074381, 1e-6);
}

// Completion order must not matter: jitter the evaluation responses and
// compare against the undelayed report.
class JitterBackend : public Backend {
public:
    JitterBackend(Backend& inner, unsigned seed) : inner_(inner), rng_(seed) {}
    CompletionResponse complete(const CompletionRequest& request) override {
        if (request.purpose_tag == Purpose::Evaluation) {
            int ms;
            {
                std::lock_guard<std::mutex> lock(mutex_);
                ms = static_cast<int>(rng_() % 20);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        }
        return inner_.complete(request);
    }
    std::string name() const override { return inner_.name(); }

private:
    Backend& inner_;
    std::mt19937 rng_;
    std::mutex mutex_;
};

TEST(RunIps, OrderIndependentAggregation) {
    auto system = make_system();
    IpsConfig config;
    config.k = 2;

    ScriptedBackend reference(worked_round_script());
    auto expected = run_ips(reference, {}, system, {}, config, 1);

    for (unsigned seed = 1; seed <= 3; ++seed) {
        ScriptedBackend scripted(worked_round_script());
        JitterBackend jitter(scripted, seed);
        auto out = run_ips(jitter, {}, system, {}, config, 1);
        EXPECT_EQ(out.report.selected_index, expected.report.selected_index);
        EXPECT_EQ(out.report.planner_index, expected.report.planner_index);
        EXPECT_EQ(out.report.plan_scores, expected.report.plan_scores);
        for (int i = 0; i < kAgentCount; ++i)
            EXPECT_EQ(out.matrix.self_scores[i], expected.matrix.self_scores[i]);
    }
}

TEST(MsaSelect, WorkedMeans) {
    auto m = worked_example_matrix();
    EXPECT_EQ(msa_select(m.self_scores), 1);  // means [4.0, 8/3]
}

TEST(EvaluationPrompt, EmbedsTheRubricVerbatim) {
    std::vector<Plan> plans{{"g", kBaseGenerator, "a", 1}};
    const std::string prompt = prompts::evaluation("QUERY: q\nROLE: Planner: p\n", plans);
    EXPECT_NE(prompt.find(prompts::kFeasibilityRubric), std::string::npos);
    EXPECT_NE(prompt.find("Score 5 — Exceptional Feasibility"), std::string::npos);
    EXPECT_NE(prompt.find("Score 1 — Weak Feasibility"), std::string::npos);
}

TEST(EvaluationPrompt, RubricMatchesTheShippedResourceFile) {
    std::ifstream in(std::string(EPCAW_RESOURCE_DIR) + "/feasibility_rubric_v" +
                     std::to_string(prompts::kRubricVersion) + ".txt");
    ASSERT_TRUE(in.is_open());
    std::stringstream buffer;
    buffer << in.rdbuf();
    EXPECT_EQ(buffer.str(), prompts::kFeasibilityRubric);
}

}  // namespace
}  // namespace epcaw
