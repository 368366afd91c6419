#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "a2po/rewards.hpp"
#include "a2po/sampler.hpp"

using namespace a2po;

namespace {

const TaskFamily& family() {
    static TaskFamily f(Vocabulary::standard(), 1);
    return f;
}

// Literal re-statements of the timing and quality formulas, written
// independently of the library implementation.
int timing_literal(bool aux, double delta, double tau) {
    if (!aux)
        return 0;
    if (delta > tau)
        return +1;
    if (delta < -tau)
        return -1;
    return 0;
}

int quality_literal(bool aux, int r_acc, double p, double p_bar, double tol) {
    const int indicator = (p < p_bar + tol) ? 1 : 0;
    return (aux ? 1 : 0) * r_acc * indicator;
}

Trajectory fabricated(std::vector<TokenId> tokens, std::vector<double> logprobs, bool truncated = false) {
    Trajectory traj;
    traj.tokens = std::move(tokens);
    traj.origin.assign(traj.tokens.size(), Origin::Generated);
    traj.logprobs = std::move(logprobs);
    traj.truncated = truncated;
    traj.aux_span = find_aux_span(traj.tokens, family().vocab());
    return traj;
}

// judged-correct / judged-wrong single-token trajectories for baseline math
Trajectory outcome_traj(const TaskInstance& task, bool correct) {
    const TokenId mark = family().vocab().role(Role::AnswerMark);
    const TokenId wrong = (task.answer_token == 7) ? 8 : 7;
    return fabricated({mark, correct ? task.answer_token : wrong, 1}, {-0.1, -0.1, -0.1});
}

}  // namespace

TEST_CASE("timing reward matches the literal formula over an exhaustive grid") {
    for (int aux = 0; aux < 2; ++aux) {
        for (double tau : {0.0, 0.15, 0.5}) {
            for (int i = -20; i <= 20; ++i) {  // 41 delta values covering [-1, 1]
                const double delta = i / 20.0;
                REQUIRE(timing_reward(aux != 0, delta, tau) == timing_literal(aux != 0, delta, tau));
            }
        }
    }
}

TEST_CASE("timing reward boundary cases fall in the zero branch") {
    REQUIRE(timing_reward(true, 0.15, 0.15) == 0);
    REQUIRE(timing_reward(true, -0.15, 0.15) == 0);
    REQUIRE(timing_reward(true, 0.1500001, 0.15) == 1);
    REQUIRE(timing_reward(true, -0.1500001, 0.15) == -1);
    REQUIRE(timing_reward(false, 1.0, 0.15) == 0);
}

TEST_CASE("quality reward matches the literal formula over an exhaustive grid") {
    const double p_bar = 1.12;
    for (int aux = 0; aux < 2; ++aux) {
        for (int acc = 0; acc < 2; ++acc) {
            for (double tol : {0.0, 0.01, 0.1}) {
                for (int i = 0; i < 20; ++i) {
                    const double p = 1.0 + i * 0.02;  // 1.00 .. 1.38
                    REQUIRE(quality_reward(aux != 0, acc, p, p_bar, tol) == quality_literal(aux != 0, acc, p, p_bar, tol));
                }
            }
        }
    }
}

TEST_CASE("quality reward boundary and worked examples") {
    REQUIRE(quality_reward(true, 1, 1.10, 1.12, 0.01) == 1);  // 1.10 < 1.13
    REQUIRE(quality_reward(true, 0, 1.00, 1.12, 0.01) == 0);  // wrong answer gates it
    // exact-boundary case with binary-representable values: ppl == p_bar + tol
    REQUIRE(quality_reward(true, 1, 1.25, 1.0, 0.25) == 0);
    REQUIRE(quality_reward(false, 1, 1.00, 1.12, 0.01) == 0);
    // monotonicity: lowering ppl never loses the reward
    int prev = 0;
    for (double p = 1.40; p >= 1.0; p -= 0.01) {
        const int q = quality_reward(true, 1, p, 1.12, 0.01);
        REQUIRE(q >= prev);
        prev = q;
    }
}

TEST_CASE("composite is the documented weighted sum") {
    const RewardWeights w;
    REQUIRE(w.w_acc == 0.70);
    REQUIRE(w.w_fmt == 0.00);
    REQUIRE(w.w_time == 0.15);
    REQUIRE(w.w_qual == 0.15);
    REQUIRE(w.tau == 0.15);
    REQUIRE(w.delta_tol == 0.01);
    REQUIRE_THAT(composite(1, 1, 1, 1, w), Catch::Matchers::WithinAbs(1.00, 1e-15));
    REQUIRE_THAT(composite(0, 1, -1, 0, w), Catch::Matchers::WithinAbs(-0.15, 1e-15));
    REQUIRE(composite(0, 0, 0, 0, w) == 0.0);
}

TEST_CASE("composite is bounded in [-0.15, 1.00] under default weights") {
    const RewardWeights w;
    for (int acc = 0; acc < 2; ++acc)
        for (int fmt = 0; fmt < 2; ++fmt)
            for (int time = -1; time <= 1; ++time)
                for (int qual = 0; qual < 2; ++qual) {
                    // gating: no timing/quality without aux, and no quality
                    // without accuracy — enumerate only reachable tuples
                    if (qual == 1 && acc == 0)
                        continue;
                    const double r = composite(acc, fmt, time, qual, w);
                    REQUIRE(r >= -0.15 - 1e-12);
                    REQUIRE(r <= 1.00 + 1e-12);
                }
}

TEST_CASE("reward weight validation rejects negative entries") {
    RewardWeights w;
    w.w_acc = -0.1;
    REQUIRE_THROWS_AS(w.validate(), std::invalid_argument);
    RewardWeights w2;
    w2.tau = -1;
    REQUIRE_THROWS_AS(w2.validate(), std::invalid_argument);
}

TEST_CASE("ppl of fabricated uniform and deterministic trajectories") {
    const double u = -std::log(32.0);
    const Trajectory uniform = fabricated({6, 8, 1}, {u, u, u});
    REQUIRE_THAT(ppl(uniform), Catch::Matchers::WithinRel(32.0, 1e-12));
    const Trajectory certain = fabricated({6, 8, 1}, {0.0, 0.0, 0.0});
    REQUIRE(ppl(certain) == 1.0);
    Trajectory empty;
    REQUIRE_THROWS_AS(ppl(empty), std::invalid_argument);
}

TEST_CASE("format reward clauses") {
    const TokenId mark = family().vocab().role(Role::AnswerMark);
    // aux-free answer with one mark, untruncated
    REQUIRE(format_reward(fabricated({mark, 8, 1}, {0, 0, 0}), family().vocab()) == 1);
    // single well-formed span
    REQUIRE(format_reward(fabricated({2, 16, 17, 18, 3, mark, 8, 1}, {0, 0, 0, 0, 0, 0, 0, 0}), family().vocab()) == 1);
    // unclosed opener
    REQUIRE(format_reward(fabricated({2, 16, mark, 8, 1}, {0, 0, 0, 0, 0}), family().vocab()) == 0);
    // close before open
    REQUIRE(format_reward(fabricated({3, 2, mark, 8, 1}, {0, 0, 0, 0, 0}), family().vocab()) == 0);
    // two marks
    REQUIRE(format_reward(fabricated({mark, 8, mark, 1}, {0, 0, 0, 0}), family().vocab()) == 0);
    // missing mark
    REQUIRE(format_reward(fabricated({25, 8, 1}, {0, 0, 0}), family().vocab()) == 0);
    // truncated
    REQUIRE(format_reward(fabricated({mark, 8, 25}, {0, 0, 0}, true), family().vocab()) == 0);
}

TEST_CASE("compute_baselines arithmetic on fabricated groups") {
    RngStream rng(stream_key({61, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Neutral, rng);
    RolloutGroup group;
    group.mandatory = {outcome_traj(task, true), outcome_traj(task, true), outcome_traj(task, false),
                       outcome_traj(task, true)};
    group.prohibited = {outcome_traj(task, false), outcome_traj(task, false), outcome_traj(task, false),
                        outcome_traj(task, false)};
    const Baselines b = compute_baselines(group, task, family());
    REQUIRE_THAT(b.delta, Catch::Matchers::WithinAbs(0.75, 1e-12));
    REQUIRE_THAT(b.ppl_bar, Catch::Matchers::WithinRel(std::exp(0.1), 1e-12));

    // symmetric outcomes give a zero gap
    RolloutGroup sym;
    sym.mandatory = {outcome_traj(task, true), outcome_traj(task, false)};
    sym.prohibited = {outcome_traj(task, false), outcome_traj(task, true)};
    REQUIRE(compute_baselines(sym, task, family()).delta == 0.0);

    // degenerate task: forced aux always right, forbidden always wrong
    RolloutGroup degenerate;
    degenerate.mandatory = {outcome_traj(task, true), outcome_traj(task, true)};
    degenerate.prohibited = {outcome_traj(task, false), outcome_traj(task, false)};
    REQUIRE(compute_baselines(degenerate, task, family()).delta == 1.0);

    RolloutGroup empty;
    REQUIRE_THROWS_AS(compute_baselines(empty, task, family()), std::invalid_argument);
}

TEST_CASE("score_trajectory gates timing and quality on aux usage") {
    RngStream rng(stream_key({63, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Neutral, rng);
    const TokenId mark = family().vocab().role(Role::AnswerMark);
    const RewardWeights w;
    const Baselines strong{0.9, 2.0};

    const Trajectory no_aux = fabricated({mark, task.answer_token, 1}, {-0.1, -0.1, -0.1});
    const RewardBreakdown rb = score_trajectory(no_aux, task, family(), strong, w);
    REQUIRE_FALSE(rb.aux_used);
    REQUIRE(rb.r_acc == 1);
    REQUIRE(rb.r_time == 0);
    REQUIRE(rb.r_qual == 0);
    REQUIRE_THAT(rb.composite, Catch::Matchers::WithinAbs(0.70, 1e-12));

    std::vector<TokenId> with_aux{2};
    with_aux.insert(with_aux.end(), task.aux_truth_tokens.begin(), task.aux_truth_tokens.end());
    with_aux.insert(with_aux.end(), {3, mark, task.answer_token, 1});
    const Trajectory aux = fabricated(with_aux, std::vector<double>(with_aux.size(), -0.1));
    const RewardBreakdown rb2 = score_trajectory(aux, task, family(), strong, w);
    REQUIRE(rb2.aux_used);
    REQUIRE(rb2.r_time == 1);
    REQUIRE(rb2.r_qual == 1);  // exp(0.1) < 2.0 + 0.01
    REQUIRE_THAT(rb2.composite, Catch::Matchers::WithinAbs(1.00, 1e-12));

    // ablation gates zero the components before weighting
    const RewardBreakdown rb3 = score_trajectory(aux, task, family(), strong, w, false, false);
    REQUIRE(rb3.r_time == 0);
    REQUIRE(rb3.r_qual == 0);
    REQUIRE_THAT(rb3.composite, Catch::Matchers::WithinAbs(0.70, 1e-12));

    // adverse gap punishes aux takers
    const Baselines adverse{-0.9, 2.0};
    const RewardBreakdown rb4 = score_trajectory(aux, task, family(), adverse, w);
    REQUIRE(rb4.r_time == -1);
}

TEST_CASE("accuracy reward matches an independent re-parse over random trajectories") {
    RngStream rng(stream_key({65, 1}));
    const TokenId mark = family().vocab().role(Role::AnswerMark);
    for (int i = 0; i < 1000; ++i) {
        const TaskInstance task = family().generate_task(static_cast<TaskClass>(i % 3), rng);
        std::vector<TokenId> tokens;
        const int len = 3 + static_cast<int>(rng.uniform_int(10));
        for (int j = 0; j < len; ++j)
            tokens.push_back(static_cast<TokenId>(rng.uniform_int(32)));
        const Trajectory traj = fabricated(tokens, std::vector<double>(tokens.size(), -0.5));

        // independent parser: scan for the first mark, compare the next token
        int expected = 0;
        for (std::size_t j = 0; j < tokens.size(); ++j)
            if (tokens[j] == mark) {
                expected = (j + 1 < tokens.size() && tokens[j + 1] == task.answer_token) ? 1 : 0;
                break;
            }
        REQUIRE(accuracy_reward(traj, task, family()) == expected);
    }
}

TEST_CASE("empirical utility gap is positive on beneficial tasks for a warm policy") {
    // Monte-Carlo check against the class semantics
    std::vector<TaskInstance> train;
    RngStream rng(stream_key({67, 1}));
    for (int i = 0; i < 60; ++i)
        train.push_back(family().generate_task(static_cast<TaskClass>(i % 3), rng));
    const std::vector<Demonstration> demos = family().make_demos(train, rng);
    const PolicyParams params = warmstart_mle(init_params(family().vocab(), 4, 16, 67), demos, 1500, 2.0);

    SamplerOptions opts;
    int positive = 0;
    const int n_tasks = 100;
    for (int i = 0; i < n_tasks; ++i) {
        const TaskInstance task = family().generate_task(TaskClass::Beneficial, rng);
        const RolloutGroup group = build_rollout_group(params, task, family(), 16, 700 + i, opts);
        if (group.delta > 0.0)
            ++positive;
    }
    // The per-task gap estimate uses 16 rollouts per subset, so the prohibited
    // side (a 0.25 guessing baseline) occasionally gets lucky; the exact sign
    // property is covered by the strategy-enumeration oracle in the task tests.
    REQUIRE(positive >= 90);
}
