#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "a2po/eval.hpp"
#include "a2po/sampler.hpp"

using namespace a2po;

namespace {

const TaskFamily& family() {
    static TaskFamily f(Vocabulary::standard(), 1);
    return f;
}

std::vector<TaskInstance> mixed_suite(int per_class, std::uint64_t seed) {
    std::vector<TaskInstance> out;
    for (int c = 0; c < 3; ++c) {
        RngStream rng(stream_key({seed, static_cast<std::uint64_t>(c)}));
        for (int i = 0; i < per_class; ++i)
            out.push_back(family().generate_task(static_cast<TaskClass>(c), rng));
    }
    return out;
}

// Policy fine-tuned to produce the canonical solution trace, so aux spans,
// verification, and hint injection all occur at useful rates.
PolicyParams warm_policy(std::uint64_t seed = 3, int epochs = 400) {
    const std::vector<TaskInstance> tasks = mixed_suite(20, seed);
    RngStream rng(stream_key({seed, 77}));
    const std::vector<Demonstration> demos = family().make_demos(tasks, rng);
    return warmstart_mle(init_params(family().vocab(), 4, 16, seed), demos, epochs, 1.0);
}

int count_aux_tokens(const Trajectory& traj) {
    int n = 0;
    for (TokenId t : traj.tokens)
        n += family().vocab().is_aux_role(t) ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("find_aux_span handles well-formed, malformed and re-opened spans") {
    const Vocabulary& v = family().vocab();
    REQUIRE_FALSE(find_aux_span({16, 17, 18}, v).has_value());
    // close before open: malformed, no span
    REQUIRE_FALSE(find_aux_span({3, 16, 17}, v).has_value());
    const auto span = find_aux_span({25, 2, 16, 17, 3, 6}, v);
    REQUIRE(span.has_value());
    REQUIRE(span->open == 1);
    REQUIRE(span->close == 4);
    // re-open abandons the pending span; first completed pair wins
    const auto reopened = find_aux_span({2, 16, 2, 17, 3}, v);
    REQUIRE(reopened.has_value());
    REQUIRE(reopened->open == 2);
    REQUIRE(reopened->close == 4);
    // body extraction is exclusive of delimiters
    Trajectory traj;
    traj.tokens = {25, 2, 16, 17, 3, 6};
    REQUIRE(span_body(traj, *span) == std::vector<TokenId>{16, 17});
}

TEST_CASE("mandatory trajectories always start with a forced aux opener") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(5, 31);
    SamplerOptions opts;
    const TokenId aux_open = family().vocab().role(Role::AuxOpen);
    for (const TaskInstance& task : tasks) {
        for (const Trajectory& traj : sample_mandatory(params, task, family(), 8, 100 + task.task_id, opts)) {
            REQUIRE_FALSE(traj.tokens.empty());
            REQUIRE(traj.tokens[0] == aux_open);
            REQUIRE(traj.origin[0] == Origin::Generated);
            // forced-token logprob is recorded under the unmasked distribution
            REQUIRE(traj.logprobs[0] == next_token_logprobs(params, task.prompt_tokens)[aux_open]);
        }
    }
}

TEST_CASE("prohibited trajectories never contain aux tokens") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(5, 33);
    SamplerOptions opts;
    for (const TaskInstance& task : tasks) {
        for (const Trajectory& traj : sample_prohibited(params, task, family(), 50, 200 + task.task_id, opts)) {
            REQUIRE(count_aux_tokens(traj) == 0);
            REQUIRE_FALSE(traj.aux_span.has_value());
            REQUIRE_FALSE(traj.reprompted);
            for (double lp : traj.logprobs)
                REQUIRE(std::isfinite(lp));
        }
    }
}

TEST_CASE("prohibited sampling takes the best non-aux token where the unmasked argmax is aux") {
    const PolicyParams params = warm_policy();
    RngStream trng(stream_key({35, 1}));
    // find a prompt where the unmasked greedy choice is an aux role
    std::optional<TaskInstance> task;
    for (int i = 0; i < 200 && !task; ++i) {
        TaskInstance cand = family().generate_task(static_cast<TaskClass>(i % 3), trng);
        const std::vector<double> z = logits(params, cand.prompt_tokens);
        const TokenId argmax = static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
        if (family().vocab().is_aux_role(argmax))
            task = cand;
    }
    REQUIRE(task.has_value());

    // masked greedy emits the argmax over non-aux tokens instead
    const std::vector<double> z = logits(params, task->prompt_tokens);
    TokenId best = -1;
    double best_z = -1e300;
    for (int t = 0; t < 32; ++t)
        if (!family().vocab().is_aux_role(t) && z[t] > best_z) {
            best_z = z[t];
            best = t;
        }
    SamplerOptions greedy;
    greedy.greedy = true;
    RngStream rng2(stream_key({35, 3}));
    const Trajectory pro = sample_trajectory(params, *task, family(), Protocol::Prohibited, rng2, greedy);
    REQUIRE(pro.tokens[0] == best);
}

TEST_CASE("re-prompt fires iff a verified well-formed span is present") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(10, 37);
    SamplerOptions opts;
    int fired = 0;
    for (const TaskInstance& task : tasks) {
        for (Protocol proto : {Protocol::Mandatory, Protocol::Natural}) {
            for (int i = 0; i < 30; ++i) {
                RngStream rng(stream_key({39, task.task_id, static_cast<std::uint64_t>(proto), static_cast<std::uint64_t>(i)}));
                const Trajectory traj = sample_trajectory(params, task, family(), proto, rng, opts);
                bool verified_span = false;
                if (traj.aux_span)
                    verified_span = family().verify_aux(span_body(traj, *traj.aux_span), task);
                // the hook looks at the FIRST completed span, which is also
                // what find_aux_span returns, so the iff holds trajectory-wide
                if (traj.reprompted) {
                    REQUIRE(traj.aux_span.has_value());
                    ++fired;
                }
                int injected = 0;
                for (Origin o : traj.origin)
                    injected += (o == Origin::Injected) ? 1 : 0;
                if (traj.reprompted)
                    REQUIRE(injected == static_cast<int>(task.hint_tokens.size()) + 2);
                else
                    REQUIRE(injected == 0);
                if (verified_span && !traj.truncated)
                    REQUIRE(traj.reprompted);
            }
        }
    }
    REQUIRE(fired > 50);  // the property is not vacuous for the warm policy
}

TEST_CASE("injected hint equals the delimited hint block with no logprobs") {
    const PolicyParams params = warm_policy();
    RngStream trng(stream_key({41, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Beneficial, trng);
    SamplerOptions opts;
    bool seen = false;
    for (int i = 0; i < 50 && !seen; ++i) {
        RngStream rng(stream_key({41, 2, static_cast<std::uint64_t>(i)}));
        const Trajectory traj = sample_trajectory(params, task, family(), Protocol::Mandatory, rng, opts);
        if (!traj.reprompted)
            continue;
        seen = true;
        std::vector<TokenId> injected;
        for (std::size_t j = 0; j < traj.tokens.size(); ++j)
            if (traj.origin[j] == Origin::Injected)
                injected.push_back(traj.tokens[j]);
        REQUIRE(injected == family().hint_block(task));
        REQUIRE(traj.logprobs.size() == static_cast<std::size_t>(traj.generated_count()));
    }
    REQUIRE(seen);
}

TEST_CASE("the hook is single-shot even when later spans also verify") {
    // teach the policy a trace that repeats the verified span after the
    // hint block, so a second verified span follows the first injection
    RngStream trng(stream_key({43, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Beneficial, trng);
    const Vocabulary& v = family().vocab();
    Demonstration demo;
    demo.prompt = task.prompt_tokens;
    demo.target.push_back(v.role(Role::AuxOpen));
    demo.target.insert(demo.target.end(), task.aux_truth_tokens.begin(), task.aux_truth_tokens.end());
    demo.target.push_back(v.role(Role::AuxClose));
    const std::vector<TokenId> block = family().hint_block(task);
    demo.target.insert(demo.target.end(), block.begin(), block.end());
    demo.target.push_back(v.role(Role::AuxOpen));
    demo.target.insert(demo.target.end(), task.aux_truth_tokens.begin(), task.aux_truth_tokens.end());
    demo.target.push_back(v.role(Role::AuxClose));
    demo.target.push_back(v.role(Role::AnswerMark));
    demo.target.push_back(task.answer_token);
    demo.target.push_back(v.role(Role::Eos));

    const PolicyParams params =
        warmstart_mle(init_params(v, 4, 16, 43), std::vector<Demonstration>(4, demo), 800, 0.3);
    SamplerOptions opts;
    opts.greedy = true;
    RngStream rng(stream_key({43, 2}));
    const Trajectory traj = sample_trajectory(params, task, family(), Protocol::Natural, rng, opts);

    int injected = 0, opens = 0, closes = 0;
    for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
        injected += (traj.origin[i] == Origin::Injected) ? 1 : 0;
        opens += (traj.tokens[i] == v.role(Role::AuxOpen)) ? 1 : 0;
        closes += (traj.tokens[i] == v.role(Role::AuxClose)) ? 1 : 0;
    }
    REQUIRE(traj.reprompted);
    REQUIRE(opens >= 2);
    REQUIRE(closes >= 2);
    // exactly one injection despite multiple verified spans
    REQUIRE(injected == static_cast<int>(block.size()));
}

TEST_CASE("disabling re-prompting suppresses all injection") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(5, 45);
    SamplerOptions opts;
    opts.reprompt_enabled = false;
    for (const TaskInstance& task : tasks) {
        for (const Trajectory& traj : sample_natural(params, task, family(), 20, 500 + task.task_id, opts)) {
            REQUIRE_FALSE(traj.reprompted);
            for (Origin o : traj.origin)
                REQUIRE(o == Origin::Generated);
        }
    }
}

TEST_CASE("injection isolation: re-scoring generated tokens reproduces recorded logprobs") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(5, 47);
    SamplerOptions opts;
    for (const TaskInstance& task : tasks) {
        for (Protocol proto : {Protocol::Mandatory, Protocol::Natural}) {
            for (const Trajectory& traj :
                 detail::sample_subset(params, task, family(), proto, 10, 600 + task.task_id, opts)) {
                // includes forced index 0 of mandatory rollouts: its recorded
                // logprob is unmasked, which is what logprob_of computes
                const std::vector<double> rescored = logprob_of(params, task.prompt_tokens, traj);
                REQUIRE(rescored.size() == traj.logprobs.size());
                for (std::size_t i = 0; i < rescored.size(); ++i)
                    REQUIRE_THAT(rescored[i], Catch::Matchers::WithinAbs(traj.logprobs[i], 1e-12));
            }
        }
    }
}

TEST_CASE("rollout groups are a pure function of their seed") {
    const PolicyParams params = warm_policy();
    RngStream trng(stream_key({49, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Beneficial, trng);
    SamplerOptions opts;
    const RolloutGroup a = build_rollout_group(params, task, family(), 8, 12345, opts);
    const RolloutGroup b = build_rollout_group(params, task, family(), 8, 12345, opts);
    REQUIRE(a.mandatory.size() == 8);
    REQUIRE(a.prohibited.size() == 8);
    REQUIRE(a.natural.size() == 8);  // N=8 gives 24 trajectories in total
    for (int s = 0; s < 8; ++s) {
        REQUIRE(a.mandatory[s].tokens == b.mandatory[s].tokens);
        REQUIRE(a.prohibited[s].tokens == b.prohibited[s].tokens);
        REQUIRE(a.natural[s].tokens == b.natural[s].tokens);
        REQUIRE(a.natural[s].logprobs == b.natural[s].logprobs);
    }
    REQUIRE(a.delta == b.delta);
    REQUIRE(a.ppl_bar == b.ppl_bar);
    REQUIRE(a.delta >= -1.0);
    REQUIRE(a.delta <= 1.0);
    REQUIRE(a.ppl_bar >= 1.0);
    REQUIRE_THROWS_AS(build_rollout_group(params, task, family(), 1, 1, opts), std::invalid_argument);
}

TEST_CASE("truncation is flagged and capped at max_len generated tokens") {
    // a zero-weight policy rarely finds EOS within a tight budget
    PolicyParams p(Vocabulary::standard(), 4, 8);
    RngStream trng(stream_key({51, 1}));
    const TaskInstance task = family().generate_task(TaskClass::Neutral, trng);
    SamplerOptions opts;
    opts.max_len = 8;
    int truncated = 0;
    for (int i = 0; i < 50; ++i) {
        RngStream rng(stream_key({51, 2, static_cast<std::uint64_t>(i)}));
        const Trajectory traj = sample_trajectory(p, task, family(), Protocol::Natural, rng, opts);
        REQUIRE(traj.generated_count() <= 8);
        if (traj.truncated) {
            ++truncated;
            REQUIRE(traj.generated_count() == 8);
            REQUIRE(traj.tokens.back() != family().vocab().role(Role::Eos));
        } else {
            REQUIRE(traj.tokens.back() == family().vocab().role(Role::Eos));
        }
    }
    REQUIRE(truncated > 25);
}

TEST_CASE("evaluation is deterministic under greedy decoding") {
    const PolicyParams params = warm_policy();
    const std::vector<TaskInstance> tasks = mixed_suite(10, 53);
    EvalSpec spec;
    spec.seed = 5;
    const EvalReport a = evaluate(params, tasks, family(), spec);
    const EvalReport b = evaluate(params, tasks, family(), spec);
    REQUIRE(a.accuracy == b.accuracy);
    REQUIRE(a.mean_ppl == b.mean_ppl);
    REQUIRE(a.timing_correctness == b.timing_correctness);
    REQUIRE(a.count_by_class[0] + a.count_by_class[1] + a.count_by_class[2] == a.total_tasks);
    REQUIRE(a.records.size() == tasks.size());
}
