#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "a2po/policy.hpp"
#include "a2po/rewards.hpp"
#include "a2po/rng.hpp"
#include "a2po/tasks.hpp"
#include "a2po/trajectory.hpp"

namespace a2po {

struct SamplerOptions {
    int max_len = 64;           // cap on generated tokens
    double temperature = 1.0;
    bool greedy = false;
    bool reprompt_enabled = true;  // visual re-prompting (hint injection)
};

// Samples one trajectory under the given protocol.
//   Mandatory:  first generated token is forced to AUX_OPEN.
//   Prohibited: AUX_OPEN/AUX_CLOSE are logit-masked at every step.
//   Natural:    unconstrained.
// For mandatory and natural trajectories the re-prompt hook runs exactly
// once, on the first generated AUX_CLOSE that closes a well-formed span: if
// the span body verifies against the ground-truth aux, the hint block is
// appended to the context with origin=Injected.
inline Trajectory sample_trajectory(const PolicyParams& params, const TaskInstance& task, const TaskFamily& family,
                                    Protocol protocol, RngStream& rng, const SamplerOptions& opts) {
    if (opts.max_len < 8)
        throw std::invalid_argument("max_len must be >= 8");
    const Vocabulary& vocab = params.vocab;
    const TokenId aux_open = vocab.role(Role::AuxOpen);
    const TokenId aux_close = vocab.role(Role::AuxClose);
    const TokenId eos = vocab.role(Role::Eos);

    std::vector<TokenId> banned;
    if (protocol == Protocol::Prohibited)
        banned = {aux_open, aux_close};

    Trajectory traj;
    traj.protocol = protocol;
    Context ctx = task.prompt_tokens;
    int pending_open = -1;
    bool hook_spent = false;
    int generated = 0;

    while (true) {
        std::optional<TokenId> forced;
        if (protocol == Protocol::Mandatory && generated == 0)
            forced = aux_open;
        const SampleResult res = sample_next(params, ctx, banned, forced, opts.temperature, rng, opts.greedy);
        traj.tokens.push_back(res.token);
        traj.origin.push_back(Origin::Generated);
        traj.logprobs.push_back(res.logprob);
        ctx.push_back(res.token);
        ++generated;

        if (res.token == eos)
            break;

        if (res.token == aux_close && pending_open >= 0 && !hook_spent && protocol != Protocol::Prohibited) {
            hook_spent = true;
            const int close_idx = static_cast<int>(traj.tokens.size()) - 1;
            std::vector<TokenId> body(traj.tokens.begin() + pending_open + 1, traj.tokens.begin() + close_idx);
            if (opts.reprompt_enabled && family.verify_aux(body, task)) {
                for (TokenId t : family.hint_block(task)) {
                    traj.tokens.push_back(t);
                    traj.origin.push_back(Origin::Injected);
                    ctx.push_back(t);
                }
                traj.reprompted = true;
            }
        }
        if (res.token == aux_open)
            pending_open = static_cast<int>(traj.tokens.size()) - 1;
        else if (res.token == aux_close)
            pending_open = -1;

        if (generated >= opts.max_len) {
            traj.truncated = true;
            break;
        }
    }
    traj.aux_span = find_aux_span(traj.tokens, vocab);
    return traj;
}

namespace detail {
inline std::vector<Trajectory> sample_subset(const PolicyParams& params, const TaskInstance& task,
                                             const TaskFamily& family, Protocol protocol, int n, std::uint64_t seed,
                                             const SamplerOptions& opts) {
    if (n < 1)
        throw std::invalid_argument("subset size must be >= 1");
    std::vector<Trajectory> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        RngStream rng(stream_key({seed, task.task_id, static_cast<std::uint64_t>(protocol), static_cast<std::uint64_t>(i)}));
        out.push_back(sample_trajectory(params, task, family, protocol, rng, opts));
    }
    return out;
}
}  // namespace detail

inline std::vector<Trajectory> sample_mandatory(const PolicyParams& params, const TaskInstance& task,
                                                const TaskFamily& family, int n, std::uint64_t seed,
                                                const SamplerOptions& opts = {}) {
    return detail::sample_subset(params, task, family, Protocol::Mandatory, n, seed, opts);
}

inline std::vector<Trajectory> sample_prohibited(const PolicyParams& params, const TaskInstance& task,
                                                 const TaskFamily& family, int n, std::uint64_t seed,
                                                 const SamplerOptions& opts = {}) {
    return detail::sample_subset(params, task, family, Protocol::Prohibited, n, seed, opts);
}

inline std::vector<Trajectory> sample_natural(const PolicyParams& params, const TaskInstance& task,
                                              const TaskFamily& family, int n, std::uint64_t seed,
                                              const SamplerOptions& opts = {}) {
    return detail::sample_subset(params, task, family, Protocol::Natural, n, seed, opts);
}

// Populates all three subsets with disjoint rng streams and computes the
// counterfactual baselines. Pure function of (params, task, n, opts, seed).
inline RolloutGroup build_rollout_group(const PolicyParams& params, const TaskInstance& task, const TaskFamily& family,
                                        int n, std::uint64_t seed, const SamplerOptions& opts = {}) {
    if (n < 2)
        throw std::invalid_argument("rollout group needs n >= 2");
    RolloutGroup group;
    group.task_id = task.task_id;
    group.mandatory = sample_mandatory(params, task, family, n, seed, opts);
    group.prohibited = sample_prohibited(params, task, family, n, seed, opts);
    group.natural = sample_natural(params, task, family, n, seed, opts);
    const Baselines b = compute_baselines(group, task, family);
    group.delta = b.delta;
    group.ppl_bar = b.ppl_bar;
    return group;
}

// Marginal-solvability filter: keeps tasks whose natural-rollout accuracy
// over rollouts_per_task samples is strictly between 0 and 1.
inline std::vector<TaskInstance> filter_marginal(const std::vector<TaskInstance>& tasks, const PolicyParams& params,
                                                 const TaskFamily& family, int rollouts_per_task, std::uint64_t seed,
                                                 const SamplerOptions& opts = {}) {
    if (rollouts_per_task < 2)
        throw std::invalid_argument("filter_marginal needs rollouts_per_task >= 2");
    std::vector<TaskInstance> kept;
    for (const TaskInstance& task : tasks) {
        int correct = 0;
        for (int i = 0; i < rollouts_per_task; ++i) {
            RngStream rng(stream_key({seed, 0x66696c74ull, task.task_id, static_cast<std::uint64_t>(i)}));  // "filt"
            const Trajectory traj = sample_trajectory(params, task, family, Protocol::Natural, rng, opts);
            correct += family.judge_answer(traj, task);
        }
        if (correct > 0 && correct < rollouts_per_task)
            kept.push_back(task);
    }
    return kept;
}

}  // namespace a2po
