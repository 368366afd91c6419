#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2po/eval.hpp"
#include "a2po/policy.hpp"
#include "a2po/rewards.hpp"
#include "a2po/sampler.hpp"
#include "a2po/tasks.hpp"

namespace a2po {

// Group-relative advantages: (R_i - mean) / (pop. std + eps_norm). Groups
// with all-equal rewards yield all-zero advantages rather than 0/eps noise.
inline std::vector<double> advantages(const std::vector<double>& rewards, double eps_norm) {
    if (rewards.size() < 2)
        throw std::invalid_argument("advantages need a group of size >= 2");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards)
        mean += r;
    mean /= n;
    double var = 0.0;
    bool all_equal = true;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
        if (r != rewards.front())
            all_equal = false;
    }
    std::vector<double> out(rewards.size(), 0.0);
    if (all_equal)
        return out;
    const double std_pop = std::sqrt(var / n);
    for (std::size_t i = 0; i < rewards.size(); ++i)
        out[i] = (rewards[i] - mean) / (std_pop + eps_norm);
    return out;
}

// One rollout group with its advantage vector, ready for the surrogate.
struct GroupBatch {
    const RolloutGroup* group = nullptr;
    const TaskInstance* task = nullptr;
    std::vector<double> advantages;  // aligned with group->natural
};

struct SurrogateResult {
    double loss = 0.0;
    std::vector<double> grad;
    double mean_kl = 0.0;
};

// Token-averaged clipped surrogate with per-token KL penalty, over NATURAL
// trajectories only. Returns the negated objective and its exact gradient.
// O+/O- trajectories never contribute.
inline SurrogateResult surrogate_loss(const PolicyParams& params, const PolicyParams& old_snapshot,
                                      const PolicyParams& ref_snapshot, const std::vector<GroupBatch>& batch,
                                      double clip_eps, double kl_beta) {
    if (clip_eps <= 0.0 || clip_eps >= 1.0)
        throw std::invalid_argument("clip_eps must lie in (0, 1)");
    SurrogateResult result;
    result.grad.assign(params.w.size(), 0.0);

    std::size_t total_trajs = 0;
    for (const GroupBatch& gb : batch)
        total_trajs += gb.group->natural.size();
    if (total_trajs == 0)
        return result;
    const double traj_weight = 1.0 / static_cast<double>(total_trajs);

    double objective = 0.0;
    double kl_sum = 0.0;
    std::size_t kl_tokens = 0;
    std::vector<double> coeff;

    for (const GroupBatch& gb : batch) {
        if (gb.advantages.size() != gb.group->natural.size())
            throw std::invalid_argument("advantage vector misaligned with natural subset");
        const Context& prompt = gb.task->prompt_tokens;
        for (std::size_t i = 0; i < gb.group->natural.size(); ++i) {
            const Trajectory& traj = gb.group->natural[i];
            const double adv = gb.advantages[i];
            const std::vector<double> lp_new = logprob_of(params, prompt, traj);
            const std::vector<double> lp_old = logprob_of(old_snapshot, prompt, traj);
            const std::vector<double> lp_ref = logprob_of(ref_snapshot, prompt, traj);
            const std::size_t T = lp_new.size();
            if (T == 0)
                continue;
            coeff.assign(T, 0.0);
            double traj_obj = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double ratio = std::exp(lp_new[t] - lp_old[t]);
                const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
                const double v_unclipped = ratio * adv;
                const double v_clipped = clipped * adv;
                double val, pg_coeff;
                if (v_unclipped <= v_clipped) {
                    val = v_unclipped;
                    pg_coeff = adv * ratio;
                } else {
                    val = v_clipped;  // clipped branch selected: constant in theta
                    pg_coeff = 0.0;
                }
                const double log_r_ref = lp_ref[t] - lp_new[t];
                const double r_ref = std::exp(log_r_ref);
                const double kl = r_ref - 1.0 - log_r_ref;
                val -= kl_beta * kl;
                coeff[t] = pg_coeff - kl_beta * (1.0 - r_ref);
                if (!std::isfinite(val) || !std::isfinite(coeff[t]))
                    throw std::runtime_error("non-finite surrogate term at trajectory " + std::to_string(i) +
                                             ", token " + std::to_string(t));
                traj_obj += val;
                kl_sum += kl;
                ++kl_tokens;
            }
            const double token_weight = 1.0 / static_cast<double>(T);
            objective += traj_obj * token_weight * traj_weight;
            // loss = -objective, so accumulate with negated scale
            accumulate_weighted_logprob_grad(params, prompt, traj.tokens, traj.origin, coeff,
                                             -token_weight * traj_weight, result.grad);
        }
    }
    result.loss = -objective;
    result.mean_kl = kl_tokens ? kl_sum / static_cast<double>(kl_tokens) : 0.0;
    return result;
}

// ---- Adam ----------------------------------------------------------------

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n, double b1 = 0.9, double b2 = 0.999)
        : m(n, 0.0), v(n, 0.0), beta1(b1), beta2(b2) {}
};

inline void apply_update(AdamState& state, PolicyParams& params, const std::vector<double>& grad, double lr) {
    if (grad.size() != params.w.size() || state.m.size() != params.w.size())
        throw std::invalid_argument("gradient layout does not match params");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, state.step);
    const double bc2 = 1.0 - std::pow(state.beta2, state.step);
    for (std::size_t i = 0; i < params.w.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params.w[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        if (!std::isfinite(params.w[i]))
            throw std::runtime_error("non-finite parameter after update at coordinate " + std::to_string(i));
    }
}

// ---- training loop --------------------------------------------------------

struct Toggles {
    bool length_reward = false;
    bool timing_reward = true;
    bool quality_reward = true;
    bool visual_reprompt = true;
};

struct TrainConfig {
    RewardWeights weights;
    int n_per_subset = 8;  // N, generations per prompt and protocol
    int max_len = 64;
    double temperature = 1.0;
    double kl_beta = 0.01;
    double clip_eps = 0.2;
    double eps_norm = 1e-8;
    double lr = 1e-3;  // toy-scale default; far larger than full-scale fine-tuning rates
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    int steps = 0;
    int tasks_per_step = 4;
    std::uint64_t seed = 0;
    double length_weight = 0.05;  // only applied when toggles.length_reward
    Toggles toggles;

    void validate() const {
        weights.validate();
        if (clip_eps <= 0.0 || clip_eps >= 1.0)
            throw std::invalid_argument("clip_eps must lie in (0, 1)");
        if (kl_beta < 0.0)
            throw std::invalid_argument("kl_beta must be nonnegative");
        if (n_per_subset < 2)
            throw std::invalid_argument("n_per_subset must be >= 2");
        if (tasks_per_step < 1)
            throw std::invalid_argument("tasks_per_step must be >= 1");
        if (steps < 0)
            throw std::invalid_argument("steps must be >= 0");
        if (lr <= 0.0)
            throw std::invalid_argument("lr must be positive");
        if (eps_norm <= 0.0)
            throw std::invalid_argument("eps_norm must be positive");
        if (max_len < 8)
            throw std::invalid_argument("max_len must be >= 8");
        if (temperature <= 0.0)
            throw std::invalid_argument("temperature must be positive");
    }
};

struct UpdateReport {
    int step = 0;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double loss = 0.0;
    double kl_term = 0.0;
    double grad_norm = 0.0;
    std::array<double, 3> aux_rate_by_class{-1.0, -1.0, -1.0};  // -1 when class absent from the step
    std::array<double, 3> acc_by_class{-1.0, -1.0, -1.0};
};

struct TrainResult {
    PolicyParams params;
    std::vector<UpdateReport> history;
};

// One outer iteration = rollout -> reward -> advantage -> single update.
// pi_old is the rollout-time snapshot (ratios start at 1); pi_ref is the
// warm-start snapshot and is never refreshed.
inline TrainResult train(const TrainConfig& config, const std::vector<TaskInstance>& tasks,
                         const PolicyParams& warmstarted_params, const TaskFamily& family) {
    config.validate();
    if (tasks.empty())
        throw std::invalid_argument("train requires a non-empty task suite");

    TrainResult result{warmstarted_params, {}};
    const PolicyParams ref = warmstarted_params;
    AdamState adam(result.params.w.size(), config.adam_beta1, config.adam_beta2);

    SamplerOptions opts;
    opts.max_len = config.max_len;
    opts.temperature = config.temperature;
    opts.reprompt_enabled = config.toggles.visual_reprompt;

    for (int step = 0; step < config.steps; ++step) {
        RngStream pick(stream_key({config.seed, 0x7069636bull, static_cast<std::uint64_t>(step)}));  // "pick"
        std::vector<const TaskInstance*> chosen;
        for (int i = 0; i < config.tasks_per_step; ++i)
            chosen.push_back(&tasks[pick.uniform_int(tasks.size())]);

        std::vector<RolloutGroup> groups;
        groups.reserve(chosen.size());
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const std::uint64_t group_seed =
                stream_key({config.seed, 0x726f6c6cull, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)});
            groups.push_back(build_rollout_group(result.params, *chosen[i], family, config.n_per_subset, group_seed, opts));
        }

        UpdateReport report;
        report.step = step;
        std::array<double, 3> aux_sum{}, acc_sum{};
        std::array<int, 3> class_count{};
        double reward_sum = 0.0, abs_adv_sum = 0.0;
        int natural_count = 0;

        std::vector<GroupBatch> batch;
        batch.reserve(groups.size());
        for (std::size_t i = 0; i < groups.size(); ++i) {
            const RolloutGroup& group = groups[i];
            const TaskInstance& task = *chosen[i];
            const Baselines baselines{group.delta, group.ppl_bar};
            std::vector<double> rewards;
            rewards.reserve(group.natural.size());
            for (const Trajectory& traj : group.natural) {
                const RewardBreakdown rb = score_trajectory(traj, task, family, baselines, config.weights,
                                                            config.toggles.timing_reward, config.toggles.quality_reward);
                double reward = rb.composite;
                if (config.toggles.length_reward)
                    reward += config.length_weight *
                              std::min(1.0, static_cast<double>(traj.generated_count()) / config.max_len);
                rewards.push_back(reward);

                const int c = static_cast<int>(task.cls);
                aux_sum[c] += traj.aux_used() ? 1.0 : 0.0;
                acc_sum[c] += rb.r_acc;
                class_count[c] += 1;
                reward_sum += reward;
                ++natural_count;
            }
            GroupBatch gb;
            gb.group = &group;
            gb.task = &task;
            gb.advantages = advantages(rewards, config.eps_norm);
            for (double a : gb.advantages)
                abs_adv_sum += std::abs(a);
            batch.push_back(std::move(gb));
        }

        const PolicyParams old_snapshot = result.params;
        const SurrogateResult sur =
            surrogate_loss(result.params, old_snapshot, ref, batch, config.clip_eps, config.kl_beta);
        apply_update(adam, result.params, sur.grad, config.lr);

        report.mean_reward = natural_count ? reward_sum / natural_count : 0.0;
        report.mean_abs_advantage = natural_count ? abs_adv_sum / natural_count : 0.0;
        report.loss = sur.loss;
        report.kl_term = sur.mean_kl;
        double gn = 0.0;
        for (double g : sur.grad)
            gn += g * g;
        report.grad_norm = std::sqrt(gn);
        for (int c = 0; c < 3; ++c) {
            if (class_count[c] > 0) {
                report.aux_rate_by_class[c] = aux_sum[c] / class_count[c];
                report.acc_by_class[c] = acc_sum[c] / class_count[c];
            }
        }
        result.history.push_back(report);
    }
    return result;
}

// ---- ablation --------------------------------------------------------------

struct AblationRow {
    std::string variant;
    bool lr = false, tr = false, qr = false, vis = false;
    double accuracy = 0.0;
    double mean_ppl = 0.0;
    double timing_correctness = 0.0;
};

// The five component configurations, toggle layout {LR, TR, QR, Vis}.
inline std::vector<AblationRow> ablation_variants() {
    return {
        {"grpo", true, false, false, false, 0, 0, 0},
        {"grpo_no_lr", false, false, false, false, 0, 0, 0},
        {"a2po_tr", false, true, false, false, 0, 0, 0},
        {"a2po_tr_qr", false, true, true, false, 0, 0, 0},
        {"a2po_full", false, true, true, true, 0, 0, 0},
    };
}

// Runs every variant from the same warm start with shared task suites and
// seeds; only the documented toggles differ between rows.
inline std::vector<AblationRow> run_ablation(const TrainConfig& base_config, const std::vector<TaskInstance>& tasks,
                                             const std::vector<TaskInstance>& eval_tasks,
                                             const PolicyParams& warmstarted_params, const TaskFamily& family,
                                             const EvalSpec& eval_spec) {
    std::vector<AblationRow> rows = ablation_variants();
    for (AblationRow& row : rows) {
        TrainConfig config = base_config;
        config.toggles.length_reward = row.lr;
        config.toggles.timing_reward = row.tr;
        config.toggles.quality_reward = row.qr;
        config.toggles.visual_reprompt = row.vis;
        const TrainResult trained = train(config, tasks, warmstarted_params, family);
        EvalSpec spec = eval_spec;
        spec.reprompt_enabled = row.vis;
        const EvalReport report = evaluate(trained.params, eval_tasks, family, spec);
        row.accuracy = report.accuracy;
        row.mean_ppl = report.mean_ppl;
        row.timing_correctness = report.timing_correctness;
    }
    return rows;
}

}  // namespace a2po
