#pragma once

#include <cmath>
#include <stdexcept>

#include "a2po/tasks.hpp"
#include "a2po/trajectory.hpp"

namespace a2po {

struct RewardWeights {
    double w_acc = 0.70;
    double w_fmt = 0.00;
    double w_time = 0.15;
    double w_qual = 0.15;
    double tau = 0.15;        // timing significance margin
    double delta_tol = 0.01;  // PPL tolerance

    void validate() const {
        if (w_acc < 0 || w_fmt < 0 || w_time < 0 || w_qual < 0)
            throw std::invalid_argument("reward weights must be nonnegative");
        if (tau < 0)
            throw std::invalid_argument("tau must be nonnegative");
        if (delta_tol < 0)
            throw std::invalid_argument("delta_tol must be nonnegative");
    }
};

struct Baselines {
    double delta = 0.0;    // mean acc(O+) - mean acc(O-)
    double ppl_bar = 1.0;  // mean PPL over O+
};

struct RewardBreakdown {
    int r_acc = 0;
    int r_fmt = 0;
    int r_time = 0;
    int r_qual = 0;
    double composite = 0.0;
    double ppl = 1.0;
    bool aux_used = false;
};

inline int accuracy_reward(const Trajectory& traj, const TaskInstance& task, const TaskFamily& family) {
    return family.judge_answer(traj, task);
}

// 1 iff aux tokens (if any) form exactly one well-formed span, exactly one
// ANSWER_MARK is present, and the trajectory terminated with EOS rather
// than hitting the length cap.
inline int format_reward(const Trajectory& traj, const Vocabulary& vocab) {
    int opens = 0, closes = 0, marks = 0;
    int open_pos = -1, close_pos = -1;
    const TokenId open_id = vocab.role(Role::AuxOpen);
    const TokenId close_id = vocab.role(Role::AuxClose);
    const TokenId mark_id = vocab.role(Role::AnswerMark);
    for (int i = 0; i < static_cast<int>(traj.tokens.size()); ++i) {
        const TokenId t = traj.tokens[i];
        if (t == open_id) {
            ++opens;
            open_pos = i;
        } else if (t == close_id) {
            ++closes;
            close_pos = i;
        } else if (t == mark_id) {
            ++marks;
        }
    }
    const bool aux_ok = (opens == 0 && closes == 0) || (opens == 1 && closes == 1 && open_pos < close_pos);
    return (aux_ok && marks == 1 && !traj.truncated) ? 1 : 0;
}

// exp(mean negative logprob) over generated tokens only.
inline double ppl(const Trajectory& traj) {
    if (traj.logprobs.empty())
        throw std::invalid_argument("ppl requires at least one generated token");
    double sum = 0.0;
    for (double lp : traj.logprobs)
        sum += lp;
    return std::exp(-sum / static_cast<double>(traj.logprobs.size()));
}

inline Baselines compute_baselines(const RolloutGroup& group, const TaskInstance& task, const TaskFamily& family) {
    if (group.mandatory.empty() || group.prohibited.empty())
        throw std::invalid_argument("compute_baselines requires non-empty O+ and O- subsets");
    double acc_plus = 0.0, acc_minus = 0.0, ppl_plus = 0.0;
    for (const Trajectory& t : group.mandatory) {
        acc_plus += accuracy_reward(t, task, family);
        ppl_plus += ppl(t);
    }
    for (const Trajectory& t : group.prohibited)
        acc_minus += accuracy_reward(t, task, family);
    Baselines b;
    b.delta = acc_plus / group.mandatory.size() - acc_minus / group.prohibited.size();
    b.ppl_bar = ppl_plus / group.mandatory.size();
    return b;
}

// r_time = I_aux * (+1 if delta > tau, -1 if delta < -tau, 0 otherwise).
// Boundary cases fall in the 0 branch.
inline int timing_reward(bool aux_used, double delta, double tau) {
    if (!aux_used)
        return 0;
    if (delta > tau)
        return 1;
    if (delta < -tau)
        return -1;
    return 0;
}

// r_qual = I_aux * r_acc * I(ppl < ppl_bar + delta_tol), strict inequality.
inline int quality_reward(bool aux_used, int r_acc, double traj_ppl, double ppl_bar, double delta_tol) {
    return (aux_used && r_acc == 1 && traj_ppl < ppl_bar + delta_tol) ? 1 : 0;
}

inline double composite(int r_acc, int r_fmt, int r_time, int r_qual, const RewardWeights& w) {
    return w.w_acc * r_acc + w.w_fmt * r_fmt + w.w_time * r_time + w.w_qual * r_qual;
}

// Full breakdown for one natural trajectory. Timing/quality can be gated off
// for ablations; disabled components are zeroed before weighting.
inline RewardBreakdown score_trajectory(const Trajectory& traj, const TaskInstance& task, const TaskFamily& family,
                                        const Baselines& baselines, const RewardWeights& weights,
                                        bool enable_timing = true, bool enable_quality = true) {
    RewardBreakdown out;
    out.aux_used = traj.aux_used();
    out.r_acc = accuracy_reward(traj, task, family);
    out.r_fmt = format_reward(traj, family.vocab());
    out.ppl = ppl(traj);
    out.r_time = enable_timing ? timing_reward(out.aux_used, baselines.delta, weights.tau) : 0;
    out.r_qual = enable_quality ? quality_reward(out.aux_used, out.r_acc, out.ppl, baselines.ppl_bar, weights.delta_tol)
                                : 0;
    out.composite = composite(out.r_acc, out.r_fmt, out.r_time, out.r_qual, weights);
    return out;
}

}  // namespace a2po
